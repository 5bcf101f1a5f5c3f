// Copyright (c) 2026 The pcsc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <bit>
#include <cstring>
#include <sstream>

#include "pcsc/dataset.hpp"
#include "pcsc/model.hpp"

PCSC_BEGIN_NAMESPACE

namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u32(std::uint32_t v) { integral(v); }
  void u64(std::uint64_t v) { integral(v); }
  void str32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void str64(std::string_view s) {
    u64(s.size());
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  template <typename T>
  void integral(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::string_view bytes(std::uint64_t n) {
    if (n > in_.size() - pos_) throw FormatError("checkpoint: truncated file");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() { return integral<std::uint32_t>(); }
  std::uint64_t u64() { return integral<std::uint64_t>(); }
  std::string str32() { return std::string(bytes(u32())); }
  std::string str64() { return std::string(bytes(u64())); }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  template <typename T>
  T integral() {
    auto raw = bytes(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(raw[i])) << (8 * i);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

template <typename Bits, typename Float>
void append_values(std::string& out, std::span<const Real> values) {
  for (Real v : values) {
    const Bits bits = std::bit_cast<Bits>(static_cast<Float>(v));
    for (std::size_t i = 0; i < sizeof(Bits); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

template <typename Bits, typename Float>
RealVector read_values(std::string_view raw, std::size_t count) {
  RealVector values(count);
  for (std::size_t k = 0; k < count; ++k) {
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(Bits); ++i)
      bits |= static_cast<Bits>(static_cast<unsigned char>(raw[k * sizeof(Bits) + i])) << (8 * i);
    values[k] = static_cast<Real>(std::bit_cast<Float>(bits));
  }
  return values;
}

}  // namespace

Checkpoint Checkpoint::capture(const Model& model, TrainingStage stage, const Rng* rng) {
  Checkpoint ck;
  ck.config = model.config();
  ck.stage = stage;
  if (rng) {
    std::ostringstream ss;
    ss << *rng;
    ck.rng_state = ss.str();
  }
  for (const ParameterSet* set : {&model.parameters(), &model.buffers()})
    for (const auto& [name, t] : set->entries())
      ck.tensors.push_back({name, t.shape(), RealVector(t.data().begin(), t.data().end())});
  return ck;
}

Model Checkpoint::restore() const {
  Model model(config, 0);
  std::size_t matched = 0;
  for (ParameterSet* set : {&model.parameters(), &model.buffers()})
    for (auto& [name, t] : set->entries()) {
      auto it = std::find_if(tensors.begin(), tensors.end(), [&](const Entry& e) { return e.name == name; });
      if (it == tensors.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
      if (it->shape != t.shape())
        throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_to_string(it->shape) +
                          ", model expects " + shape_to_string(t.shape()));
      std::copy(it->values.begin(), it->values.end(), t.data().begin());
      ++matched;
    }
  if (matched != tensors.size()) throw FormatError("checkpoint: contains tensors the model does not define");
  return model;
}

void Checkpoint::restore_rng(Rng& rng) const {
  if (rng_state.empty()) return;
  std::istringstream ss(rng_state);
  ss >> rng;
  if (!ss) throw FormatError("checkpoint: corrupt RNG state");
}

std::string Checkpoint::to_bytes() const {
  Writer w;
  w.bytes("PCCK");
  w.u32(kVersion);
  w.u32(sizeof(Real));
  w.str32(stage_name(stage));
  w.str64(config.to_json());
  w.str64(rng_state);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& e : tensors) {
    w.str32(e.name);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto dim : e.shape) w.u64(dim);
    w.u64(offset);
    offset += e.values.size() * sizeof(Real);
  }
  std::string out = w.take();
  out.reserve(out.size() + offset);
  for (const auto& e : tensors) {
    if constexpr (sizeof(Real) == 4)
      append_values<std::uint32_t, float>(out, e.values);
    else
      append_values<std::uint64_t, double>(out, e.values);
  }
  return out;
}

Checkpoint Checkpoint::from_bytes(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != "PCCK") throw FormatError("checkpoint: bad magic");
  if (const auto v = r.u32(); v != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(v));
  const std::uint32_t element = r.u32();
  if (element != 4 && element != 8) throw FormatError("checkpoint: unsupported element size");
  Checkpoint ck;
  ck.stage = parse_stage_name(r.str32());
  ck.config = ModelConfig::from_json(r.str64());
  ck.rng_state = r.str64();
  const std::uint32_t count = r.u32();
  struct Dir {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Dir> dir;
  for (std::uint32_t i = 0; i < count; ++i) {
    Dir d;
    d.name = r.str32();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint: tensor rank too large");
    for (std::uint32_t k = 0; k < rank; ++k) d.shape.push_back(r.u64());
    d.offset = r.u64();
    dir.push_back(std::move(d));
  }
  const std::string_view data = bytes.substr(r.position());
  std::uint64_t expected = 0;
  for (const auto& d : dir) {
    const std::uint64_t n = shape_numel(d.shape);
    if (d.offset != expected || n > (data.size() - d.offset) / element)
      throw FormatError("checkpoint: tensor '" + d.name + "' lies outside the data block");
    const std::string_view raw = data.substr(d.offset, n * element);
    Entry e{d.name, d.shape, element == 4 ? read_values<std::uint32_t, float>(raw, n)
                                          : read_values<std::uint64_t, double>(raw, n)};
    ck.tensors.push_back(std::move(e));
    expected += n * element;
  }
  if (expected != data.size()) throw FormatError("checkpoint: trailing bytes after the data block");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file(path, to_bytes()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return from_bytes(read_file(path)); }

PCSC_END_NAMESPACE
