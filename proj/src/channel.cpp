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

#include "pcsc/channel.hpp"

#include <cmath>
#include <vector>

#include "pcsc/ops.hpp"

PCSC_BEGIN_NAMESPACE

void ChannelSpec::validate() const {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
    throw ConfigError("channel: snr_db must be finite or the +inf noiseless sentinel");
  if (kind == ChannelKind::kFlatFading && std::abs(h) == 0.0)
    throw ConfigError("channel: flat fading needs a non-zero coefficient h");
  if (!std::isfinite(h.real()) || !std::isfinite(h.imag())) throw ConfigError("channel: h must be finite");
}

std::string channel_kind_name(ChannelKind kind) {
  return kind == ChannelKind::kAwgn ? "awgn" : "flat_fading";
}

ChannelKind parse_channel_kind(const std::string& name) {
  if (name == "awgn") return ChannelKind::kAwgn;
  if (name == "flat_fading") return ChannelKind::kFlatFading;
  throw ConfigError("unknown channel kind '" + name + "'");
}

double frame_power(const Tensor& symbols, std::size_t b) {
  const std::size_t f = symbols.numel() / symbols.dim(0);
  double energy = 0;
  for (std::size_t i = 0; i < f; ++i) {
    const double v = symbols.data()[b * f + i];
    energy += v * v;
  }
  return energy / (static_cast<double>(f) / 2.0);
}

SymbolFrame normalize_power(const Tensor& symbols) {
  if (symbols.rank() != 3 || symbols.dim(2) != 2)
    throw ShapeError("normalize_power: expected [B, n_sym, 2], got " + shape_to_string(symbols.shape()));
  return SymbolFrame{ops::normalize_power(symbols), 1.0};
}

double snr_to_sigma2(double snr_db) {
  if (snr_db == kNoiselessSnr) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

SymbolFrame transmit(const SymbolFrame& x, const ChannelSpec& spec, std::span<const std::uint64_t> stream_ids,
                     bool strict) {
  spec.validate();
  const Tensor& sym = x.symbols;
  if (sym.rank() != 3 || sym.dim(2) != 2)
    throw ShapeError("transmit: expected [B, n_sym, 2], got " + shape_to_string(sym.shape()));
  const std::size_t frames = sym.dim(0);
  if (!stream_ids.empty() && stream_ids.size() != frames)
    throw ArgumentError("transmit: one stream id per frame required");
  if (strict)
    for (std::size_t b = 0; b < frames; ++b)
      if (std::abs(frame_power(sym, b) - 1.0) > 1e-4)
        throw ContractError("transmit: frame " + std::to_string(b) + " is not power-normalized");

  Tensor y = spec.kind == ChannelKind::kFlatFading ? ops::complex_scale(sym, spec.h) : sym;
  const double sigma2 = snr_to_sigma2(spec.snr_db);
  if (sigma2 > 0.0) {
    const std::size_t f = sym.numel() / frames;
    RealVector noise(sym.numel());
    std::normal_distribution<double> component(0.0, std::sqrt(sigma2 / 2.0));
    for (std::size_t b = 0; b < frames; ++b) {
      Rng rng = make_rng(spec.seed, {stream_ids.empty() ? b : stream_ids[b]});
      for (std::size_t i = 0; i < f; ++i) noise[b * f + i] = static_cast<Real>(component(rng));
    }
    y = ops::add(y, Tensor::from(sym.shape(), std::move(noise)));
  }
  if (spec.kind == ChannelKind::kFlatFading) y = ops::complex_scale(y, 1.0 / spec.h);
  return SymbolFrame{y, x.declared_power};
}

double sample_training_snr(Rng& rng) {
  return std::uniform_real_distribution<double>(kTrainingSnrMinDb, kTrainingSnrMaxDb)(rng);
}

PCSC_END_NAMESPACE
