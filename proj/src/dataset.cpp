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

#include "pcsc/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pcsc/random.hpp"

PCSC_BEGIN_NAMESPACE

namespace {

using Vec3 = std::array<double, 3>;

// Yields comment-stripped, non-blank lines with their 1-based numbers.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::vector<std::string_view>& tokens) {
    while (pos_ < text_.size()) {
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string_view::npos)
        line = line.substr(0, hash);
      tokens.clear();
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) tokens.push_back(line.substr(start, i - start));
      }
      if (!tokens.empty()) return true;
    }
    return false;
  }

  std::size_t line() const noexcept { return line_no_; }

 private:
  static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f';
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

std::uint64_t parse_count(std::string_view tok, std::size_t line,
                          const char* what) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError(line, std::string("invalid ") + what + " '" +
                               std::string(tok) + "'");
  return value;
}

float parse_coordinate(std::string_view tok, std::size_t line) {
  double value = 0.0;
  const char* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), value);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw ParseError(line, "non-numeric coordinate '" + std::string(tok) + "'");
  const auto f = static_cast<float>(value);
  if (!std::isfinite(value) || !std::isfinite(f))
    throw ParseError(line, "non-finite coordinate '" + std::string(tok) + "'");
  return f;
}

Vec3 sub(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
          a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) {
  return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
}

Vec3 to_vec(const Point3& p) { return {p[0], p[1], p[2]}; }

constexpr double kPi = std::numbers::pi;

// Surface samplers. Each draws one point on a shape with fixed parameters.
struct ShapeSampler {
  ShapeClass shape;
  bool symmetric;  // invariant under p -> -p about the origin
  double a = 1.0;  // shape-specific parameters drawn per sample
  double b = 1.0;

  Vec3 sample(Rng& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    switch (shape) {
      case ShapeClass::kSphere: {
        Vec3 v;
        double n = 0.0;
        do {
          v = {gauss(rng), gauss(rng), gauss(rng)};
          n = norm(v);
        } while (n < 1e-12);
        return {v[0] / n, v[1] / n, v[2] / n};
      }
      case ShapeClass::kCube: {
        const int axis = std::uniform_int_distribution<int>(0, 2)(rng);
        const double sign = u01(rng) < 0.5 ? -1.0 : 1.0;
        Vec3 v{2.0 * u01(rng) - 1.0, 2.0 * u01(rng) - 1.0,
               2.0 * u01(rng) - 1.0};
        v[axis] = sign;
        return v;
      }
      case ShapeClass::kCylinder: {
        // radius 1, half-height a; lateral surface plus both caps
        const double side = 2.0 * kPi * 2.0 * a;
        const double caps = 2.0 * kPi;
        const double theta = 2.0 * kPi * u01(rng);
        if (u01(rng) * (side + caps) < side)
          return {std::cos(theta), std::sin(theta), a * (2.0 * u01(rng) - 1.0)};
        const double r = std::sqrt(u01(rng));
        return {r * std::cos(theta), r * std::sin(theta),
                u01(rng) < 0.5 ? -a : a};
      }
      case ShapeClass::kCone: {
        // base radius 1 at z = 0, apex at z = a
        const double slant = std::sqrt(1.0 + a * a);
        const double lateral = kPi * slant;
        const double base = kPi;
        const double theta = 2.0 * kPi * u01(rng);
        const double r = std::sqrt(u01(rng));
        if (u01(rng) * (lateral + base) < lateral)
          return {r * std::cos(theta), r * std::sin(theta), a * (1.0 - r)};
        return {r * std::cos(theta), r * std::sin(theta), 0.0};
      }
      case ShapeClass::kTorus: {
        // major radius 1, minor radius a; rejection on the area element
        for (;;) {
          const double theta = 2.0 * kPi * u01(rng);
          const double phi = 2.0 * kPi * u01(rng);
          const double w = (1.0 + a * std::cos(phi)) / (1.0 + a);
          if (u01(rng) <= w) {
            const double ring = 1.0 + a * std::cos(phi);
            return {ring * std::cos(theta), ring * std::sin(theta),
                    a * std::sin(phi)};
          }
        }
      }
      case ShapeClass::kPlane:
        return {2.0 * u01(rng) - 1.0, a * (2.0 * u01(rng) - 1.0), 0.0};
      case ShapeClass::kTwoSpheres: {
        // radius 0.5 spheres centered at (+-a, 0, 0)
        Vec3 v;
        double n = 0.0;
        do {
          v = {gauss(rng), gauss(rng), gauss(rng)};
          n = norm(v);
        } while (n < 1e-12);
        const double cx = u01(rng) < 0.5 ? -a : a;
        return {cx + 0.5 * v[0] / n, 0.5 * v[1] / n, 0.5 * v[2] / n};
      }
      case ShapeClass::kHelix: {
        // a turns of radius 1 over height 2, tube radius 0.08
        const double t = u01(rng);
        const double angle = 2.0 * kPi * a * t;
        const double tube = 0.08 * std::sqrt(u01(rng));
        const double off = 2.0 * kPi * u01(rng);
        return {std::cos(angle) + tube * std::cos(off),
                std::sin(angle) + tube * std::sin(off),
                2.0 * t - 1.0 + tube * std::sin(off + 1.0)};
      }
    }
    return {0.0, 0.0, 0.0};
  }
};

ShapeSampler make_sampler(int class_id, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  ShapeSampler s{static_cast<ShapeClass>(class_id), true};
  switch (s.shape) {
    case ShapeClass::kSphere:
    case ShapeClass::kCube:
      break;
    case ShapeClass::kCylinder:
      s.a = 1.4 + 0.8 * u01(rng);
      break;
    case ShapeClass::kCone:
      s.symmetric = false;
      s.a = 1.0 + 1.0 * u01(rng);
      break;
    case ShapeClass::kTorus:
      s.a = 0.25 + 0.2 * u01(rng);
      break;
    case ShapeClass::kPlane:
      s.a = 0.5 + 0.5 * u01(rng);
      break;
    case ShapeClass::kTwoSpheres:
      s.a = 0.7 + 0.3 * u01(rng);
      break;
    case ShapeClass::kHelix:
      s.symmetric = false;
      s.a = 2.0 + u01(rng);
      break;
  }
  return s;
}

nlohmann::json manifest_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["format"] = "pcsc-manifest";
  j["version"] = 1;
  j["num_classes"] = m.num_classes;
  j["class_names"] = m.class_names;
  j["points_per_cloud"] = m.points_per_cloud;
  j["seed"] = m.seed;
  j["jitter_sigma"] = m.jitter_sigma;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples)
    samples.push_back({{"id", s.id}, {"label", s.label}});
  j["samples"] = std::move(samples);
  j["splits"] = {{"train", m.train}, {"test", m.test}};
  return j;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i]))
         << (8 * i);
  return v;
}

}  // namespace

OffMesh parse_off_mesh(std::string_view text) {
  LineReader reader(text);
  std::vector<std::string_view> tokens;
  if (!reader.next(tokens)) throw ParseError(reader.line(), "empty input, expected OFF header");
  if (tokens[0].substr(0, 3) != "OFF")
    throw ParseError(reader.line(), "missing OFF header");

  // Counts may follow the keyword on the same line, even glued to it
  // ("OFF490 518 0" occurs in the wild).
  std::vector<std::string_view> counts;
  if (tokens[0].size() > 3) counts.push_back(tokens[0].substr(3));
  counts.insert(counts.end(), tokens.begin() + 1, tokens.end());
  std::size_t count_line = reader.line();
  if (counts.empty()) {
    if (!reader.next(tokens)) throw ParseError(reader.line(), "missing vertex/face counts");
    counts = tokens;
    count_line = reader.line();
  }
  if (counts.size() < 2 || counts.size() > 3)
    throw ParseError(count_line, "expected 'vertices faces [edges]' counts");
  const std::uint64_t n_vertices = parse_count(counts[0], count_line, "vertex count");
  const std::uint64_t n_faces = parse_count(counts[1], count_line, "face count");
  if (counts.size() == 3) parse_count(counts[2], count_line, "edge count");
  if (n_vertices == 0) throw ParseError(count_line, "OFF file declares no vertices");

  OffMesh mesh;
  for (std::uint64_t i = 0; i < n_vertices; ++i) {
    if (!reader.next(tokens))
      throw ParseError(reader.line(), "vertex block ended after " + std::to_string(i) +
                                          " of " + std::to_string(n_vertices) + " vertices");
    if (tokens.size() < 3) throw ParseError(reader.line(), "vertex line needs 3 coordinates");
    mesh.vertices.push_back({parse_coordinate(tokens[0], reader.line()),
                             parse_coordinate(tokens[1], reader.line()),
                             parse_coordinate(tokens[2], reader.line())});
  }
  for (std::uint64_t f = 0; f < n_faces; ++f) {
    if (!reader.next(tokens))
      throw ParseError(reader.line(), "face block ended after " + std::to_string(f) +
                                          " of " + std::to_string(n_faces) + " faces");
    const std::uint64_t arity = parse_count(tokens[0], reader.line(), "face arity");
    if (arity < 3 || tokens.size() < arity + 1)
      throw ParseError(reader.line(), "face line has too few vertex indices");
    std::vector<std::uint32_t> face;
    face.reserve(arity);
    for (std::uint64_t k = 0; k < arity; ++k) {
      const std::uint64_t idx = parse_count(tokens[k + 1], reader.line(), "vertex index");
      if (idx >= n_vertices) throw ParseError(reader.line(), "vertex index out of range");
      face.push_back(static_cast<std::uint32_t>(idx));
    }
    mesh.faces.push_back(std::move(face));
  }
  if (reader.next(tokens))
    throw ParseError(reader.line(), "unexpected data after declared vertices and faces");
  return mesh;
}

PointCloud parse_off(std::string_view text) {
  return PointCloud{parse_off_mesh(text).vertices, std::nullopt};
}

std::string serialize_off(const PointCloud& cloud) {
  std::string out = "OFF\n" + std::to_string(cloud.size()) + " 0 0\n";
  char buf[64];
  for (const auto& p : cloud.points) {
    for (int c = 0; c < 3; ++c) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), p[c]);
      out.append(buf, ptr);
      out.push_back(c == 2 ? '\n' : ' ');
    }
  }
  return out;
}

PointCloud sample_mesh_surface(const OffMesh& mesh, std::size_t n_points,
                               std::uint64_t seed) {
  if (mesh.vertices.empty()) throw ArgumentError("mesh has no vertices");
  Rng rng = make_rng(seed, {0x5u});
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  struct Tri {
    std::uint32_t a, b, c;
  };
  std::vector<Tri> tris;
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& face : mesh.faces) {
    for (std::size_t k = 1; k + 1 < face.size(); ++k) {
      const Tri t{face[0], face[k], face[k + 1]};
      const Vec3 a = to_vec(mesh.vertices[t.a]);
      const double area =
          0.5 * norm(cross(sub(to_vec(mesh.vertices[t.b]), a), sub(to_vec(mesh.vertices[t.c]), a)));
      if (area <= 0.0) continue;
      total += area;
      tris.push_back(t);
      cumulative.push_back(total);
    }
  }
  PointCloud cloud;
  cloud.points.reserve(n_points);
  if (tris.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, mesh.vertices.size() - 1);
    for (std::size_t i = 0; i < n_points; ++i) cloud.points.push_back(mesh.vertices[pick(rng)]);
    return cloud;
  }
  for (std::size_t i = 0; i < n_points; ++i) {
    const double r = u01(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    if (it == cumulative.end()) --it;
    const Tri& t = tris[static_cast<std::size_t>(it - cumulative.begin())];
    const double s = std::sqrt(u01(rng));
    const double v = u01(rng);
    const double wa = 1.0 - s, wb = s * (1.0 - v), wc = s * v;
    Point3 p;
    for (int c = 0; c < 3; ++c)
      p[c] = static_cast<float>(wa * mesh.vertices[t.a][c] + wb * mesh.vertices[t.b][c] +
                                wc * mesh.vertices[t.c][c]);
    cloud.points.push_back(p);
  }
  return cloud;
}

std::string_view shape_class_name(int class_id) {
  static constexpr std::array<std::string_view, kNumShapeClasses> kNames = {
      "sphere", "cube", "cylinder", "cone", "torus", "plane", "two_spheres", "helix"};
  if (class_id < 0 || class_id >= kNumShapeClasses)
    throw ConfigError("unknown shape class " + std::to_string(class_id));
  return kNames[static_cast<std::size_t>(class_id)];
}

PointCloud generate_synthetic(int class_id, std::size_t n_points,
                              std::uint64_t seed, double jitter_sigma) {
  if (class_id < 0 || class_id >= kNumShapeClasses)
    throw ConfigError("unknown shape class " + std::to_string(class_id));
  if (n_points < 8) throw ConfigError("synthetic clouds need at least 8 points");
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma))
    throw ConfigError("jitter sigma must be finite and non-negative");

  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(class_id), n_points});
  const ShapeSampler sampler = make_sampler(class_id, rng);

  std::vector<Vec3> raw;
  raw.reserve(n_points);
  while (raw.size() < n_points) {
    const Vec3 p = sampler.sample(rng);
    raw.push_back(p);
    if (sampler.symmetric && raw.size() < n_points) raw.push_back({-p[0], -p[1], -p[2]});
  }
  if (jitter_sigma > 0.0) {
    std::normal_distribution<double> jitter(0.0, jitter_sigma);
    for (auto& p : raw)
      for (auto& c : p) c += jitter(rng);
  }

  // Normalize in double before rounding to float.
  Vec3 centroid{0.0, 0.0, 0.0};
  for (const auto& p : raw)
    for (int c = 0; c < 3; ++c) centroid[c] += p[c];
  for (auto& c : centroid) c /= static_cast<double>(raw.size());
  double max_norm = 0.0;
  for (auto& p : raw) {
    p = sub(p, centroid);
    max_norm = std::max(max_norm, norm(p));
  }
  PointCloud cloud;
  cloud.label = class_id;
  cloud.points.reserve(raw.size());
  for (const auto& p : raw)
    cloud.points.push_back({static_cast<float>(p[0] / max_norm), static_cast<float>(p[1] / max_norm),
                            static_cast<float>(p[2] / max_norm)});
  return cloud;
}

PointCloud normalize_unit_sphere(PointCloud cloud) {
  if (cloud.points.empty()) throw ArgumentError("cannot normalize an empty point cloud");
  for (const auto& p : cloud.points)
    for (float c : p)
      if (!std::isfinite(c)) throw ArgumentError("point cloud has a non-finite coordinate");
  const bool all_same = std::all_of(cloud.points.begin(), cloud.points.end(),
                                    [&](const Point3& p) { return p == cloud.points.front(); });
  if (all_same) throw DegenerateInputError("all points coincide; scale is zero");

  Vec3 centroid{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points)
    for (int c = 0; c < 3; ++c) centroid[c] += p[c];
  for (auto& c : centroid) c /= static_cast<double>(cloud.size());
  double max_norm = 0.0;
  for (const auto& p : cloud.points) max_norm = std::max(max_norm, norm(sub(to_vec(p), centroid)));
  if (!(max_norm > 0.0)) throw DegenerateInputError("point cloud has zero extent");
  for (auto& p : cloud.points)
    for (int c = 0; c < 3; ++c) p[c] = static_cast<float>((p[c] - centroid[c]) / max_norm);
  return cloud;
}

void DatasetManifest::validate() const {
  if (num_classes <= 0) throw ConfigError("manifest: num_classes must be positive");
  if (class_names.size() != static_cast<std::size_t>(num_classes))
    throw ConfigError("manifest: class_names does not match num_classes");
  if (points_per_cloud == 0) throw ConfigError("manifest: points_per_cloud must be positive");
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= num_classes)
      throw ConfigError("manifest: sample '" + s.id + "' has label out of range");
    if (!ids.insert(s.id).second) throw ConfigError("manifest: duplicate sample id '" + s.id + "'");
  }
  std::set<std::string> train_ids;
  for (const auto& id : train) {
    if (!ids.count(id)) throw ConfigError("manifest: unknown train id '" + id + "'");
    if (!train_ids.insert(id).second) throw ConfigError("manifest: duplicate train id '" + id + "'");
  }
  std::set<std::string> test_ids;
  for (const auto& id : test) {
    if (!ids.count(id)) throw ConfigError("manifest: unknown test id '" + id + "'");
    if (train_ids.count(id)) throw ConfigError("manifest: train/test overlap on '" + id + "'");
    if (!test_ids.insert(id).second) throw ConfigError("manifest: duplicate test id '" + id + "'");
  }
}

int DatasetManifest::label_of(const std::string& id) const {
  for (const auto& s : samples)
    if (s.id == id) return s.label;
  throw ConfigError("manifest: unknown sample id '" + id + "'");
}

DatasetManifest make_manifest(const SyntheticConfig& config) {
  if (config.num_classes <= 0 || config.num_classes > kNumShapeClasses)
    throw ConfigError("synthetic datasets support 1.." + std::to_string(kNumShapeClasses) +
                      " classes");
  if (config.num_train + config.num_test == 0) throw ConfigError("dataset would be empty");
  if (config.points_per_cloud < 8) throw ConfigError("points_per_cloud must be at least 8");

  DatasetManifest m;
  m.num_classes = config.num_classes;
  for (int c = 0; c < config.num_classes; ++c) m.class_names.emplace_back(shape_class_name(c));
  m.points_per_cloud = config.points_per_cloud;
  m.seed = config.seed;
  m.jitter_sigma = config.jitter_sigma;

  const std::size_t total = config.num_train + config.num_test;
  const auto classes = static_cast<std::size_t>(config.num_classes);
  char buf[32];
  for (std::size_t i = 0; i < total; ++i) {
    std::snprintf(buf, sizeof(buf), "s%05zu", i);
    m.samples.push_back({buf, static_cast<int>(i % classes)});
  }

  Rng rng = make_rng(config.seed, {0x5B117u});
  std::vector<std::size_t> train_idx, test_idx;
  if (config.num_train % classes == 0 && config.num_test % classes == 0) {
    const std::size_t train_per_class = config.num_train / classes;
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = c; i < total; i += classes) members.push_back(i);
      std::shuffle(members.begin(), members.end(), rng);
      train_idx.insert(train_idx.end(), members.begin(), members.begin() + train_per_class);
      test_idx.insert(test_idx.end(), members.begin() + train_per_class, members.end());
    }
  } else {
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    train_idx.assign(order.begin(), order.begin() + config.num_train);
    test_idx.assign(order.begin() + config.num_train, order.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  for (auto i : train_idx) m.train.push_back(m.samples[i].id);
  for (auto i : test_idx) m.test.push_back(m.samples[i].id);
  m.validate();
  return m;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
  return manifest_json(manifest).dump(2) + "\n";
}

DatasetManifest manifest_from_json(std::string_view text) {
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "pcsc-manifest") throw FormatError("not a pcsc manifest");
    if (j.at("version").get<int>() != 1) throw FormatError("unsupported manifest version");
    m.num_classes = j.at("num_classes").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.points_per_cloud = j.at("points_per_cloud").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.jitter_sigma = j.value("jitter_sigma", 0.0);
    for (const auto& s : j.at("samples"))
      m.samples.push_back({s.at("id").get<std::string>(), s.at("label").get<int>()});
    m.train = j.at("splits").at("train").get<std::vector<std::string>>();
    m.test = j.at("splits").at("test").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

std::string encode_sample(const PointCloud& cloud) {
  std::string out = "PCSC";
  put_u32(out, kSampleFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(cloud.size()));
  put_u32(out, static_cast<std::uint32_t>(cloud.label.value_or(-1)));
  out.reserve(16 + 12 * cloud.size());
  for (const auto& p : cloud.points)
    for (float c : p) put_u32(out, std::bit_cast<std::uint32_t>(c));
  return out;
}

PointCloud decode_sample(std::string_view bytes) {
  if (bytes.size() < 16 || bytes.substr(0, 4) != "PCSC") throw FormatError("sample: bad magic");
  if (get_u32(bytes, 4) != kSampleFormatVersion) throw FormatError("sample: unsupported version");
  const std::uint32_t count = get_u32(bytes, 8);
  const auto label = static_cast<std::int32_t>(get_u32(bytes, 12));
  if (count == 0) throw FormatError("sample: empty point cloud");
  if (bytes.size() != 16 + 12 * static_cast<std::size_t>(count))
    throw FormatError("sample: size does not match point count");
  if (label < -1) throw FormatError("sample: invalid label");
  PointCloud cloud;
  if (label >= 0) cloud.label = label;
  cloud.points.resize(count);
  std::size_t offset = 16;
  for (auto& p : cloud.points)
    for (auto& c : p) {
      c = std::bit_cast<float>(get_u32(bytes, offset));
      offset += 4;
      if (!std::isfinite(c)) throw FormatError("sample: non-finite coordinate");
    }
  return cloud;
}

Dataset generate_dataset(const SyntheticConfig& config) {
  Dataset ds;
  ds.manifest = make_manifest(config);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ds.manifest.samples.size(); ++i) index[ds.manifest.samples[i].id] = i;
  auto make = [&](const std::string& id) {
    const std::size_t i = index.at(id);
    return generate_synthetic(ds.manifest.samples[i].label, config.points_per_cloud,
                              derive_seed(config.seed, {i}), config.jitter_sigma);
  };
  for (const auto& id : ds.manifest.train) ds.train.push_back(make(id));
  for (const auto& id : ds.manifest.test) ds.test.push_back(make(id));
  return ds;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.manifest.validate();
  if (dataset.train.size() != dataset.manifest.train.size() ||
      dataset.test.size() != dataset.manifest.test.size())
    throw ConfigError("dataset contents do not match the manifest splits");
  std::filesystem::create_directories(dir / "samples");
  write_file(dir / "manifest.json", manifest_to_json(dataset.manifest));
  auto emit = [&](const std::vector<std::string>& ids, const std::vector<PointCloud>& clouds) {
    for (std::size_t i = 0; i < ids.size(); ++i)
      write_file(dir / "samples" / (ids[i] + ".pcsc"), encode_sample(clouds[i]));
  };
  emit(dataset.manifest.train, dataset.train);
  emit(dataset.manifest.test, dataset.test);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = manifest_from_json(read_file(dir / "manifest.json"));
  std::map<std::string, int> labels;
  for (const auto& s : ds.manifest.samples) labels[s.id] = s.label;
  auto load = [&](const std::vector<std::string>& ids, std::vector<PointCloud>& out) {
    for (const auto& id : ids) {
      PointCloud cloud = decode_sample(read_file(dir / "samples" / (id + ".pcsc")));
      if (cloud.label != labels.at(id))
        throw FormatError("sample '" + id + "' label disagrees with the manifest");
      if (cloud.size() != ds.manifest.points_per_cloud)
        throw FormatError("sample '" + id + "' has " + std::to_string(cloud.size()) + " points");
      out.push_back(std::move(cloud));
    }
  };
  load(ds.manifest.train, ds.train);
  load(ds.manifest.test, ds.test);
  return ds;
}

Dataset import_off_tree(const std::filesystem::path& root, std::size_t points_per_cloud,
                        std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw ConfigError("'" + root.string() + "' is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw ConfigError("no class directories under '" + root.string() + "'");

  Dataset ds;
  ds.manifest.num_classes = static_cast<int>(class_dirs.size());
  ds.manifest.points_per_cloud = points_per_cloud;
  ds.manifest.seed = seed;
  std::uint64_t counter = 0;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    ds.manifest.class_names.push_back(class_dirs[c].filename().string());
    for (const char* split : {"train", "test"}) {
      const fs::path dir = class_dirs[c] / split;
      if (!fs::is_directory(dir)) continue;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".off") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        PointCloud cloud;
        try {
          cloud = normalize_unit_sphere(
              sample_mesh_surface(parse_off_mesh(read_file(f)), points_per_cloud,
                                  derive_seed(seed, {counter++})));
        } catch (const ParseError& e) {
          throw ParseError(e.line(), f.string() + ": " + e.what());
        }
        cloud.label = static_cast<int>(c);
        const std::string id = class_dirs[c].filename().string() + "_" + split + "_" + f.stem().string();
        ds.manifest.samples.push_back({id, static_cast<int>(c)});
        if (std::string_view(split) == "train") {
          ds.manifest.train.push_back(id);
          ds.train.push_back(std::move(cloud));
        } else {
          ds.manifest.test.push_back(id);
          ds.test.push_back(std::move(cloud));
        }
      }
    }
  }
  ds.manifest.validate();
  return ds;
}

PCSC_END_NAMESPACE
