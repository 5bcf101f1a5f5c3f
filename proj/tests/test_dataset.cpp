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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "pcsc/dataset.hpp"
#include "support/fuzz.hpp"
#include "support/temp_dir.hpp"

using namespace pcsc;
using namespace pcsc::testing;

namespace {

double max_norm(const PointCloud& c) {
  double m = 0;
  for (const auto& p : c.points) m = std::max(m, std::sqrt(double(p[0]) * p[0] + double(p[1]) * p[1] + double(p[2]) * p[2]));
  return m;
}

std::array<double, 3> centroid(const PointCloud& c) {
  std::array<double, 3> s{};
  for (const auto& p : c.points)
    for (int a = 0; a < 3; ++a) s[a] += p[a];
  for (auto& v : s) v /= static_cast<double>(c.size());
  return s;
}

}  // namespace

TEST_CASE("minimal OFF triangle") {
  const PointCloud c = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  REQUIRE(c.size() == 3);
  CHECK(c.points[1] == Point3{1, 0, 0});
  CHECK_FALSE(c.label.has_value());
}

TEST_CASE("OFF with comments, blank lines and color columns") {
  const PointCloud c = parse_off("# mesh\nOFF\n\n2 0 0\n1 2 3 255 0 0\n# note\n4 5 6\n");
  REQUIRE(c.size() == 2);
  CHECK(c.points[1] == Point3{4, 5, 6});
}

TEST_CASE("header glued to the counts, as in some ModelNet files") {
  const PointCloud c = parse_off("OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n");
  CHECK(c.size() == 3);
}

TEST_CASE("truncated vertex block names the line") {
  try {
    parse_off("OFF\n4 0 0\n0 0 0\n1 0 0\n0 1 0\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("vertex block") != std::string::npos);
    CHECK(e.line() >= 5);
  }
}

TEST_CASE("OFF error cases") {
  CHECK_THROWS_AS(parse_off(""), ParseError);
  CHECK_THROWS_AS(parse_off("PLY\n1 0 0\n0 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\nx 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n0 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n1 0 0\n0 zero 0\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n1 0 0\n0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n1 1 0\n0 0 0\n3 0 1 2\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n1 0 0\n0 0 0\n9 9 9\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n1 0 0\nnan 0 0\n"), ParseError);
  try {
    parse_off("OFF\n2 0 0\n1 2 3\n1 2 q\n");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
}

TEST_CASE("parse(serialize(parse(file))) == parse(file) on random OFF files") {
  Rng rng(31);
  for (int i = 0; i < 300; ++i) {
    const PointCloud a = parse_off(random_off(rng));
    CHECK(parse_off(serialize_off(a)) == a);
  }
}

TEST_CASE("OFF fuzz never fails outside ParseError") {
  const FuzzStats s = run_off_fuzz(5, 2000);
  CHECK(s.other_failures == 0);
  CHECK(s.parsed > 0);
  CHECK(s.parse_errors > 0);
}

TEST_CASE("mesh surface sampling stays on the faces") {
  const OffMesh mesh = parse_off_mesh("OFF\n4 1 0\n0 0 0\n2 0 0\n2 1 0\n0 1 0\n4 0 1 2 3\n");
  const PointCloud c = sample_mesh_surface(mesh, 500, 3);
  REQUIRE(c.size() == 500);
  for (const auto& p : c.points) {
    CHECK(p[2] == 0.0f);
    CHECK(p[0] >= 0.0f);
    CHECK(p[0] <= 2.0f);
    CHECK(p[1] >= 0.0f);
    CHECK(p[1] <= 1.0f);
  }
  CHECK(sample_mesh_surface(mesh, 50, 9) == sample_mesh_surface(mesh, 50, 9));
}

TEST_CASE("synthetic sphere lies on the unit sphere") {
  const PointCloud c = generate_synthetic(static_cast<int>(ShapeClass::kSphere), 256, 7, 0.0);
  REQUIRE(c.size() == 256);
  for (const auto& p : c.points) CHECK(std::abs(std::sqrt(double(p[0]) * p[0] + double(p[1]) * p[1] + double(p[2]) * p[2]) - 1.0) < 1e-6);
}

TEST_CASE("synthetic cube points lie on a face") {
  const PointCloud c = generate_synthetic(static_cast<int>(ShapeClass::kCube), 256, 1, 0.0);
  double half = 0;
  for (const auto& p : c.points)
    for (float v : p) half = std::max(half, std::abs(double(v)));
  for (const auto& p : c.points) {
    double m = 0;
    for (float v : p) m = std::max(m, std::abs(double(v)));
    CHECK(std::abs(m - half) < 1e-6);
  }
}

TEST_CASE("synthetic generation is deterministic and normalized for every class") {
  for (int k = 0; k < kNumShapeClasses; ++k) {
    const PointCloud a = generate_synthetic(k, 64, 11, 0.01);
    CHECK(a == generate_synthetic(k, 64, 11, 0.01));
    CHECK_FALSE(a == generate_synthetic(k, 64, 12, 0.01));
    CHECK(std::abs(max_norm(a) - 1.0) < 1e-6);
    for (double v : centroid(a)) CHECK(std::abs(v) < 1e-6);
  }
  CHECK_THROWS_AS(generate_synthetic(8, 64, 1, 0.0), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(-1, 64, 1, 0.0), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(0, 4, 1, 0.0), ConfigError);
}

TEST_CASE("normalize_unit_sphere") {
  SUBCASE("idempotent on centered unit data") {
    PointCloud c{{{1, 0, 0}, {-1, 0, 0}, {0, 0.5f, 0}, {0, -0.5f, 0}}, 2};
    const PointCloud n = normalize_unit_sphere(c);
    for (std::size_t i = 0; i < c.size(); ++i)
      for (int a = 0; a < 3; ++a) CHECK(std::abs(double(n.points[i][a]) - c.points[i][a]) <= 1e-9);
    CHECK(n.label == 2);
  }
  SUBCASE("repeated point is degenerate") {
    PointCloud c{std::vector<Point3>(5, Point3{1, 2, 3}), {}};
    CHECK_THROWS_AS(normalize_unit_sphere(c), DegenerateInputError);
  }
  SUBCASE("random clouds end centered with unit radius") {
    Rng rng(8);
    std::normal_distribution<double> nd(3.0, 4.0);
    for (int t = 0; t < 50; ++t) {
      PointCloud c;
      for (int i = 0; i < 100; ++i)
        c.points.push_back({float(nd(rng)), float(nd(rng)), float(nd(rng))});
      const PointCloud n = normalize_unit_sphere(c);
      for (double v : centroid(n)) CHECK(std::abs(v) < 1e-6);
      CHECK(std::abs(max_norm(n) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("manifest is balanced, disjoint and stratified") {
  const DatasetManifest m = make_manifest(SyntheticConfig{});
  CHECK(m.train.size() == 512);
  CHECK(m.test.size() == 128);
  std::vector<int> train(8), test(8);
  for (const auto& id : m.train) ++train[m.label_of(id)];
  for (const auto& id : m.test) ++test[m.label_of(id)];
  for (int k = 0; k < 8; ++k) {
    CHECK(train[k] == 64);
    CHECK(test[k] == 16);
  }
  std::set<std::string> ids(m.train.begin(), m.train.end());
  for (const auto& id : m.test) CHECK(ids.count(id) == 0);
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("manifest validation errors") {
  DatasetManifest m = make_manifest(SyntheticConfig{3, 6, 3, 16, 1, 0.0});
  DatasetManifest overlap = m;
  overlap.test.push_back(overlap.train.front());
  CHECK_THROWS_AS(overlap.validate(), ConfigError);
  DatasetManifest bad_label = m;
  bad_label.samples.front().label = 3;
  CHECK_THROWS_AS(bad_label.validate(), ConfigError);
  DatasetManifest unknown = m;
  unknown.train.push_back("nope");
  CHECK_THROWS_AS(unknown.validate(), ConfigError);
}

TEST_CASE("manifest JSON round trip") {
  const DatasetManifest m = make_manifest(SyntheticConfig{4, 8, 4, 32, 3, 0.02});
  const DatasetManifest back = manifest_from_json(manifest_to_json(m));
  CHECK(manifest_to_json(back) == manifest_to_json(m));
  CHECK(back.train == m.train);
  CHECK(back.class_names == m.class_names);
  CHECK_THROWS_AS(manifest_from_json("{}"), FormatError);
  CHECK_THROWS_AS(manifest_from_json("not json"), FormatError);
}

TEST_CASE("sample files round trip bit-exactly") {
  Rng rng(2);
  std::normal_distribution<double> nd;
  PointCloud c;
  for (int i = 0; i < 33; ++i) c.points.push_back({float(nd(rng)), float(nd(rng)), float(nd(rng))});
  c.label = 5;
  const std::string bytes = encode_sample(c);
  CHECK(bytes.size() == 16 + 33 * 12);
  CHECK(bytes.substr(0, 4) == "PCSC");
  CHECK(decode_sample(bytes) == c);
  CHECK(encode_sample(decode_sample(bytes)) == bytes);
  c.label.reset();
  CHECK(decode_sample(encode_sample(c)) == c);
  CHECK_THROWS_AS(decode_sample("PCSX" + bytes.substr(4)), FormatError);
  CHECK_THROWS_AS(decode_sample(bytes.substr(0, bytes.size() - 1)), FormatError);
}

TEST_CASE("dataset directories round trip and regenerate byte-identically") {
  TempDir tmp;
  const SyntheticConfig sc{3, 9, 6, 32, 4, 0.01};
  const Dataset ds = generate_dataset(sc);
  write_dataset(ds, tmp.path() / "a");
  write_dataset(generate_dataset(sc), tmp.path() / "b");
  CHECK(directory_digest(tmp.path() / "a") == directory_digest(tmp.path() / "b"));
  const Dataset back = load_dataset(tmp.path() / "a");
  CHECK(back.train == ds.train);
  CHECK(back.test == ds.test);
  CHECK(manifest_to_json(back.manifest) == manifest_to_json(ds.manifest));
  CHECK_THROWS_AS(load_dataset(tmp.path() / "missing"), ConfigError);
}

TEST_CASE("OFF tree import") {
  TempDir tmp;
  const std::string tri = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
  const std::string quad = "OFF\n4 1 0\n0 0 0\n0 0 1\n0 1 1\n0 1 0\n4 0 1 2 3\n";
  for (const auto& [cls, text] : {std::pair{"chair", tri}, std::pair{"desk", quad}})
    for (const char* split : {"train", "test"})
      for (int i = 0; i < 2; ++i) {
        std::filesystem::create_directories(tmp.path() / "root" / cls / split);
        write_file(tmp.path() / "root" / cls / split / (std::string(cls) + std::to_string(i) + ".off"), text);
      }
  const Dataset ds = import_off_tree(tmp.path() / "root", 40, 3);
  CHECK(ds.manifest.num_classes == 2);
  CHECK(ds.train.size() == 4);
  CHECK(ds.test.size() == 4);
  for (const auto& c : ds.train) {
    CHECK(c.size() == 40);
    CHECK(std::abs(max_norm(c) - 1.0) < 1e-6);
  }
}
