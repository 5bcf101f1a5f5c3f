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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pcsc/errors.hpp"

PCSC_BEGIN_NAMESPACE

using Point3 = std::array<float, 3>;

/// A non-empty set of 3D points with an optional class label.
struct PointCloud {
  std::vector<Point3> points;
  std::optional<int> label;

  std::size_t size() const noexcept { return points.size(); }
  bool operator==(const PointCloud&) const = default;
};

/// Vertices and polygonal faces of an OFF mesh.
struct OffMesh {
  std::vector<Point3> vertices;
  std::vector<std::vector<std::uint32_t>> faces;
};

/// Parses OFF text. Vertex lines may carry extra columns (colors), which are
/// ignored. Throws ParseError naming the offending line.
OffMesh parse_off_mesh(std::string_view text);

/// Vertex set of an OFF file as a point cloud; faces are validated and
/// discarded.
PointCloud parse_off(std::string_view text);

/// Writes a vertex-only OFF file. Coordinates use the shortest decimal
/// representation that reads back to the same float.
std::string serialize_off(const PointCloud& cloud);

/// Area-weighted uniform sampling of a triangulated (fan-split) mesh surface.
/// Meshes without faces fall back to resampling vertices.
PointCloud sample_mesh_surface(const OffMesh& mesh, std::size_t n_points,
                               std::uint64_t seed);

/// Built-in shape family of the synthetic dataset, in class-index order.
enum class ShapeClass : int {
  kSphere = 0,
  kCube,
  kCylinder,
  kCone,
  kTorus,
  kPlane,
  kTwoSpheres,
  kHelix,
};

inline constexpr int kNumShapeClasses = 8;

std::string_view shape_class_name(int class_id);

/// Samples `n_points` on the surface of shape `class_id`, adds isotropic
/// Gaussian jitter, and normalizes to the unit sphere. Centrally symmetric
/// shapes are sampled in antipodal pairs so the centroid is the shape
/// center. Deterministic in (class_id, n_points, seed, jitter_sigma).
PointCloud generate_synthetic(int class_id, std::size_t n_points,
                              std::uint64_t seed, double jitter_sigma);

/// Translates the centroid to the origin and scales the largest norm to 1.
/// Throws DegenerateInputError when all points coincide.
PointCloud normalize_unit_sphere(PointCloud cloud);

struct SyntheticConfig {
  int num_classes = kNumShapeClasses;
  std::size_t num_train = 512;
  std::size_t num_test = 128;
  std::size_t points_per_cloud = 256;
  std::uint64_t seed = 7;
  double jitter_sigma = 0.01;
};

struct SampleEntry {
  std::string id;
  int label = 0;
};

struct DatasetManifest {
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<SampleEntry> samples;
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::size_t points_per_cloud = 0;
  std::uint64_t seed = 0;
  double jitter_sigma = 0.0;

  /// Throws ConfigError on split overlap, unknown ids or labels out of range.
  void validate() const;
  int label_of(const std::string& id) const;
};

/// Balanced labels (sample i has label i mod num_classes) and a seeded
/// split; stratified when both split sizes divide by the class count.
DatasetManifest make_manifest(const SyntheticConfig& config);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(std::string_view text);

// "PCSC" sample file: 16-byte header (magic, u32 version, u32 point count,
// i32 label with -1 for none) followed by little-endian f32 xyz rows.
inline constexpr std::uint32_t kSampleFormatVersion = 1;
std::string encode_sample(const PointCloud& cloud);
PointCloud decode_sample(std::string_view bytes);

struct Dataset {
  DatasetManifest manifest;
  std::vector<PointCloud> train;
  std::vector<PointCloud> test;
};

/// Generates every sample of a synthetic manifest in memory.
Dataset generate_dataset(const SyntheticConfig& config);

/// Writes manifest.json and samples/<id>.pcsc under `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Builds a dataset from a ModelNet-style tree: <root>/<class>/{train,test}/*.off.
Dataset import_off_tree(const std::filesystem::path& root,
                        std::size_t points_per_cloud, std::uint64_t seed);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

PCSC_END_NAMESPACE
