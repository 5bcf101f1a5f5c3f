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

#include <cstdint>
#include <span>
#include <vector>

#include "pcsc/dataset.hpp"

PCSC_BEGIN_NAMESPACE

/// Key points and their k-nearest-neighbour sub-clouds.
struct GroupedBatch {
  std::size_t group_size = 0;
  std::vector<Point3> keys;
  std::vector<std::size_t> key_indices;
  std::vector<Point3> groups;  // num_groups() x group_size, row-major
  std::vector<std::size_t> group_indices;
  bool centered = false;

  std::size_t num_groups() const noexcept { return keys.size(); }
  std::span<const Point3> group(std::size_t i) const {
    return {groups.data() + i * group_size, group_size};
  }
};

enum class FpsStart {
  kFirstIndex,    // index 0; evaluation and oracle tests
  kSeededRandom,  // uniform pick from the seed; training
};

/// Squared Euclidean distance, accumulated in double.
inline double squared_distance(const Point3& a, const Point3& b) noexcept {
  const double dx = static_cast<double>(a[0]) - b[0];
  const double dy = static_cast<double>(a[1]) - b[1];
  const double dz = static_cast<double>(a[2]) - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Farthest point sampling. After the start point, each pick maximizes the
/// squared distance to the nearest already-chosen point; ties go to the
/// lowest index. O(N*m) with no spatial index.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                               FpsStart start, std::uint64_t seed = 0);

/// For each key, the k nearest source points ordered by (distance, index).
GroupedBatch knn_group(const PointCloud& cloud, std::span<const std::size_t> key_indices,
                       std::size_t k);

/// Rewrites each group relative to its key point. Keys are left unchanged.
GroupedBatch center_groups(GroupedBatch batch);

/// FPS, kNN grouping and (optionally) centering in one call.
GroupedBatch group_cloud(const PointCloud& cloud, std::size_t num_keys, std::size_t group_size,
                         FpsStart start, std::uint64_t seed, bool center);

PCSC_END_NAMESPACE
