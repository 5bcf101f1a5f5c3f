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

#include "pcsc/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "pcsc/random.hpp"

PCSC_BEGIN_NAMESPACE

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                               FpsStart start, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (m == 0) throw ArgumentError("farthest_point_sample: m must be positive");
  if (m > n)
    throw ArgumentError("farthest_point_sample: m=" + std::to_string(m) + " exceeds N=" +
                        std::to_string(n));

  std::size_t current = 0;
  if (start == FpsStart::kSeededRandom) {
    Rng rng = make_rng(seed, {0xF95u});
    current = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }

  std::vector<std::size_t> picked;
  picked.reserve(m);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  for (;;) {
    picked.push_back(current);
    taken[current] = 1;
    if (picked.size() == m) break;
    const Point3& anchor = cloud.points[current];
    std::size_t best = n;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(cloud.points[i], anchor));
      if (!taken[i] && nearest[i] > best_dist) {
        best_dist = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  return picked;
}

GroupedBatch knn_group(const PointCloud& cloud, std::span<const std::size_t> key_indices,
                       std::size_t k) {
  const std::size_t n = cloud.size();
  if (k == 0) throw ArgumentError("knn_group: k must be positive");
  if (k > n)
    throw ArgumentError("knn_group: k=" + std::to_string(k) + " exceeds N=" + std::to_string(n));

  GroupedBatch batch;
  batch.group_size = k;
  batch.keys.reserve(key_indices.size());
  batch.groups.reserve(key_indices.size() * k);
  batch.group_indices.reserve(key_indices.size() * k);
  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t key : key_indices) {
    if (key >= n) throw ArgumentError("knn_group: key index out of range");
    const Point3& anchor = cloud.points[key];
    for (std::size_t i = 0; i < n; ++i) order[i] = {squared_distance(cloud.points[i], anchor), i};
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
    batch.keys.push_back(anchor);
    batch.key_indices.push_back(key);
    for (std::size_t j = 0; j < k; ++j) {
      batch.group_indices.push_back(order[j].second);
      batch.groups.push_back(cloud.points[order[j].second]);
    }
  }
  return batch;
}

GroupedBatch center_groups(GroupedBatch batch) {
  for (std::size_t g = 0; g < batch.num_groups(); ++g) {
    const Point3 key = batch.keys[g];
    for (std::size_t j = 0; j < batch.group_size; ++j) {
      Point3& p = batch.groups[g * batch.group_size + j];
      for (int c = 0; c < 3; ++c) p[c] -= key[c];
    }
  }
  batch.centered = true;
  return batch;
}

GroupedBatch group_cloud(const PointCloud& cloud, std::size_t num_keys, std::size_t group_size,
                         FpsStart start, std::uint64_t seed, bool center) {
  const auto keys = farthest_point_sample(cloud, num_keys, start, seed);
  GroupedBatch batch = knn_group(cloud, keys, group_size);
  return center ? center_groups(std::move(batch)) : batch;
}

PCSC_END_NAMESPACE
