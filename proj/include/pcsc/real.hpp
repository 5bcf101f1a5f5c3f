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

#include <cstddef>
#include <new>
#include <vector>

// Precision selection. The library is compiled once per precision; each
// build places its symbols in a distinct inline namespace.

#ifdef PCSC_DOUBLE
#define PCSC_PRECISION_NS f64
#else
#define PCSC_PRECISION_NS f32
#endif

#define PCSC_BEGIN_NAMESPACE \
  namespace pcsc {           \
  inline namespace PCSC_PRECISION_NS {
#define PCSC_END_NAMESPACE \
  }                        \
  }

PCSC_BEGIN_NAMESPACE

#ifdef PCSC_DOUBLE
using Real = double;
#else
using Real = float;
#endif

/// Cache-line aligned allocation. Vectorized kernels peel a different number
/// of leading elements depending on the base address, so a fixed alignment
/// keeps floating-point results independent of where the heap put a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using RealVector = std::vector<Real, AlignedAllocator<Real>>;

PCSC_END_NAMESPACE
