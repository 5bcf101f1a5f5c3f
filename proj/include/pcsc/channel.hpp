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

#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <string>

#include "pcsc/random.hpp"
#include "pcsc/tensor.hpp"

PCSC_BEGIN_NAMESPACE

/// Complex channel symbols [B, n_sym, 2] (re, im) with the mean per-symbol
/// power they were normalized to.
struct SymbolFrame {
  Tensor symbols;
  double declared_power = 1.0;

  std::size_t batch() const { return symbols.dim(0); }
  std::size_t num_symbols() const { return symbols.dim(1); }
};

enum class ChannelKind { kAwgn, kFlatFading };

/// SNR value that denotes a noiseless link.
inline constexpr double kNoiselessSnr = std::numeric_limits<double>::infinity();

struct ChannelSpec {
  ChannelKind kind = ChannelKind::kAwgn;
  double snr_db = kNoiselessSnr;
  std::complex<double> h{1.0, 0.0};
  std::uint64_t seed = 0;

  bool noiseless() const noexcept { return snr_db == kNoiselessSnr; }
  /// Throws ConfigError for NaN / -inf SNR or h == 0 under fading.
  void validate() const;

  static ChannelSpec awgn(double snr_db, std::uint64_t seed = 0) {
    return ChannelSpec{ChannelKind::kAwgn, snr_db, {1.0, 0.0}, seed};
  }
};

std::string channel_kind_name(ChannelKind kind);
ChannelKind parse_channel_kind(const std::string& name);

/// Mean |x|^2 over the symbols of frame b.
double frame_power(const Tensor& symbols, std::size_t b);

/// Scales each frame to unit mean symbol power; differentiable.
SymbolFrame normalize_power(const Tensor& symbols);

/// Total complex noise variance for unit signal power: 10^(-snr_db / 10).
/// The noiseless sentinel maps to 0.
double snr_to_sigma2(double snr_db);

/// Y = h X + w with w ~ CN(0, sigma^2 I). Under flat fading the receiver
/// divides by the known h. Frame b draws its noise from the stream
/// (spec.seed, stream_ids[b]); with no ids, stream b is used. The noise is a
/// constant in the graph, so dY/dX is the identity for AWGN.
SymbolFrame transmit(const SymbolFrame& x, const ChannelSpec& spec,
                     std::span<const std::uint64_t> stream_ids = {}, bool strict = false);

/// One training SNR, uniform on [0, 20] dB.
double sample_training_snr(Rng& rng);

inline constexpr double kTrainingSnrMinDb = 0.0;
inline constexpr double kTrainingSnrMaxDb = 20.0;

PCSC_END_NAMESPACE
