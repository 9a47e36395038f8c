// ctdvec/fft.hpp
//
// Copyright 2026  The ctdvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CTDVEC_FFT_HPP
#define CTDVEC_FFT_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "ctdvec/base.hpp"

namespace ctdvec {

inline bool IsPowerOfTwo(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t NextPowerOfTwo(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Iterative radix-2 decimation-in-time FFT with precomputed twiddles.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), twiddle_(n / 2), bitrev_(n) {
    if (!IsPowerOfTwo(n)) Fail(ErrorCode::kConfig, "FFT size ", n, " is not a power of two");
    for (std::size_t k = 0; k < n / 2; ++k) {
      double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / n;
      twiddle_[k] = {std::cos(angle), std::sin(angle)};
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      bitrev_[i] = r;
    }
  }

  std::size_t size() const { return n_; }

  void Forward(std::span<std::complex<double>> x) const {
    for (std::size_t i = 0; i < n_; ++i)
      if (i < bitrev_[i]) std::swap(x[i], x[bitrev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      std::size_t half = len / 2, step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          std::complex<double> t = twiddle_[k * step] * x[start + k + half];
          x[start + k + half] = x[start + k] - t;
          x[start + k] += t;
        }
      }
    }
  }

  /// Magnitudes of bins 0..n/2 for a real frame (zero-padded to n).
  void RealMagnitude(std::span<const double> frame, std::span<double> out,
                     std::vector<std::complex<double>> &scratch) const {
    scratch.assign(n_, {0.0, 0.0});
    for (std::size_t i = 0; i < frame.size() && i < n_; ++i) scratch[i] = frame[i];
    Forward(scratch);
    for (std::size_t k = 0; k <= n_ / 2; ++k) out[k] = std::abs(scratch[k]);
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> bitrev_;
};

}  // namespace ctdvec

#endif  // CTDVEC_FFT_HPP
