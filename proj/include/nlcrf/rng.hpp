// Copyright 2026 the nonlocal-crf authors
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

#ifndef NLCRF_RNG_HPP_
#define NLCRF_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace nlcrf {

// mt19937_64 with fixed sampling transforms. The std:: distributions are
// implementation-defined, which would silently invalidate the checksums of
// generated datasets when the standard library changes; the transforms below
// are pinned so a (seed, draw sequence) pair always yields the same stream.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one value per call, no caching, so the
  // stream position depends only on the number of calls.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    // Rejection-free modulo would bias; n is tiny here so retry is cheap.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % static_cast<uint64_t>(n);
    uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<int>(x % static_cast<uint64_t>(n));
  }

  // Index sampled proportionally to weights (need not be normalized).
  int categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0 || !std::isfinite(w)) throw std::invalid_argument("categorical: bad weight");
      total += w;
    }
    if (total <= 0.0) throw std::invalid_argument("categorical: weights sum to zero");
    double target = uniform() * total;
    for (size_t i = 0; i < weights.size(); ++i) {
      target -= weights[i];
      if (target < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

  // Poisson by summing exponential inter-arrival times: count the arrivals of
  // a unit-rate process before time `rate`. Exact for all rates and avoids
  // the exp(-rate) underflow of the product form.
  int poisson(double rate) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) throw std::invalid_argument("poisson: bad rate");
    double elapsed = 0.0;
    int count = -1;
    while (elapsed <= rate) {
      double u = uniform();
      while (u <= 0.0) u = uniform();
      elapsed += -std::log(u);
      ++count;
    }
    return count;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nlcrf

#endif  // NLCRF_RNG_HPP_
