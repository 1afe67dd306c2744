// SPDX-License-Identifier: Apache-2.0
//
// posim - link-level simulator for 5G positioning-signal transmission
// Copyright (C) 2026 posim contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef posim_rng_H
#define posim_rng_H

#include <armadillo>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace posim
{

// SplitMix64 finalizer (Steele/Lea/Flood); bijective 64-bit mixing step.
std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a master seed and a path of
// integer tags, e.g. {drop, link, model}. Reordered or extended paths give
// unrelated seeds, so per-(drop, link, model) streams never collide.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path);

// A seeded random stream wrapping std::mt19937_64. Streams are value types;
// every consumer owns its own stream derived from the master seed, which
// keeps Monte-Carlo drops reproducible and order-independent.
class Stream
{
  public:
    explicit Stream(std::uint64_t seed) : eng_(seed), seed_base_(seed) {}

    // Child stream for a tagged sub-task; does not advance this stream.
    Stream derive(std::initializer_list<std::uint64_t> path) const
    {
        return Stream(derive_seed(seed_base_, path));
    }

    double uniform(double lo = 0.0, double hi = 1.0);
    double normal(double mean = 0.0, double stddev = 1.0);

    // Gaussian clipped by rejection to mean +/- bound_sigmas * stddev.
    double truncated_normal(double mean, double stddev, double bound_sigmas = 2.0);

    // Uniform integer in [0, n).
    std::uint64_t integer(std::uint64_t n);

    arma::vec normal_vec(arma::uword n);

    // Circularly-symmetric complex Gaussian with total variance 1 per entry.
    arma::cx_vec cnormal_vec(arma::uword n);

    std::mt19937_64 &engine() { return eng_; }

  private:
    std::mt19937_64 eng_;
    std::uint64_t seed_base_;
};

} // namespace posim

#endif
