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

#include "posim/rng.hpp"
#include "posim/types.hpp"

namespace posim
{

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t s = splitmix64(master);
    for (std::uint64_t tag : path)
        s = splitmix64(s ^ splitmix64(tag));
    return s;
}

double Stream::uniform(double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
}

double Stream::normal(double mean, double stddev)
{
    return std::normal_distribution<double>(mean, stddev)(eng_);
}

double Stream::truncated_normal(double mean, double stddev, double bound_sigmas)
{
    if (stddev == 0.0)
        return mean;
    std::normal_distribution<double> dist(0.0, 1.0);
    double z = dist(eng_);
    while (std::abs(z) > bound_sigmas)
        z = dist(eng_);
    return mean + stddev * z;
}

std::uint64_t Stream::integer(std::uint64_t n)
{
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(eng_);
}

arma::vec Stream::normal_vec(arma::uword n)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    arma::vec v(n);
    for (arma::uword i = 0; i < n; ++i)
        v[i] = dist(eng_);
    return v;
}

arma::cx_vec Stream::cnormal_vec(arma::uword n)
{
    std::normal_distribution<double> dist(0.0, std::sqrt(0.5));
    arma::cx_vec v(n);
    for (arma::uword i = 0; i < n; ++i)
        v[i] = cxd(dist(eng_), dist(eng_));
    return v;
}

} // namespace posim
