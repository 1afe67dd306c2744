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

#ifndef posim_types_H
#define posim_types_H

#include <armadillo>
#include <complex>
#include <numbers>

namespace posim
{

using cxd = std::complex<double>;

constexpr double pi = std::numbers::pi;
constexpr double speed_of_light = 299792458.0; // m/s

constexpr double deg2rad(double deg) { return deg * pi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / pi; }

inline double db2lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin2db(double lin) { return 10.0 * std::log10(lin); }
inline double db2mag(double db) { return std::pow(10.0, db / 20.0); }

// Wraps an angle to (-pi, pi].
inline double wrap_pi(double a)
{
    a = std::fmod(a + pi, 2.0 * pi);
    if (a <= 0.0)
        a += 2.0 * pi;
    return a - pi;
}

// Unit direction vector for azimuth phi (from x-axis in the x-y plane) and
// zenith theta (from the +z axis), global coordinates.
inline arma::vec3 unit_vector(double azimuth, double zenith)
{
    return {std::sin(zenith) * std::cos(azimuth), std::sin(zenith) * std::sin(azimuth), std::cos(zenith)};
}

} // namespace posim

#endif
