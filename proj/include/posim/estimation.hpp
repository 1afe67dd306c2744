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

#ifndef posim_estimation_H
#define posim_estimation_H

#include "posim/config.hpp"
#include "posim/types.hpp"
#include "posim/waveform.hpp"
#include <vector>

namespace posim
{

// Estimated channel frequency response. Rows are receive antennas, columns
// the pilot-occupied subcarriers; subcarrier_indices holds the centered
// index (relative to DC) of every column and is strictly increasing.
struct Cfr
{
    arma::cx_mat values;
    arma::vec subcarrier_indices;
    double timestamp_s = 0.0;

    arma::uword n_rx() const { return values.n_rows; }
    arma::uword n_subcarriers() const { return values.n_cols; }
};

// One row of a beam-sweep report.
struct BeamReport
{
    arma::uword drop = 0;
    arma::uword beam_index = 0;
    double az_deg = 0.0;
    double el_deg = 0.0;
    double rsrp_dbm = 0.0;
};

// Angle spectrum returned by estimate_aoa: the scanned azimuths, the
// spectrum value per grid point, and the argmax.
struct AoaSpectrum
{
    arma::vec grid_rad;
    arma::vec power;
    double aoa_rad = 0.0;
};

enum class AoaMethod
{
    dbf,
    music
};

// Result of the iterative two-dimensional position solver.
struct LocalizationResult
{
    arma::vec2 position = {0.0, 0.0};
    arma::uword iterations = 0;
    bool converged = false;
};

// Monte-Carlo error metrics: the spread (root mean square deviation about
// the sample mean), the root mean square error about ground truth, and the
// empirical distribution over the sorted samples.
struct ErrorMetrics
{
    double rmse_about_mean = 0.0;
    double rmse_about_truth = 0.0;
    arma::vec cdf_value;
    arma::vec cdf_probability;
};

// Least-squares channel estimate: received / known per occupied resource
// element, averaged over the occupied symbols of each subcarrier. Ports of
// the received grid are receive antennas; the known grid holds the single
// transmitted port. Throws when the known grid is zero on an occupied entry
// or the occupancy masks disagree.
Cfr estimate_cfr_ls(const ResourceGrid &rx, const ResourceGrid &known,
                    const CarrierConfig &carrier);

// Reference-signal received power: mean per-resource-element power of the
// matched-correlated received signal, in dBm under the grid's amplitude
// scaling (|value|^2 = power in mW). Throws when nothing is occupied.
double estimate_rsrp(const ResourceGrid &rx, const ResourceGrid &known);

// Index of the report with maximal RSRP; exact ties resolve to the lowest
// beam index. Throws on an empty report list.
arma::uword select_best_beam(const std::vector<BeamReport> &reports);

// Azimuth spectrum over the scan grid from the estimated CFR. The
// conventional beamformer accumulates |a(az)^H h_k|^2 over subcarriers;
// MUSIC scans the noise subspace of the spatial covariance with the same
// interface. Scan angles are local array azimuths in radians. Throws on an
// empty grid or fewer than two antennas.
AoaSpectrum estimate_aoa(const Cfr &cfr, const ArrayGeometry &array, double wavelength_m,
                         const arma::vec &scan_grid_rad, AoaMethod method = AoaMethod::dbf,
                         arma::uword n_sources = 1);

// Evenly spaced scan grid in radians over [lo, hi] degrees.
arma::vec aoa_scan_grid(double lo_deg, double hi_deg, double step_deg = 0.1);

// Gauss-Newton refinement of the two-dimensional position from per-BS
// azimuth bearings (global frame, radians, measured from the +x axis like
// every azimuth in this library). bs_positions holds one BS per column as
// [x; y] meters. Residuals are wrapped to (-pi, pi]. Throws when fewer than
// two BSs are given or the normal matrix turns singular (collinear
// geometry); sets converged=false when the step norm never drops below tol
// within max_iter iterations.
LocalizationResult localize_2d(const arma::vec &bearings_rad, const arma::mat &bs_positions,
                               const arma::vec2 &p0, arma::uword max_iter = 20,
                               double tol = 1e-6);

// Spread and accuracy metrics plus the empirical CDF of an error sample.
// Throws on an empty sample.
ErrorMetrics compute_metrics(const arma::vec &errors);

} // namespace posim

#endif
