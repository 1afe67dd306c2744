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

#include "posim/estimation.hpp"
#include "posim/beamforming.hpp"
#include "posim/channel.hpp"
#include <cmath>
#include <stdexcept>

namespace posim
{

namespace
{

// Checks that the received grid covers the known grid's occupancy and
// returns the known single-port mask.
arma::umat pilot_mask(const ResourceGrid &rx, const ResourceGrid &known)
{
    if (known.n_ports() < 1 || known.n_subcarriers() == 0)
        throw std::invalid_argument("estimation: the known signal grid is empty");
    if (rx.n_subcarriers() != known.n_subcarriers() || rx.n_symbols() != known.n_symbols())
        throw std::invalid_argument("estimation: received and known grid dimensions disagree");

    arma::umat mask = known.occupied.slice(0);
    for (arma::uword p = 0; p < rx.n_ports(); ++p)
        for (arma::uword s = 0; s < mask.n_cols; ++s)
            for (arma::uword k = 0; k < mask.n_rows; ++k)
                if (mask(k, s) && !rx.occupied(k, s, p))
                    throw std::invalid_argument("estimation: the received grid is unoccupied on a pilot entry");
    if (arma::accu(mask) == 0)
        throw std::invalid_argument("estimation: the known signal grid has no occupied entries");
    return mask;
}

} // namespace

Cfr estimate_cfr_ls(const ResourceGrid &rx, const ResourceGrid &known,
                    const CarrierConfig &carrier)
{
    arma::umat mask = pilot_mask(rx, known);
    arma::vec all_indices = active_subcarrier_indices(known, carrier);

    arma::uvec rows = arma::find(arma::sum(mask, 1) > 0);
    Cfr cfr;
    cfr.values.zeros(rx.n_ports(), rows.n_elem);
    cfr.subcarrier_indices.set_size(rows.n_elem);

    for (arma::uword j = 0; j < rows.n_elem; ++j)
    {
        arma::uword k = rows[j];
        cfr.subcarrier_indices[j] = all_indices[k];
        arma::uword count = 0;
        for (arma::uword s = 0; s < mask.n_cols; ++s)
        {
            if (!mask(k, s))
                continue;
            cxd pilot = known.symbols(k, s, 0);
            if (std::abs(pilot) == 0.0)
                throw std::invalid_argument("estimate_cfr_ls: the known signal is zero on an occupied entry");
            ++count;
            for (arma::uword p = 0; p < rx.n_ports(); ++p)
                cfr.values(p, j) += rx.symbols(k, s, p) / pilot;
        }
        cfr.values.col(j) /= double(count);
    }
    return cfr;
}

double estimate_rsrp(const ResourceGrid &rx, const ResourceGrid &known)
{
    arma::umat mask = pilot_mask(rx, known);

    double power_mw = 0.0;
    arma::uword count = 0;
    for (arma::uword s = 0; s < mask.n_cols; ++s)
        for (arma::uword k = 0; k < mask.n_rows; ++k)
        {
            if (!mask(k, s))
                continue;
            double pilot_mag = std::abs(known.symbols(k, s, 0));
            if (pilot_mag == 0.0)
                throw std::invalid_argument("estimate_rsrp: the known signal is zero on an occupied entry");
            for (arma::uword p = 0; p < rx.n_ports(); ++p)
            {
                cxd correlated = rx.symbols(k, s, p) * std::conj(known.symbols(k, s, 0)) / pilot_mag;
                power_mw += std::norm(correlated);
                ++count;
            }
        }
    return 10.0 * std::log10(power_mw / double(count));
}

arma::uword select_best_beam(const std::vector<BeamReport> &reports)
{
    if (reports.empty())
        throw std::invalid_argument("select_best_beam: the report list is empty");
    arma::uword best = 0;
    for (arma::uword i = 1; i < reports.size(); ++i)
        if (reports[i].rsrp_dbm > reports[best].rsrp_dbm)
            best = i;
    return best;
}

AoaSpectrum estimate_aoa(const Cfr &cfr, const ArrayGeometry &array, double wavelength_m,
                         const arma::vec &scan_grid_rad, AoaMethod method, arma::uword n_sources)
{
    if (cfr.n_rx() < 2)
        throw std::invalid_argument("estimate_aoa: angle scanning needs at least two receive antennas");
    if (arma::uword(array.rows) * array.cols != cfr.n_rx())
        throw std::invalid_argument("estimate_aoa: the array geometry does not match the CFR antenna count");
    if (scan_grid_rad.n_elem == 0)
        throw std::invalid_argument("estimate_aoa: the scan grid is empty");
    if (cfr.n_subcarriers() == 0)
        throw std::invalid_argument("estimate_aoa: the CFR holds no subcarriers");

    AoaSpectrum spectrum;
    spectrum.grid_rad = scan_grid_rad;
    spectrum.power.set_size(scan_grid_rad.n_elem);

    arma::cx_mat noise_basis;
    if (method == AoaMethod::music)
    {
        if (n_sources == 0 || n_sources >= cfr.n_rx())
            throw std::invalid_argument("estimate_aoa: the source count must sit between 1 and the antenna count minus one");
        arma::cx_mat covariance = cfr.values * cfr.values.t() / double(cfr.n_subcarriers());
        arma::vec eigenvalues;
        arma::cx_mat eigenvectors;
        if (!arma::eig_sym(eigenvalues, eigenvectors, covariance))
            throw std::runtime_error("estimate_aoa: the spatial covariance eigendecomposition failed");
        noise_basis = eigenvectors.head_cols(cfr.n_rx() - n_sources);
    }

    for (arma::uword g = 0; g < scan_grid_rad.n_elem; ++g)
    {
        arma::cx_vec w = steering_weights(array, scan_grid_rad[g], 0.5 * pi, wavelength_m);
        if (method == AoaMethod::dbf)
        {
            arma::cx_rowvec combined = w.st() * cfr.values;
            spectrum.power[g] = arma::accu(arma::square(arma::abs(combined)));
        }
        else
        {
            arma::cx_vec response = arma::conj(w);
            double rejection = arma::accu(arma::square(arma::abs(noise_basis.t() * response)));
            spectrum.power[g] = 1.0 / std::max(rejection, 1.0e-300);
        }
    }

    spectrum.aoa_rad = scan_grid_rad[spectrum.power.index_max()];
    return spectrum;
}

arma::vec aoa_scan_grid(double lo_deg, double hi_deg, double step_deg)
{
    if (step_deg <= 0.0)
        throw std::invalid_argument("aoa_scan_grid: the step must be positive");
    if (hi_deg < lo_deg)
        throw std::invalid_argument("aoa_scan_grid: the range must be ordered low to high");
    return deg2rad(1.0) * arma::regspace(lo_deg, step_deg, hi_deg);
}

LocalizationResult localize_2d(const arma::vec &bearings_rad, const arma::mat &bs_positions,
                               const arma::vec2 &p0, arma::uword max_iter, double tol)
{
    arma::uword n = bearings_rad.n_elem;
    if (n < 2)
        throw std::invalid_argument("localize_2d: at least two bearings are needed");
    if (bs_positions.n_rows != 2 || bs_positions.n_cols != n)
        throw std::invalid_argument("localize_2d: positions must hold one [x; y] column per bearing");

    LocalizationResult result;
    result.position = p0;

    arma::mat jacobian(n, 2);
    arma::vec residual(n);
    for (arma::uword iter = 0; iter < max_iter; ++iter)
    {
        for (arma::uword i = 0; i < n; ++i)
        {
            double u = result.position[0] - bs_positions(0, i);
            double v = result.position[1] - bs_positions(1, i);
            double range_sq = u * u + v * v;
            if (range_sq < 1.0e-24)
                throw std::runtime_error("localize_2d: the iterate coincides with a base station");
            residual[i] = wrap_pi(bearings_rad[i] - std::atan2(v, u));
            jacobian(i, 0) = -v / range_sq;
            jacobian(i, 1) = u / range_sq;
        }

        arma::mat normal = jacobian.t() * jacobian;
        if (arma::rcond(normal) < 1.0e-12)
            throw std::runtime_error("localize_2d: collinear geometry, the normal matrix is singular");
        arma::vec step = arma::solve(normal, jacobian.t() * residual);

        result.position += step;
        result.iterations = iter + 1;
        if (arma::norm(step) < tol)
        {
            result.converged = true;
            break;
        }
    }
    return result;
}

ErrorMetrics compute_metrics(const arma::vec &errors)
{
    if (errors.n_elem == 0)
        throw std::invalid_argument("compute_metrics: the error sample is empty");

    double n = double(errors.n_elem);
    double mean = arma::mean(errors);
    ErrorMetrics metrics;
    metrics.rmse_about_mean = std::sqrt(arma::accu(arma::square(errors - mean)) / n);
    metrics.rmse_about_truth = std::sqrt(arma::accu(arma::square(errors)) / n);
    metrics.cdf_value = arma::sort(errors);
    metrics.cdf_probability = arma::regspace(1.0, n) / n;
    return metrics;
}

} // namespace posim
