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

#include "posim/channel.hpp"
#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace posim
{

namespace
{

constexpr double deg_per_rad = 180.0 / pi;

// Azimuth scaling constants of TR 38.901 table 7.5-2, indexed by cluster
// count; intermediate counts are interpolated linearly.
double c_phi_nlos(arma::uword n_clusters)
{
    static const std::vector<std::pair<double, double>> table = {
        {4, 0.779},  {5, 0.860},  {8, 1.018},  {10, 1.090}, {11, 1.123}, {12, 1.146},
        {14, 1.190}, {15, 1.211}, {16, 1.226}, {19, 1.273}, {20, 1.289}, {25, 1.358}};
    double n = static_cast<double>(n_clusters);
    if (n <= table.front().first)
        return table.front().second;
    for (std::size_t i = 1; i < table.size(); ++i)
        if (n <= table[i].first)
        {
            double t = (n - table[i - 1].first) / (table[i].first - table[i - 1].first);
            return table[i - 1].second + t * (table[i].second - table[i - 1].second);
        }
    return table.back().second;
}

// Zenith scaling constants of TR 38.901 table 7.5-4.
double c_theta_nlos(arma::uword n_clusters)
{
    static const std::vector<std::pair<double, double>> table = {
        {8, 0.889}, {10, 0.957}, {11, 1.031},  {12, 1.104},
        {15, 1.1088}, {19, 1.184}, {20, 1.178}, {25, 1.282}};
    double n = static_cast<double>(n_clusters);
    if (n <= table.front().first)
        return table.front().second;
    for (std::size_t i = 1; i < table.size(); ++i)
        if (n <= table[i].first)
        {
            double t = (n - table[i - 1].first) / (table[i].first - table[i - 1].first);
            return table[i - 1].second + t * (table[i].second - table[i - 1].second);
        }
    return table.back().second;
}

// Ray offset angles of TR 38.901 table 7.5-3 (unit angle spread).
const arma::vec &ray_offsets()
{
    static const arma::vec offsets = {
        0.0447,  -0.0447, 0.1413,  -0.1413, 0.2492,  -0.2492, 0.3715,  -0.3715,
        0.5129,  -0.5129, 0.6797,  -0.6797, 0.8844,  -0.8844, 1.1481,  -1.1481,
        1.5195,  -1.5195, 2.1551,  -2.1551};
    return offsets;
}

double wrap_zenith_deg(double theta)
{
    theta = std::fmod(theta, 360.0);
    if (theta < 0.0)
        theta += 360.0;
    return theta > 180.0 ? 360.0 - theta : theta;
}

// Pathloss of one table row without the NLOS floor (TR 38.901 table
// 7.4.1-1 forms).
double pathloss_one_row(const ScenarioTable &row, const LinkGeometry &geom, double fc_ghz)
{
    double lg_d = std::log10(geom.d3d_m);
    double lg_f = std::log10(fc_ghz);
    if (row.pl_dualslope)
    {
        // Breakpoint distance with 1 m effective environment height.
        double h_bs = std::max(geom.h_bs_m - 1.0, 0.0);
        double h_ut = std::max(geom.h_user_m - 1.0, 0.0);
        double d_bp = 4.0 * h_bs * h_ut * fc_ghz * 1e9 / speed_of_light;
        if (d_bp > 0.0 && geom.d2d_m > d_bp)
        {
            double dh2 = d_bp * d_bp +
                         (geom.h_bs_m - geom.h_user_m) * (geom.h_bs_m - geom.h_user_m);
            return 40.0 * lg_d + row.pl_b + row.pl_c * lg_f - 9.5 * std::log10(dh2);
        }
        return row.pl_a * lg_d + row.pl_b + row.pl_c * lg_f;
    }
    return row.pl_a * lg_d + row.pl_b + row.pl_c * lg_f +
           row.pl_hut * (geom.h_user_m - 1.5);
}

// Shared mapping of seven standard-normal variates (order SF, KF, DS, ASD,
// ASA, ZSD, ZSA) to physical large-scale parameters. Azimuth spreads are
// capped at 104 degrees and zenith spreads at 52 degrees per TR 38.901
// section 7.5 step 4.
LargeScaleParams lsp_from_normals(const arma::vec &v, const std::vector<ScenarioTable> &rows,
                                  const std::string &scenario, const LinkGeometry &geom,
                                  double fc_ghz)
{
    const ScenarioTable &t = scenario_lookup(rows, scenario, geom.los_state);
    LargeScaleParams lsp;
    lsp.sf_db = t.sf_db.sigma(fc_ghz) * v[CorrelatedFieldGrid::p_sf];
    lsp.kf_db = t.kf_db.mu(fc_ghz) + t.kf_db.sigma(fc_ghz) * v[CorrelatedFieldGrid::p_kf];
    lsp.ds_s = std::pow(10.0, t.lg_ds.mu(fc_ghz) +
                                  t.lg_ds.sigma(fc_ghz) * v[CorrelatedFieldGrid::p_ds]);
    lsp.asd_deg = std::min(
        std::pow(10.0, t.lg_asd.mu(fc_ghz) +
                           t.lg_asd.sigma(fc_ghz) * v[CorrelatedFieldGrid::p_asd]),
        104.0);
    lsp.asa_deg = std::min(
        std::pow(10.0, t.lg_asa.mu(fc_ghz) +
                           t.lg_asa.sigma(fc_ghz) * v[CorrelatedFieldGrid::p_asa]),
        104.0);
    lsp.esd_deg = std::min(
        std::pow(10.0, t.lg_zsd.mu(fc_ghz) +
                           t.lg_zsd.sigma(fc_ghz) * v[CorrelatedFieldGrid::p_zsd]),
        52.0);
    lsp.esa_deg = std::min(
        std::pow(10.0, t.lg_zsa.mu(fc_ghz) +
                           t.lg_zsa.sigma(fc_ghz) * v[CorrelatedFieldGrid::p_zsa]),
        52.0);
    lsp.pathloss_db = pathloss_db(rows, scenario, geom.los_state, geom, fc_ghz);
    return lsp;
}

arma::mat cholesky_lower(const arma::mat &xcorr)
{
    if (xcorr.n_rows != CorrelatedFieldGrid::n_params ||
        xcorr.n_cols != CorrelatedFieldGrid::n_params)
        throw std::invalid_argument(
            "posim::channel: the LSP correlation matrix must be 7 x 7");
    arma::mat left;
    if (!arma::chol(left, xcorr, "lower"))
        throw std::invalid_argument(
            "posim::channel: the LSP correlation matrix is not positive definite");
    return left;
}

struct ClusterAngles
{
    arma::vec deg;         // one angle per cluster, degrees
    double first_x = 1.0;  // sign draw of the first cluster
    double first_y = 0.0;  // jitter draw of the first cluster
};

// Cluster azimuths around a center direction per TR 38.901 section 7.5
// step 7 (inverse Gaussian shaping of the power-angle profile).
arma::vec cluster_azimuths(const arma::vec &power, double spread_deg, double c_phi,
                           double center_rad, bool los, Stream &stream)
{
    arma::uword n = power.n_elem;
    double p_max = power.max();
    arma::vec phi(n);
    double first_term = 0.0;
    for (arma::uword i = 0; i < n; ++i)
    {
        double shape = 2.0 * (spread_deg / 1.4) *
                       std::sqrt(-std::log(power[i] / p_max)) / c_phi;
        double x = stream.integer(2) == 0 ? -1.0 : 1.0;
        double y = stream.normal(0.0, spread_deg / 7.0);
        double term = x * shape + y;
        if (i == 0)
            first_term = term;
        phi[i] = term;
    }
    double center_deg = center_rad * deg_per_rad;
    for (arma::uword i = 0; i < n; ++i)
    {
        if (los)
            phi[i] += center_deg - first_term;
        else
            phi[i] += center_deg;
    }
    return phi;
}

// Cluster zeniths per TR 38.901 section 7.5 step 7 (inverse Laplacian
// shaping).
arma::vec cluster_zeniths(const arma::vec &power, double spread_deg, double c_theta,
                          double center_rad, bool los, Stream &stream)
{
    arma::uword n = power.n_elem;
    double p_max = power.max();
    arma::vec theta(n);
    double first_term = 0.0;
    for (arma::uword i = 0; i < n; ++i)
    {
        double shape = -spread_deg * std::log(power[i] / p_max) / c_theta;
        double x = stream.integer(2) == 0 ? -1.0 : 1.0;
        double y = stream.normal(0.0, spread_deg / 7.0);
        double term = x * shape + y;
        if (i == 0)
            first_term = term;
        theta[i] = term;
    }
    double center_deg = center_rad * deg_per_rad;
    for (arma::uword i = 0; i < n; ++i)
    {
        if (los)
            theta[i] += center_deg - first_term;
        else
            theta[i] += center_deg;
    }
    return theta;
}

// Signed vertical-polarization Fresnel reflection coefficient for grazing
// angle psi over a ground of relative permittivity eps (two-ray model).
double fresnel_vertical(double sin_psi, double eps)
{
    double cos2 = 1.0 - sin_psi * sin_psi;
    double root = std::sqrt(std::max(eps - cos2, 0.0));
    return (eps * sin_psi - root) / (eps * sin_psi + root);
}

} // namespace

bool CorrelatedFieldGrid::contains(const arma::vec2 &position) const
{
    if (field.empty())
        return false;
    double nx = static_cast<double>(field[0].n_rows);
    double ny = static_cast<double>(field[0].n_cols);
    double u = (position[0] - origin[0]) / spacing_m;
    double v = (position[1] - origin[1]) / spacing_m;
    return u >= 0.0 && v >= 0.0 && u <= nx - 1.0 && v <= ny - 1.0;
}

arma::mat element_positions(const ArrayGeometry &array, double wavelength_m)
{
    double d = array.element_spacing_m > 0.0 ? array.element_spacing_m : wavelength_m / 2.0;
    arma::mat pos(3, array.size(), arma::fill::zeros);
    arma::uword i = 0;
    for (arma::uword c = 0; c < array.cols; ++c)
        for (arma::uword r = 0; r < array.rows; ++r, ++i)
        {
            pos(1, i) = d * static_cast<double>(c);
            pos(2, i) = d * static_cast<double>(r);
        }
    return pos;
}

double element_pattern_amplitude(const ArrayGeometry &array, double azimuth, double zenith)
{
    if (array.pattern == ArrayGeometry::Pattern::isotropic)
        return 1.0;
    // TR 38.901 section 7.3: vertical/horizontal parabolic cuts, 65 degree
    // 3 dB beamwidths, 30 dB backlobe floor, 8 dBi peak gain.
    double zen_deg = zenith * deg_per_rad;
    double az_deg = wrap_pi(azimuth) * deg_per_rad;
    double a_v = -std::min(12.0 * std::pow((zen_deg - 90.0) / 65.0, 2), 30.0);
    double a_h = -std::min(12.0 * std::pow(az_deg / 65.0, 2), 30.0);
    double a_db = -std::min(-(a_v + a_h), 30.0);
    return db2mag(8.0 + a_db);
}

double los_probability(const std::string &scenario, double d2d_m)
{
    // TR 38.901 table 7.4.2-1.
    if (scenario == "indoor-office")
    {
        if (d2d_m <= 5.0)
            return 1.0;
        if (d2d_m <= 49.0)
            return std::exp(-(d2d_m - 5.0) / 70.8);
        return 0.54 * std::exp(-(d2d_m - 49.0) / 211.7);
    }
    if (scenario == "umi")
    {
        if (d2d_m <= 18.0)
            return 1.0;
        return 18.0 / d2d_m + std::exp(-d2d_m / 36.0) * (1.0 - 18.0 / d2d_m);
    }
    if (scenario == "uma")
    {
        if (d2d_m <= 18.0)
            return 1.0;
        return 18.0 / d2d_m + std::exp(-d2d_m / 63.0) * (1.0 - 18.0 / d2d_m);
    }
    if (scenario == "rma")
    {
        if (d2d_m <= 10.0)
            return 1.0;
        return std::exp(-(d2d_m - 10.0) / 1000.0);
    }
    throw std::invalid_argument("posim::los_probability: no model for scenario '" + scenario +
                                "'; force the LOS state instead");
}

double pathloss_db(const std::vector<ScenarioTable> &rows, const std::string &scenario,
                   bool los, const LinkGeometry &geom, double fc_ghz)
{
    const ScenarioTable &row = scenario_lookup(rows, scenario, los);
    double pl = pathloss_one_row(row, geom, fc_ghz);
    if (!los && row.pl_nlos_floor)
    {
        const ScenarioTable &los_row = scenario_lookup(rows, scenario, true);
        pl = std::max(pl, pathloss_one_row(los_row, geom, fc_ghz));
    }
    return pl;
}

LinkGeometry compute_geometry(const SystemConfig &system, const ChannelConfig &channel,
                              arma::uword bs_index, arma::uword user_index, Stream &stream)
{
    if (bs_index >= system.bs_positions.size() || user_index >= system.user_positions.size())
        throw std::invalid_argument("posim::compute_geometry: index out of range");
    const arma::vec3 &bs = system.bs_positions[bs_index];
    const arma::vec3 &user = system.user_positions[user_index];

    arma::vec3 delta = user - bs;
    LinkGeometry geom;
    geom.d2d_m = std::hypot(delta[0], delta[1]);
    geom.d3d_m = arma::norm(delta);
    if (geom.d3d_m < 1e-9)
        throw std::invalid_argument("posim::compute_geometry: BS and user coincide");

    geom.h_bs_m = bs[2];
    geom.h_user_m = user[2];
    geom.ground_distance_m = std::sqrt(geom.d2d_m * geom.d2d_m +
                                       (bs[2] + user[2]) * (bs[2] + user[2]));

    double az_global_bs = std::atan2(delta[1], delta[0]);
    double az_global_user = std::atan2(-delta[1], -delta[0]);
    geom.az_bs = wrap_pi(az_global_bs - system.bs_orientation_rad[bs_index]);
    geom.az_user = wrap_pi(az_global_user - system.user_orientation_rad[user_index]);
    geom.zen_bs = std::acos(std::clamp(delta[2] / geom.d3d_m, -1.0, 1.0));
    geom.zen_user = std::acos(std::clamp(-delta[2] / geom.d3d_m, -1.0, 1.0));

    switch (channel.los_mode)
    {
    case ChannelConfig::LosMode::forced_los:
        geom.los_state = true;
        break;
    case ChannelConfig::LosMode::forced_nlos:
        geom.los_state = false;
        break;
    case ChannelConfig::LosMode::probabilistic:
        geom.los_state = stream.uniform(0.0, 1.0) < los_probability(system.scenario, geom.d2d_m);
        break;
    }
    geom.o2i_state = channel.o2i;
    return geom;
}

CorrelatedFieldGrid generate_lsp_fields(const ScenarioTable &table, const arma::vec2 &lo,
                                        const arma::vec2 &hi, const arma::mat &xcorr,
                                        Stream &stream)
{
    if (hi[0] < lo[0] || hi[1] < lo[1])
        throw std::invalid_argument("posim::generate_lsp_fields: empty region");

    const double dcorr[CorrelatedFieldGrid::n_params] = {
        table.dcorr_sf, table.dcorr_kf, table.dcorr_ds, table.dcorr_asd,
        table.dcorr_asa, table.dcorr_zsd, table.dcorr_zsa};

    double spacing = *std::min_element(dcorr, dcorr + CorrelatedFieldGrid::n_params) / 4.0;
    spacing = std::max(spacing, 0.5);

    CorrelatedFieldGrid grid;
    grid.spacing_m = spacing;
    grid.origin = {lo[0] - spacing, lo[1] - spacing};
    arma::uword nx =
        static_cast<arma::uword>(std::ceil((hi[0] + spacing - grid.origin[0]) / spacing)) + 1;
    arma::uword ny =
        static_cast<arma::uword>(std::ceil((hi[1] + spacing - grid.origin[1]) / spacing)) + 1;

    grid.field.resize(CorrelatedFieldGrid::n_params);
    for (arma::uword p = 0; p < CorrelatedFieldGrid::n_params; ++p)
    {
        arma::mat m(stream.normal_vec(nx * ny).memptr(), nx, ny);
        double rho = std::exp(-spacing / dcorr[p]);
        double mix = std::sqrt(1.0 - rho * rho);
        for (arma::uword j = 0; j < ny; ++j)
            for (arma::uword i = 1; i < nx; ++i)
                m(i, j) = rho * m(i - 1, j) + mix * m(i, j);
        for (arma::uword i = 0; i < nx; ++i)
            for (arma::uword j = 1; j < ny; ++j)
                m(i, j) = rho * m(i, j - 1) + mix * m(i, j);
        grid.field[p] = std::move(m);
    }

    bool identity = arma::approx_equal(
        xcorr, arma::eye(CorrelatedFieldGrid::n_params, CorrelatedFieldGrid::n_params),
        "absdiff", 0.0);
    if (!identity)
    {
        arma::mat left = cholesky_lower(xcorr);
        for (arma::uword j = 0; j < ny; ++j)
            for (arma::uword i = 0; i < nx; ++i)
            {
                arma::vec v(CorrelatedFieldGrid::n_params);
                for (arma::uword p = 0; p < CorrelatedFieldGrid::n_params; ++p)
                    v[p] = grid.field[p](i, j);
                v = left * v;
                for (arma::uword p = 0; p < CorrelatedFieldGrid::n_params; ++p)
                    grid.field[p](i, j) = v[p];
            }
    }
    return grid;
}

double interpolate_consistency(double eta00, double eta10, double eta01, double eta11,
                               double alpha, double beta, double d_corr)
{
    if (d_corr <= 0.0)
        throw std::invalid_argument("posim::interpolate_consistency: d_corr must be > 0");
    if (alpha < 0.0 || alpha > d_corr || beta < 0.0 || beta > d_corr)
        throw std::invalid_argument(
            "posim::interpolate_consistency: offsets must lie in [0, d_corr]");

    double a = alpha, b = beta, d = d_corr;
    return (std::sqrt((d - a) * (d - b)) * eta00 + std::sqrt(a * (d - b)) * eta10 +
            std::sqrt((d - a) * b) * eta01 + std::sqrt(a * b) * eta11) /
           d;
}

LargeScaleParams draw_lsp(const CorrelatedFieldGrid &fields, const arma::vec2 &position,
                          const std::vector<ScenarioTable> &rows, const std::string &scenario,
                          const LinkGeometry &geom, double fc_ghz)
{
    if (!fields.contains(position))
        throw std::invalid_argument("posim::draw_lsp: position outside the field lattice");

    double u = (position[0] - fields.origin[0]) / fields.spacing_m;
    double v = (position[1] - fields.origin[1]) / fields.spacing_m;
    arma::uword i0 = std::min(static_cast<arma::uword>(u), fields.field[0].n_rows - 2);
    arma::uword j0 = std::min(static_cast<arma::uword>(v), fields.field[0].n_cols - 2);
    double fu = u - static_cast<double>(i0);
    double fv = v - static_cast<double>(j0);

    arma::vec values(CorrelatedFieldGrid::n_params);
    for (arma::uword p = 0; p < CorrelatedFieldGrid::n_params; ++p)
    {
        const arma::mat &m = fields.field[p];
        values[p] = (1.0 - fu) * (1.0 - fv) * m(i0, j0) + fu * (1.0 - fv) * m(i0 + 1, j0) +
                    (1.0 - fu) * fv * m(i0, j0 + 1) + fu * fv * m(i0 + 1, j0 + 1);
    }
    return lsp_from_normals(values, rows, scenario, geom, fc_ghz);
}

LargeScaleParams draw_lsp(Stream &stream, const arma::mat &xcorr,
                          const std::vector<ScenarioTable> &rows, const std::string &scenario,
                          const LinkGeometry &geom, double fc_ghz)
{
    arma::vec v = stream.normal_vec(CorrelatedFieldGrid::n_params);
    bool identity = arma::approx_equal(
        xcorr, arma::eye(CorrelatedFieldGrid::n_params, CorrelatedFieldGrid::n_params),
        "absdiff", 0.0);
    if (!identity)
        v = cholesky_lower(xcorr) * v;
    return lsp_from_normals(v, rows, scenario, geom, fc_ghz);
}

PathSet generate_small_scale(const LargeScaleParams &lsp, const LinkGeometry &geom,
                             const ScenarioTable &table, arma::uword rays_per_cluster,
                             ChannelConfig::ToaType toa, bool ground_reflection,
                             double ground_permittivity, double wavelength_m, Stream &stream)
{
    if (table.cluster_count < 1)
        throw std::invalid_argument("posim::generate_small_scale: cluster_count must be >= 1");
    if (rays_per_cluster != 1 && rays_per_cluster != 20)
        throw std::invalid_argument(
            "posim::generate_small_scale: rays_per_cluster must be 1 or 20");

    arma::uword n = table.cluster_count;
    bool los = geom.los_state;
    double kf = lsp.kf_db;
    double k_lin = los ? db2lin(kf) : 0.0;
    double fc_ghz = speed_of_light / wavelength_m / 1e9;

    // Cluster delays: exponential profile scaled by r_tau and the delay
    // spread (TR 38.901 section 7.5 step 5).
    arma::vec tau(n);
    for (arma::uword i = 0; i < n; ++i)
        tau[i] = -table.r_tau * lsp.ds_s * std::log(stream.uniform(0.0, 1.0));
    tau = arma::sort(tau);
    tau -= tau.min();

    // Cluster powers with per-cluster shadowing from the unscaled delays
    // (step 6); the Ricean share is split off as a separate LOS path.
    arma::vec power(n);
    for (arma::uword i = 0; i < n; ++i)
    {
        double shadow = stream.normal(0.0, table.per_cluster_shadow_db);
        power[i] = std::exp(-tau[i] * (table.r_tau - 1.0) / (table.r_tau * lsp.ds_s)) *
                   std::pow(10.0, -shadow / 10.0);
    }
    power /= arma::accu(power);
    double los_power = 0.0;
    if (los)
    {
        power /= (1.0 + k_lin);
        los_power = k_lin / (1.0 + k_lin);
    }

    // LOS peak compensation of the cluster delays (step 5).
    arma::vec tau_used = tau;
    if (los)
    {
        double c_tau = 0.7705 - 0.0433 * kf + 2e-4 * kf * kf + 17e-6 * kf * kf * kf;
        tau_used /= c_tau;
    }

    double c_phi = c_phi_nlos(n);
    double c_theta = c_theta_nlos(n);
    if (los)
    {
        c_phi *= 1.1035 - 0.028 * kf - 0.002 * kf * kf + 1e-4 * kf * kf * kf;
        c_theta *= 1.3086 + 0.0339 * kf - 0.0077 * kf * kf + 2e-4 * kf * kf * kf;
    }

    arma::vec az_bs = cluster_azimuths(power, lsp.asd_deg, c_phi, geom.az_bs, los, stream);
    arma::vec az_user = cluster_azimuths(power, lsp.asa_deg, c_phi, geom.az_user, los, stream);
    arma::vec zen_bs =
        cluster_zeniths(power, lsp.esd_deg, c_theta, geom.zen_bs, los, stream);
    arma::vec zen_user =
        cluster_zeniths(power, lsp.esa_deg, c_theta, geom.zen_user, los, stream);

    double toa_base = (toa == ChannelConfig::ToaType::absolute)
                          ? geom.d3d_m / speed_of_light
                          : 0.0;

    PathSet set;
    set.pathloss_db = lsp.pathloss_db;
    set.sf_db = lsp.sf_db;
    set.paths.reserve(2 + n * rays_per_cluster);

    if (los)
    {
        Path p;
        p.delay_s = toa_base;
        p.power_lin = los_power;
        p.bs_az = geom.az_bs;
        p.bs_zen = geom.zen_bs;
        p.user_az = geom.az_user;
        p.user_zen = geom.zen_user;
        p.is_los = true;
        set.paths.push_back(p);
    }

    if (ground_reflection && los)
    {
        double sin_psi = (geom.h_bs_m + geom.h_user_m) / geom.ground_distance_m;
        double gamma = fresnel_vertical(sin_psi, ground_permittivity);
        Path p;
        p.delay_s = toa_base + (geom.ground_distance_m - geom.d3d_m) / speed_of_light;
        p.power_lin = los_power * gamma * gamma *
                      (geom.d3d_m * geom.d3d_m) /
                      (geom.ground_distance_m * geom.ground_distance_m);
        p.bs_az = geom.az_bs;
        p.bs_zen = std::acos(
            std::clamp(-(geom.h_user_m + geom.h_bs_m) / geom.ground_distance_m, -1.0, 1.0));
        p.user_az = geom.az_user;
        p.user_zen = p.bs_zen;
        p.init_phase_rad = gamma < 0.0 ? pi : 0.0;
        p.is_ground_reflection = true;
        set.paths.push_back(p);
    }

    // Intra-cluster ray offsets (step 7) scaled by the per-cluster spreads;
    // the zenith departure spread follows c_zsd = (3/8) 10^mu_lgZSD.
    double c_zsd_deg = 0.375 * std::pow(10.0, table.lg_zsd.mu(fc_ghz));
    std::vector<arma::uword> coupling(rays_per_cluster);
    for (arma::uword m = 0; m < rays_per_cluster; ++m)
        coupling[m] = m;

    for (arma::uword i = 0; i < n; ++i)
    {
        if (rays_per_cluster == 1)
        {
            Path p;
            p.delay_s = toa_base + tau_used[i];
            p.power_lin = power[i];
            p.bs_az = wrap_pi(az_bs[i] / deg_per_rad);
            p.bs_zen = wrap_zenith_deg(zen_bs[i]) / deg_per_rad;
            p.user_az = wrap_pi(az_user[i] / deg_per_rad);
            p.user_zen = wrap_zenith_deg(zen_user[i]) / deg_per_rad;
            p.xpr_db = stream.normal(table.xpr_mu_db, table.xpr_sigma_db);
            set.paths.push_back(p);
            continue;
        }

        // Random coupling of rays between the two ends (step 8).
        std::vector<arma::uword> pair_az = coupling;
        std::vector<arma::uword> pair_zen = coupling;
        std::shuffle(pair_az.begin(), pair_az.end(), stream.engine());
        std::shuffle(pair_zen.begin(), pair_zen.end(), stream.engine());

        const arma::vec &off = ray_offsets();
        for (arma::uword m = 0; m < rays_per_cluster; ++m)
        {
            Path p;
            p.delay_s = toa_base + tau_used[i];
            p.power_lin = power[i] / static_cast<double>(rays_per_cluster);
            p.bs_az = wrap_pi((az_bs[i] + table.c_asd_deg * off[m]) / deg_per_rad);
            p.user_az =
                wrap_pi((az_user[i] + table.c_asa_deg * off[pair_az[m]]) / deg_per_rad);
            p.bs_zen = wrap_zenith_deg(zen_bs[i] + c_zsd_deg * off[pair_zen[m]]) / deg_per_rad;
            p.user_zen =
                wrap_zenith_deg(zen_user[i] + table.c_zsa_deg * off[pair_zen[m]]) / deg_per_rad;
            p.xpr_db = stream.normal(table.xpr_mu_db, table.xpr_sigma_db);
            set.paths.push_back(p);
        }
    }

    // Renormalize so all path powers sum to one (the ground reflection drew
    // extra power from the model).
    double total = 0.0;
    for (const Path &p : set.paths)
        total += p.power_lin;
    for (Path &p : set.paths)
        p.power_lin /= total;
    return set;
}

void generate_coefficients(PathSet &pathset, const SystemConfig &system,
                           arma::uword bs_index, arma::uword user_index,
                           const ChannelConfig &channel, ChannelConfig::CoefMode mode,
                           Stream &stream)
{
    (void)bs_index;
    (void)user_index;
    double lambda = system.wavelength_m;
    arma::mat pos_bs = element_positions(system.bs_array, lambda);
    arma::mat pos_user = element_positions(system.user_array, lambda);
    bool uplink = system.direction == SystemConfig::Direction::uplink;

    if (mode == ChannelConfig::CoefMode::los_only)
    {
        std::vector<Path> keep;
        for (const Path &p : pathset.paths)
            if (p.is_los)
                keep.push_back(p);
        if (keep.empty())
            throw std::invalid_argument(
                "posim::generate_coefficients: los-only mode on a link without a LOS path");
        keep[0].power_lin = 1.0;
        pathset.paths = keep;
    }

    double amp_scale = db2mag(-(pathset.pathloss_db + pathset.sf_db));

    for (Path &p : pathset.paths)
    {
        arma::vec3 u_bs = unit_vector(p.bs_az, p.bs_zen);
        arma::vec3 u_user = unit_vector(p.user_az, p.user_zen);

        arma::cx_vec a_bs(pos_bs.n_cols);
        for (arma::uword i = 0; i < pos_bs.n_cols; ++i)
            a_bs[i] = std::polar(1.0, -2.0 * pi * arma::dot(pos_bs.col(i), u_bs) / lambda);
        arma::cx_vec a_user(pos_user.n_cols);
        for (arma::uword i = 0; i < pos_user.n_cols; ++i)
            a_user[i] =
                std::polar(1.0, -2.0 * pi * arma::dot(pos_user.col(i), u_user) / lambda);

        double phase;
        if (p.is_los || p.is_ground_reflection)
            phase = -2.0 * pi * speed_of_light * p.delay_s / lambda + p.init_phase_rad;
        else
            phase = stream.uniform(-pi, pi);

        p.doppler_hz = 0.0;
        if (mode == ChannelConfig::CoefMode::dynamic)
        {
            arma::vec3 v = channel.user_velocity_mps;
            double bearing = system.user_orientation_rad[user_index];
            arma::vec3 v_local = {v[0] * std::cos(bearing) + v[1] * std::sin(bearing),
                                  -v[0] * std::sin(bearing) + v[1] * std::cos(bearing), v[2]};
            p.doppler_hz = arma::dot(v_local, u_user) / lambda;
        }

        double amp = std::sqrt(p.power_lin) * amp_scale *
                     element_pattern_amplitude(system.bs_array, p.bs_az, p.bs_zen) *
                     element_pattern_amplitude(system.user_array, p.user_az, p.user_zen);

        cxd scale = std::polar(amp, phase);
        if (uplink)
            p.coef = scale * (a_bs * a_user.st());
        else
            p.coef = scale * (a_user * a_bs.st());
    }
}

arma::cx_vec path_cfr(double delay_s, double amplitude, const arma::vec &subcarrier_indices,
                      double subcarrier_spacing_hz)
{
    arma::cx_vec cfr(subcarrier_indices.n_elem);
    for (arma::uword i = 0; i < subcarrier_indices.n_elem; ++i)
        cfr[i] = std::polar(amplitude,
                            -2.0 * pi * subcarrier_spacing_hz * delay_s * subcarrier_indices[i]);
    return cfr;
}

arma::vec active_subcarrier_indices(const ResourceGrid &grid, const CarrierConfig &carrier)
{
    arma::vec idx(grid.n_subcarriers());
    double half = static_cast<double>(carrier.fft_length) / 2.0;
    for (arma::uword k = 0; k < grid.n_subcarriers(); ++k)
        idx[k] = static_cast<double>(k + grid.subcarrier0_offset) - half;
    return idx;
}

bool delays_exceed_cp(const PathSet &pathset, const CarrierConfig &carrier)
{
    double cp_s = static_cast<double>(carrier.cp_length()) / carrier.sample_rate_hz;
    for (const Path &p : pathset.paths)
        if (p.delay_s > cp_s)
            return true;
    return false;
}

ResourceGrid apply_channel_grid(const ResourceGrid &tx, const PathSet &pathset,
                                const CarrierConfig &carrier)
{
    arma::uword n_rx = pathset.paths.empty() ? 1 : pathset.paths[0].coef.n_rows;
    arma::uword n_tx = tx.n_ports();
    arma::uword k_act = tx.n_subcarriers();
    arma::uword n_sym = tx.n_symbols();

    ResourceGrid rx;
    rx.symbols.zeros(k_act, n_sym, n_rx);
    rx.occupied.ones(k_act, n_sym, n_rx);
    rx.subcarrier0_offset = tx.subcarrier0_offset;
    if (pathset.paths.empty())
        return rx;

    arma::vec k_idx = active_subcarrier_indices(tx, carrier);
    arma::cx_mat cfr(k_act, pathset.paths.size());
    for (std::size_t p = 0; p < pathset.paths.size(); ++p)
        cfr.col(p) = path_cfr(pathset.paths[p].delay_s, 1.0, k_idx,
                              carrier.subcarrier_spacing_hz);

    bool dynamic = false;
    for (const Path &p : pathset.paths)
        if (p.doppler_hz != 0.0)
            dynamic = true;

    double sym_duration = static_cast<double>(carrier.samples_per_symbol()) /
                          carrier.sample_rate_hz;

    // Per (rx, tx) combined CFR; rebuilt per symbol only under Doppler.
    arma::cx_cube h(k_act, n_rx, n_tx);
    auto build = [&](double t_s) {
        h.zeros();
        for (std::size_t p = 0; p < pathset.paths.size(); ++p)
        {
            const Path &path = pathset.paths[p];
            cxd rot = dynamic ? std::polar(1.0, 2.0 * pi * path.doppler_hz * t_s) : cxd(1.0);
            for (arma::uword t = 0; t < n_tx; ++t)
                for (arma::uword r = 0; r < n_rx; ++r)
                    h.slice(t).col(r) += (path.coef(r, t) * rot) * cfr.col(p);
        }
    };
    if (!dynamic)
        build(0.0);

    for (arma::uword s = 0; s < n_sym; ++s)
    {
        bool any = false;
        for (arma::uword t = 0; t < n_tx && !any; ++t)
            any = arma::accu(tx.occupied.slice(t).col(s)) > 0;
        if (!any)
            continue;
        if (dynamic)
            build(static_cast<double>(s) * sym_duration);
        for (arma::uword t = 0; t < n_tx; ++t)
        {
            arma::cx_vec x = tx.symbols.slice(t).col(s);
            for (arma::uword r = 0; r < n_rx; ++r)
                rx.symbols.slice(r).col(s) += h.slice(t).col(r) % x;
        }
    }
    return rx;
}

BasebandWaveform apply_channel(const BasebandWaveform &tx, const PathSet &pathset,
                               const CarrierConfig &carrier)
{
    arma::uword k_fft = carrier.fft_length;
    arma::uword cp = carrier.cp_length();
    arma::uword sym_len = cp + k_fft;
    if (tx.samples.n_rows % sym_len != 0)
        throw std::invalid_argument(
            "posim::apply_channel: waveform length is not a whole number of symbols");
    arma::uword n_sym = tx.samples.n_rows / sym_len;
    arma::uword n_tx = tx.n_ports();
    arma::uword n_rx = pathset.paths.empty() ? 1 : pathset.paths[0].coef.n_rows;

    BasebandWaveform rx;
    rx.samples.zeros(tx.samples.n_rows, n_rx);
    rx.sample_rate_hz = tx.sample_rate_hz;
    rx.symbol_start = tx.symbol_start;
    rx.cp_length = tx.cp_length;
    rx.fft_length = tx.fft_length;
    if (pathset.paths.empty())
        return rx;

    // Centered bin index of every natural-order FFT bin.
    arma::vec bins(k_fft);
    for (arma::uword k = 0; k < k_fft; ++k)
        bins[k] = k < k_fft / 2 ? static_cast<double>(k)
                                : static_cast<double>(k) - static_cast<double>(k_fft);

    arma::cx_mat cfr(k_fft, pathset.paths.size());
    for (std::size_t p = 0; p < pathset.paths.size(); ++p)
        cfr.col(p) = path_cfr(pathset.paths[p].delay_s, 1.0, bins,
                              carrier.subcarrier_spacing_hz);

    bool dynamic = false;
    for (const Path &p : pathset.paths)
        if (p.doppler_hz != 0.0)
            dynamic = true;

    double sym_duration = static_cast<double>(sym_len) / carrier.sample_rate_hz;

    arma::cx_cube h(k_fft, n_rx, n_tx);
    auto build = [&](double t_s) {
        h.zeros();
        for (std::size_t p = 0; p < pathset.paths.size(); ++p)
        {
            const Path &path = pathset.paths[p];
            cxd rot = dynamic ? std::polar(1.0, 2.0 * pi * path.doppler_hz * t_s) : cxd(1.0);
            for (arma::uword t = 0; t < n_tx; ++t)
                for (arma::uword r = 0; r < n_rx; ++r)
                    h.slice(t).col(r) += (path.coef(r, t) * rot) * cfr.col(p);
        }
    };
    if (!dynamic)
        build(0.0);

    for (arma::uword s = 0; s < n_sym; ++s)
    {
        if (dynamic)
            build(static_cast<double>(s) * sym_duration);
        arma::uword base = s * sym_len;
        for (arma::uword t = 0; t < n_tx; ++t)
        {
            arma::cx_vec body = tx.samples.col(t).subvec(base + cp, base + sym_len - 1);
            arma::cx_vec freq = arma::fft(body);
            for (arma::uword r = 0; r < n_rx; ++r)
            {
                arma::cx_vec out = arma::ifft(arma::cx_vec(h.slice(t).col(r) % freq));
                rx.samples.col(r).subvec(base + cp, base + sym_len - 1) += out;
                rx.samples.col(r).subvec(base, base + cp - 1) += out.tail(cp);
            }
        }
    }
    return rx;
}

double mean_occupied_power(const ResourceGrid &rx, const arma::ucube &tx_occupied)
{
    arma::umat mask = tx_occupied.slice(0);
    for (arma::uword t = 1; t < tx_occupied.n_slices; ++t)
        mask = arma::max(mask, tx_occupied.slice(t));

    double sum = 0.0;
    arma::uword count = 0;
    for (arma::uword r = 0; r < rx.n_ports(); ++r)
        for (arma::uword s = 0; s < rx.n_symbols(); ++s)
            for (arma::uword k = 0; k < rx.n_subcarriers(); ++k)
                if (mask(k, s))
                {
                    sum += std::norm(rx.symbols(k, s, r));
                    ++count;
                }
    if (count == 0)
        throw std::invalid_argument("posim::mean_occupied_power: no occupied entries");
    return sum / static_cast<double>(count);
}

void add_awgn(ResourceGrid &grid, double sigma2, Stream &stream)
{
    double scale = std::sqrt(sigma2);
    arma::cx_vec noise = stream.cnormal_vec(grid.symbols.n_elem);
    for (arma::uword i = 0; i < grid.symbols.n_elem; ++i)
        grid.symbols(i) += scale * noise[i];
}

void add_awgn(BasebandWaveform &waveform, double sigma2, Stream &stream)
{
    double scale = std::sqrt(sigma2);
    arma::cx_vec noise = stream.cnormal_vec(waveform.samples.n_elem);
    for (arma::uword i = 0; i < waveform.samples.n_elem; ++i)
        waveform.samples(i) += scale * noise[i];
}

void append_pathset(std::ostream &out, arma::uword drop, arma::uword link,
                    const PathSet &pathset)
{
    out << std::setprecision(12);
    for (std::size_t p = 0; p < pathset.paths.size(); ++p)
    {
        const Path &path = pathset.paths[p];
        out << drop << '\t' << link << '\t' << p << '\t' << path.delay_s << '\t'
            << path.power_lin << '\t' << path.bs_az * deg_per_rad << '\t'
            << path.bs_zen * deg_per_rad << '\t' << path.user_az * deg_per_rad << '\t'
            << path.user_zen * deg_per_rad << '\t' << (path.is_los ? 1 : 0) << '\t'
            << (path.is_ground_reflection ? 1 : 0) << '\n';
    }
}

} // namespace posim
