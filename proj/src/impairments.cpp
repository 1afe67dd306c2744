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

#include "posim/impairments.hpp"
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace posim
{

namespace
{

// Bracketing index and fractional weight of x on an ascending axis. A
// single-knot axis accepts only (numerically) that knot.
struct AxisPos
{
    arma::uword i0 = 0;
    double w = 0.0;
};

bool axis_contains(const arma::vec &axis, double x)
{
    if (axis.n_elem == 1)
        return std::abs(x - axis[0]) <= 1e-9 * std::max(1.0, std::abs(axis[0]));
    return x >= axis.front() && x <= axis.back();
}

AxisPos axis_locate(const arma::vec &axis, double x)
{
    AxisPos pos;
    if (axis.n_elem == 1)
        return pos;
    arma::uword hi = 1;
    while (hi + 1 < axis.n_elem && axis[hi] < x)
        ++hi;
    pos.i0 = hi - 1;
    pos.w = (x - axis[pos.i0]) / (axis[hi] - axis[pos.i0]);
    return pos;
}

double normalized_coordinate(const arma::vec &axis, double x)
{
    double lo = axis.front(), hi = axis.back();
    if (hi == lo)
        return 0.0;
    return (2.0 * x - lo - hi) / (hi - lo);
}

} // namespace

bool ApoTable::covers(double subcarrier, double az_deg, double el_deg) const
{
    return axis_contains(subcarrier_axis, subcarrier) && axis_contains(az_axis_deg, az_deg) &&
           axis_contains(el_axis_deg, el_deg);
}

double ApoTable::interpolate(arma::uword antenna, double subcarrier, double az_deg,
                             double el_deg) const
{
    if (antenna >= n_antennas())
        throw std::invalid_argument("posim::ApoTable::interpolate: antenna out of range");
    if (!covers(subcarrier, az_deg, el_deg))
        throw std::invalid_argument(
            "posim::ApoTable::interpolate: query outside the table hull, extrapolation refused");

    AxisPos k = axis_locate(subcarrier_axis, subcarrier);
    AxisPos a = axis_locate(az_axis_deg, az_deg);
    AxisPos e = axis_locate(el_axis_deg, el_deg);
    const arma::cube &c = phase_rad[antenna];
    auto corner = [&](arma::uword dk, arma::uword da, arma::uword de) {
        return c(k.i0 + dk, a.i0 + da, e.i0 + de);
    };
    auto blend_k = [&](arma::uword da, arma::uword de) {
        if (subcarrier_axis.n_elem == 1)
            return corner(0, da, de);
        return (1.0 - k.w) * corner(0, da, de) + k.w * corner(1, da, de);
    };
    auto blend_a = [&](arma::uword de) {
        if (az_axis_deg.n_elem == 1)
            return blend_k(0, de);
        return (1.0 - a.w) * blend_k(0, de) + a.w * blend_k(1, de);
    };
    if (el_axis_deg.n_elem == 1)
        return blend_a(0);
    return (1.0 - e.w) * blend_a(0) + e.w * blend_a(1);
}

ApoTable load_apo_table(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("posim::load_apo_table: cannot open '" + path + "'");

    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::vector<std::string> names;
    for (std::string w; hs >> w;)
        names.push_back(w);
    auto col = [&](const std::string &name) {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end())
            throw std::invalid_argument("posim::load_apo_table: '" + path +
                                        "' is missing column '" + name + "'");
        return static_cast<arma::uword>(it - names.begin());
    };
    arma::uword c_ant = col("antenna"), c_sub = col("subcarrier"), c_az = col("az_deg"),
                c_el = col("el_deg"), c_ph = col("phase_rad");

    struct Row
    {
        arma::uword antenna;
        double sub, az, el, phase;
    };
    std::vector<Row> rows;
    std::set<double> subs, azs, els;
    arma::uword n_ant = 0;
    for (std::string line; std::getline(in, line);)
    {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::vector<double> v;
        for (double d; ls >> d;)
            v.push_back(d);
        if (v.size() != names.size())
            throw std::invalid_argument("posim::load_apo_table: malformed row in '" + path + "'");
        Row r{static_cast<arma::uword>(v[c_ant]), v[c_sub], v[c_az], v[c_el], v[c_ph]};
        n_ant = std::max(n_ant, r.antenna + 1);
        subs.insert(r.sub);
        azs.insert(r.az);
        els.insert(r.el);
        rows.push_back(r);
    }
    if (rows.empty())
        throw std::invalid_argument("posim::load_apo_table: '" + path + "' holds no data rows");

    ApoTable table;
    table.subcarrier_axis = arma::vec(std::vector<double>(subs.begin(), subs.end()));
    table.az_axis_deg = arma::vec(std::vector<double>(azs.begin(), azs.end()));
    table.el_axis_deg = arma::vec(std::vector<double>(els.begin(), els.end()));
    table.phase_rad.assign(n_ant, arma::cube(subs.size(), azs.size(), els.size(),
                                             arma::fill::value(arma::datum::nan)));
    auto index_of = [](const arma::vec &axis, double x) {
        return static_cast<arma::uword>(
            std::lower_bound(axis.begin(), axis.end(), x) - axis.begin());
    };
    for (const Row &r : rows)
    {
        arma::uword ik = index_of(table.subcarrier_axis, r.sub);
        arma::uword ia = index_of(table.az_axis_deg, r.az);
        arma::uword ie = index_of(table.el_axis_deg, r.el);
        double &slot = table.phase_rad[r.antenna](ik, ia, ie);
        if (!std::isnan(slot))
            throw std::invalid_argument("posim::load_apo_table: duplicate lattice point in '" +
                                        path + "'");
        slot = r.phase;
    }
    for (const arma::cube &c : table.phase_rad)
        if (c.has_nan())
            throw std::invalid_argument("posim::load_apo_table: '" + path +
                                        "' does not fill a complete lattice");
    return table;
}

void save_apo_table(const std::string &path, const ApoTable &table)
{
    std::ofstream out(path);
    if (!out)
        throw std::invalid_argument("posim::save_apo_table: cannot open '" + path + "'");
    out << "antenna\tsubcarrier\taz_deg\tel_deg\tphase_rad\n";
    out.precision(17);
    for (arma::uword l = 0; l < table.n_antennas(); ++l)
        for (arma::uword ik = 0; ik < table.subcarrier_axis.n_elem; ++ik)
            for (arma::uword ia = 0; ia < table.az_axis_deg.n_elem; ++ia)
                for (arma::uword ie = 0; ie < table.el_axis_deg.n_elem; ++ie)
                    out << l << '\t' << table.subcarrier_axis[ik] << '\t'
                        << table.az_axis_deg[ia] << '\t' << table.el_axis_deg[ie] << '\t'
                        << table.phase_rad[l](ik, ia, ie) << '\n';
}

ApoTable synthesize_apo_table(arma::uword n_antennas, const arma::vec &subcarrier_indices,
                              double amplitude_rad, arma::uword terms, std::uint64_t seed)
{
    if (n_antennas == 0 || terms == 0)
        throw std::invalid_argument(
            "posim::synthesize_apo_table: n_antennas and terms must be >= 1");
    if (subcarrier_indices.empty())
        throw std::invalid_argument("posim::synthesize_apo_table: empty subcarrier range");

    ApoTable table;
    double k_lo = subcarrier_indices.min(), k_hi = subcarrier_indices.max();
    table.subcarrier_axis = k_lo == k_hi ? arma::vec{k_lo} : arma::linspace(k_lo, k_hi, 5);
    table.az_axis_deg = arma::regspace(-90.0, 7.5, 90.0);
    table.el_axis_deg = arma::regspace(0.0, 15.0, 180.0);

    Stream stream(seed);
    for (arma::uword l = 0; l < n_antennas; ++l)
    {
        arma::cube c(table.subcarrier_axis.n_elem, table.az_axis_deg.n_elem,
                     table.el_axis_deg.n_elem, arma::fill::zeros);
        for (arma::uword t = 0; t < terms; ++t)
        {
            double amp = stream.normal();
            double wk = stream.uniform(0.25, 1.0) * pi;
            double wa = stream.uniform(0.25, 1.0) * pi;
            double we = stream.uniform(0.25, 1.0) * pi;
            double phase0 = stream.uniform(0.0, 2.0 * pi);
            for (arma::uword ik = 0; ik < c.n_rows; ++ik)
                for (arma::uword ia = 0; ia < c.n_cols; ++ia)
                    for (arma::uword ie = 0; ie < c.n_slices; ++ie)
                    {
                        double xk = normalized_coordinate(table.subcarrier_axis,
                                                          table.subcarrier_axis[ik]);
                        double xa =
                            normalized_coordinate(table.az_axis_deg, table.az_axis_deg[ia]);
                        double xe =
                            normalized_coordinate(table.el_axis_deg, table.el_axis_deg[ie]);
                        c(ik, ia, ie) += amp * std::cos(wk * xk + wa * xa + we * xe + phase0);
                    }
        }
        double peak = arma::abs(c).max();
        if (peak > 0.0)
            c *= amplitude_rad / peak;
        table.phase_rad.push_back(std::move(c));
    }
    return table;
}

Cfr apply_apo(const PathSet &pathset, const ApoTable &table, const arma::vec &subcarrier_indices,
              double subcarrier_spacing_hz, SystemConfig::Direction direction,
              arma::uword tx_index)
{
    if (pathset.paths.empty())
        throw std::invalid_argument("posim::apply_apo: path set is empty");
    arma::uword n_rx = pathset.paths[0].coef.n_rows;
    if (n_rx == 0 || tx_index >= pathset.paths[0].coef.n_cols)
        throw std::invalid_argument("posim::apply_apo: coefficients missing or tx_index out of "
                                    "range, run generate_coefficients first");
    if (table.n_antennas() < n_rx)
        throw std::invalid_argument(
            "posim::apply_apo: table holds fewer antennas than the channel has receive elements");

    Cfr cfr;
    cfr.subcarrier_indices = subcarrier_indices;
    cfr.values.zeros(n_rx, subcarrier_indices.n_elem);
    bool rx_is_bs = direction == SystemConfig::Direction::uplink;
    for (const Path &p : pathset.paths)
    {
        double az_deg = rad2deg(rx_is_bs ? p.bs_az : p.user_az);
        double el_deg = rad2deg(rx_is_bs ? p.bs_zen : p.user_zen);
        arma::cx_vec f = path_cfr(p.delay_s, 1.0, subcarrier_indices, subcarrier_spacing_hz);
        for (arma::uword l = 0; l < n_rx; ++l)
        {
            cxd c = p.coef(l, tx_index);
            for (arma::uword j = 0; j < subcarrier_indices.n_elem; ++j)
            {
                double psi = table.interpolate(l, subcarrier_indices[j], az_deg, el_deg);
                cfr.values(l, j) += std::polar(1.0, psi) * f[j] * c;
            }
        }
    }
    return cfr;
}

arma::vec draw_timing_offsets(arma::uword n_links, const ToParams &params, Stream &stream)
{
    arma::vec offsets(n_links);
    for (arma::uword l = 0; l < n_links; ++l)
        offsets[l] = stream.truncated_normal(0.0, params.sigma_s, params.bound_sigmas);
    return offsets;
}

void apply_to(Cfr &cfr, double subcarrier_spacing_hz, const arma::vec &offsets_s)
{
    if (offsets_s.n_elem != cfr.n_rx())
        throw std::invalid_argument("posim::apply_to: one offset per receive link required");
    for (arma::uword l = 0; l < cfr.n_rx(); ++l)
        for (arma::uword j = 0; j < cfr.n_subcarriers(); ++j)
            cfr.values(l, j) *= std::polar(
                1.0, -2.0 * pi * cfr.subcarrier_indices[j] * subcarrier_spacing_hz * offsets_s[l]);
}

void apply_to(ResourceGrid &grid, const CarrierConfig &carrier, const arma::vec &offsets_s)
{
    if (offsets_s.n_elem != grid.n_ports())
        throw std::invalid_argument("posim::apply_to: one offset per receive link required");
    double half = static_cast<double>(carrier.fft_length) / 2.0;
    for (arma::uword l = 0; l < grid.n_ports(); ++l)
        for (arma::uword k = 0; k < grid.n_subcarriers(); ++k)
        {
            double idx = static_cast<double>(k + grid.subcarrier0_offset) - half;
            cxd rot = std::polar(
                1.0, -2.0 * pi * idx * carrier.subcarrier_spacing_hz * offsets_s[l]);
            for (arma::uword s = 0; s < grid.n_symbols(); ++s)
                grid.symbols(k, s, l) *= rot;
        }
}

cxd perturb_weight(double ideal_phase_rad, const SteeringErrParams &params, Stream &stream)
{
    if (params.bits < 1)
        throw std::invalid_argument("posim::perturb_weight: bits must be >= 1");
    std::uint64_t states = std::uint64_t{1} << params.bits;
    double step = 2.0 * pi / static_cast<double>(states);
    double phase = std::fmod(ideal_phase_rad, 2.0 * pi);
    if (phase < 0.0)
        phase += 2.0 * pi;
    std::uint64_t i = static_cast<std::uint64_t>(std::llround(phase / step)) % states;
    double xi = stream.truncated_normal(0.0, params.sigma_amp_db, params.bound_sigmas);
    double psi = stream.truncated_normal(0.0, params.sigma_phase_rad, params.bound_sigmas);
    return std::polar(std::pow(10.0, xi / 20.0), step * static_cast<double>(i) + psi);
}

void apply_cfo(BasebandWaveform &waveform, double epsilon)
{
    double step = 2.0 * pi * epsilon / static_cast<double>(waveform.fft_length);
    for (arma::uword n = 0; n < waveform.samples.n_rows; ++n)
    {
        cxd rot = std::polar(1.0, step * static_cast<double>(n));
        for (arma::uword p = 0; p < waveform.n_ports(); ++p)
            waveform.samples(n, p) *= rot;
    }
}

void apply_iq(BasebandWaveform &waveform, const IqParams &params)
{
    if (params.filter_i.n_elem != params.filter_q.n_elem)
        throw std::invalid_argument("posim::apply_iq: branch filters must share one length");
    if (params.filter_i.empty())
        throw std::invalid_argument("posim::apply_iq: branch filters must not be empty");

    double xi = params.amplitude_mismatch, psi = params.phase_mismatch_rad;
    cxd alpha(std::cos(psi), xi * std::sin(psi));
    cxd beta(xi * std::cos(psi), std::sin(psi));
    arma::cx_vec g_i(params.filter_i, arma::vec(params.filter_i.n_elem, arma::fill::zeros));
    arma::cx_vec g_q(params.filter_q, arma::vec(params.filter_q.n_elem, arma::fill::zeros));
    arma::cx_vec mu = 0.5 * (alpha - beta) * g_i + 0.5 * (alpha + beta) * g_q;
    arma::cx_vec nu = 0.5 * (alpha - beta) * g_i - 0.5 * (alpha + beta) * g_q;

    arma::uword taps = mu.n_elem;
    for (arma::uword p = 0; p < waveform.n_ports(); ++p)
    {
        arma::cx_vec x = waveform.samples.col(p);
        for (arma::uword n = 0; n < x.n_elem; ++n)
        {
            cxd acc = 0.0;
            arma::uword m_max = std::min<arma::uword>(taps - 1, n);
            for (arma::uword m = 0; m <= m_max; ++m)
                acc += mu[m] * x[n - m] + nu[m] * std::conj(x[n - m]);
            waveform.samples(n, p) = acc;
        }
    }
}

arma::vec synthesize_pn(const PnParams &params, arma::uword length, double sample_rate_hz,
                        Stream &stream)
{
    if (length < 2)
        throw std::invalid_argument("posim::synthesize_pn: length must be >= 2");
    double nyquist = sample_rate_hz / 2.0;
    for (double f : params.zeros_hz)
        if (f <= 0.0 || f >= nyquist)
            throw std::invalid_argument(
                "posim::synthesize_pn: zero frequencies must lie in (0, Nyquist)");
    for (double f : params.poles_hz)
        if (f <= 0.0 || f >= nyquist)
            throw std::invalid_argument(
                "posim::synthesize_pn: pole frequencies must lie in (0, Nyquist)");

    double s0 = db2lin(params.s0_dbc_hz);
    auto psd = [&](double f) {
        double s = s0;
        for (double fz : params.zeros_hz)
            s *= 1.0 + (f / fz) * (f / fz);
        for (double fp : params.poles_hz)
            s /= 1.0 + (f / fp) * (f / fp);
        return s;
    };

    arma::uword n = length;
    double bin_hz = sample_rate_hz / static_cast<double>(n);
    double energy = sample_rate_hz * static_cast<double>(n);
    arma::cx_vec spec(n, arma::fill::zeros);
    spec[0] = std::sqrt(psd(0.0) * energy) * stream.normal();
    arma::uword half = (n - 1) / 2;
    arma::cx_vec g = stream.cnormal_vec(half);
    for (arma::uword k = 1; k <= half; ++k)
    {
        double a = std::sqrt(psd(bin_hz * static_cast<double>(k)) * energy);
        spec[k] = a * g[k - 1];
        spec[n - k] = std::conj(spec[k]);
    }
    if (n % 2 == 0)
        spec[n / 2] = std::sqrt(psd(nyquist) * energy) * stream.normal();
    return arma::real(arma::ifft(spec));
}

void apply_pn(BasebandWaveform &waveform, const arma::vec &phase_rad)
{
    if (phase_rad.n_elem != waveform.samples.n_rows)
        throw std::invalid_argument("posim::apply_pn: one phase sample per waveform sample");
    for (arma::uword nn = 0; nn < waveform.samples.n_rows; ++nn)
    {
        cxd rot = std::polar(1.0, phase_rad[nn]);
        for (arma::uword p = 0; p < waveform.n_ports(); ++p)
            waveform.samples(nn, p) *= rot;
    }
}

double pan_am_am(double r, const PanParams &params)
{
    double drive = params.small_signal_gain * r / params.a_sat;
    return params.small_signal_gain * r /
           std::pow(1.0 + std::pow(drive, 2.0 * params.smoothness),
                    1.0 / (2.0 * params.smoothness));
}

double pan_am_pm_deg(double r, const PanParams &params)
{
    return params.phase_alpha * std::pow(r, params.phase_gamma1) /
           (1.0 + std::pow(r / params.phase_beta, params.phase_gamma2));
}

void apply_pan(BasebandWaveform &waveform, const PanParams &params)
{
    if (params.a_sat <= 0.0)
        throw std::invalid_argument("posim::apply_pan: a_sat must be > 0");
    double target_rms = params.a_sat * std::pow(10.0, -params.input_backoff_db / 20.0);
    for (arma::uword p = 0; p < waveform.n_ports(); ++p)
    {
        double rms = std::sqrt(arma::mean(arma::square(arma::abs(waveform.samples.col(p)))));
        if (rms == 0.0)
            continue;
        double scale = target_rms / rms;
        for (arma::uword n = 0; n < waveform.samples.n_rows; ++n)
        {
            cxd x = waveform.samples(n, p);
            if (x == 0.0)
                continue;
            double r = scale * std::abs(x);
            cxd direction = x / std::abs(x);
            waveform.samples(n, p) = pan_am_am(r, params) *
                                     std::polar(1.0, deg2rad(pan_am_pm_deg(r, params))) *
                                     direction;
        }
    }
}

} // namespace posim
