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

#include "posim/beamforming.hpp"
#include "posim/channel.hpp"
#include "posim/impairments.hpp"
#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace posim
{

namespace
{

double effective_spacing(const ArrayGeometry &array, double wavelength_m)
{
    if (wavelength_m <= 0.0)
        throw std::invalid_argument("beamforming: wavelength must be positive");
    return array.element_spacing_m > 0.0 ? array.element_spacing_m : 0.5 * wavelength_m;
}

arma::uword axis_elements(const ArrayGeometry &array, SplitAxis axis)
{
    return axis == SplitAxis::horizontal ? array.cols : array.rows;
}

// Spatial frequency of a steered direction along one array axis: the
// element-to-element phase progression of a plane wave from (az, zen).
double axis_spatial_frequency(double az_rad, double zen_rad, double spacing_m,
                              double wavelength_m, SplitAxis axis)
{
    double scale = 2.0 * pi * spacing_m / wavelength_m;
    if (axis == SplitAxis::horizontal)
        return scale * std::sin(zen_rad) * std::sin(az_rad);
    return scale * std::cos(zen_rad);
}

// Inverts a spatial frequency back to the steered angle along one axis,
// flagging arguments outside the asin/acos domain.
AngleEstimate axis_angle(double mu, double spacing_m, double wavelength_m,
                         double conversion_zen_rad, SplitAxis axis)
{
    AngleEstimate est;
    double arg = mu * wavelength_m / (2.0 * pi * spacing_m);
    if (axis == SplitAxis::horizontal)
    {
        double sin_zen = std::sin(conversion_zen_rad);
        if (std::abs(sin_zen) < 1.0e-12)
            throw std::invalid_argument("beamforming: azimuth is unobservable at a polar zenith angle");
        arg /= sin_zen;
    }
    est.in_coverage = std::abs(arg) <= 1.0;
    arg = std::clamp(arg, -1.0, 1.0);
    est.angle_rad = axis == SplitAxis::horizontal ? std::asin(arg) : std::acos(arg);
    return est;
}

} // namespace

double beamwidth_3db(arma::uword n, double spacing_m, double wavelength_m, double theta_rad)
{
    if (n < 2)
        throw std::invalid_argument("beamwidth_3db: the array axis needs at least two elements");
    if (spacing_m <= 0.0 || wavelength_m <= 0.0)
        throw std::invalid_argument("beamwidth_3db: spacing and wavelength must be positive");
    double cos_theta = std::cos(theta_rad);
    if (cos_theta < 1.0e-9)
        throw std::invalid_argument("beamwidth_3db: the beamwidth diverges towards endfire");
    return 0.886 * wavelength_m / (double(n) * spacing_m * cos_theta);
}

BeamSet allocate_beams(double az_lo_rad, double az_hi_rad, double el_lo_rad, double el_hi_rad,
                       arma::uword count, const ArrayGeometry &array, double wavelength_m)
{
    if (count == 0)
        throw std::invalid_argument("allocate_beams: the sweep needs at least one beam");
    if (az_hi_rad < az_lo_rad || el_hi_rad < el_lo_rad)
        throw std::invalid_argument("allocate_beams: angle ranges must be ordered low to high");
    if (count > 1 && az_hi_rad == az_lo_rad)
        throw std::invalid_argument("allocate_beams: a degenerate azimuth range admits only one beam");

    double spacing_m = effective_spacing(array, wavelength_m);
    double az_step = (az_hi_rad - az_lo_rad) / double(count);
    double el_center = 0.5 * (el_lo_rad + el_hi_rad);

    BeamSet set;
    set.az_rad.set_size(count);
    set.el_rad.set_size(count);
    set.beamwidth_az_rad.set_size(count);
    set.weights.set_size(arma::uword(array.rows) * array.cols, count);

    for (arma::uword i = 0; i < count; ++i)
    {
        double center = az_lo_rad + az_step * (double(i) + 0.5);
        double width = beamwidth_3db(array.cols, spacing_m, wavelength_m, center);
        if (az_step > width + 1.0e-12)
            throw std::invalid_argument("allocate_beams: the beam spacing exceeds the 3dB beamwidth, leaving gaps in the sweep");
        set.az_rad[i] = center;
        set.el_rad[i] = el_center;
        set.beamwidth_az_rad[i] = width;
        set.weights.col(i) = steering_weights(array, center, el_center, wavelength_m);
    }

    if (array.rows >= 2)
        set.beamwidth_el_rad = beamwidth_3db(array.rows, spacing_m, wavelength_m, el_center - 0.5 * pi);
    if (el_hi_rad > el_lo_rad && (array.rows < 2 || el_hi_rad - el_lo_rad > set.beamwidth_el_rad + 1.0e-12))
        throw std::invalid_argument("allocate_beams: the elevation range exceeds the vertical beamwidth of the fixed-elevation sweep");

    return set;
}

arma::cx_vec steering_weights(const ArrayGeometry &array, double az_rad, double el_rad,
                              double wavelength_m)
{
    if (wavelength_m <= 0.0)
        throw std::invalid_argument("steering_weights: wavelength must be positive");
    arma::mat positions = element_positions(array, wavelength_m);
    arma::vec3 direction = unit_vector(az_rad, el_rad);
    arma::cx_vec weights(positions.n_cols);
    for (arma::uword i = 0; i < positions.n_cols; ++i)
    {
        double phase = 2.0 * pi * arma::dot(positions.col(i), direction) / wavelength_m;
        weights[i] = std::polar(1.0, phase);
    }
    return weights;
}

arma::cx_vec spatial_weights(const ArrayGeometry &array, double mu_h, double mu_v)
{
    arma::cx_vec weights(arma::uword(array.rows) * array.cols);
    for (arma::uword c = 0; c < array.cols; ++c)
        for (arma::uword r = 0; r < array.rows; ++r)
            weights[c * array.rows + r] = std::polar(1.0, double(c) * mu_h + double(r) * mu_v);
    return weights;
}

double spatial_frequency(const ArrayGeometry &array, double az_rad, double el_rad,
                         double wavelength_m, SplitAxis axis)
{
    return axis_spatial_frequency(az_rad, el_rad, effective_spacing(array, wavelength_m),
                                  wavelength_m, axis);
}

arma::cx_vec perturb_weights(const arma::cx_vec &ideal, const SteeringErrParams &params,
                             Stream &stream)
{
    arma::cx_vec out(ideal.n_elem);
    for (arma::uword i = 0; i < ideal.n_elem; ++i)
        out[i] = perturb_weight(std::arg(ideal[i]), params, stream);
    return out;
}

arma::cx_vec diff_weights(const arma::cx_vec &sum_weights, arma::uword segment)
{
    arma::uword n = sum_weights.n_elem;
    arma::uword seg = segment == 0 ? n : segment;
    if (seg < 2 || seg % 2 != 0)
        throw std::invalid_argument("diff_weights: the split axis needs an even element count");
    if (n == 0 || n % seg != 0)
        throw std::invalid_argument("diff_weights: the weight length is not a multiple of the segment length");

    arma::cx_vec out = sum_weights;
    for (arma::uword start = 0; start < n; start += seg)
        for (arma::uword i = seg / 2; i < seg; ++i)
            out[start + i] = -out[start + i];
    return out;
}

AngleEstimate estimate_sumdiff(const arma::cx_vec &y_sum, const arma::cx_vec &y_diff,
                               double probe_az_rad, double probe_zen_rad,
                               const ArrayGeometry &array, double wavelength_m, SplitAxis axis,
                               double conversion_zen_rad)
{
    arma::uword n = axis_elements(array, axis);
    if (n < 2 || n % 2 != 0)
        throw std::invalid_argument("estimate_sumdiff: the split axis needs an even element count");
    if (y_sum.n_elem == 0 || y_sum.n_elem != y_diff.n_elem)
        throw std::invalid_argument("estimate_sumdiff: sum and difference outputs must pair up");

    double sum_power = arma::accu(arma::square(arma::abs(y_sum)));
    cxd cross = arma::cdot(y_sum, y_diff);
    if (sum_power < 1.0e-24 * (arma::accu(arma::square(arma::abs(y_diff))) + 1.0))
        throw std::runtime_error("estimate_sumdiff: the sum beam output vanishes, the ratio is degenerate");
    cxd ratio = cross / sum_power;

    double t = std::imag(ratio);
    double alpha = std::abs(t) < 1.0e-6 ? -2.0 * t : -2.0 * std::atan(t);
    bool ratio_covered = std::abs(t) <= 1.0;

    double spacing_m = effective_spacing(array, wavelength_m);
    double mu_probe = axis_spatial_frequency(probe_az_rad, probe_zen_rad, spacing_m, wavelength_m, axis);
    double mu_hat = mu_probe - 2.0 * alpha / double(n);

    double zen_conv = conversion_zen_rad > 0.0 ? conversion_zen_rad : probe_zen_rad;
    AngleEstimate est = axis_angle(mu_hat, spacing_m, wavelength_m, zen_conv, axis);
    est.in_coverage = est.in_coverage && ratio_covered;
    return est;
}

AngleEstimate estimate_aux_pair(const arma::vec &rsrp_dbm, double probe_az_rad,
                                double probe_zen_rad, double eta_sf, AuxPairMode mode,
                                const ArrayGeometry &array, double wavelength_m,
                                SplitAxis axis, double noise_floor_dbm,
                                double conversion_zen_rad)
{
    arma::uword n = axis_elements(array, axis);
    if (n < 4)
        throw std::invalid_argument("estimate_aux_pair: the split axis needs at least four elements");

    arma::uword expected = mode == AuxPairMode::two_beam ? 2 : 3;
    if (rsrp_dbm.n_elem != expected)
        throw std::invalid_argument("estimate_aux_pair: the report count does not match the estimator mode");
    if (rsrp_dbm.max() < noise_floor_dbm)
        throw std::runtime_error("estimate_aux_pair: every beam power sits below the noise floor");

    double separation = mode == AuxPairMode::two_beam ? 2.0 * eta_sf : eta_sf;
    double l = separation * double(n) / (2.0 * pi);
    if (std::abs(l - std::round(l)) > 1.0e-9 || std::round(l) < 1.0 || std::round(l) > double(n) / 4.0)
        throw std::invalid_argument("estimate_aux_pair: the pair separation must be 2 pi l / N with l in 1..N/4");

    double spacing_m = effective_spacing(array, wavelength_m);
    double mu_probe = axis_spatial_frequency(probe_az_rad, probe_zen_rad, spacing_m, wavelength_m, axis);

    // Reduce to a pair (low beam, high beam) centered at `midpoint` in
    // spatial frequency, with rho the high-to-low linear power ratio.
    double midpoint = 0.0;
    double rho = 0.0;
    if (mode == AuxPairMode::two_beam)
    {
        midpoint = mu_probe;
        rho = db2lin(rsrp_dbm[1] - rsrp_dbm[0]);
    }
    else if (rsrp_dbm[2] >= rsrp_dbm[1])
    {
        midpoint = mu_probe + 0.5 * eta_sf;
        rho = db2lin(rsrp_dbm[2] - rsrp_dbm[0]);
    }
    else
    {
        midpoint = mu_probe - 0.5 * eta_sf;
        rho = db2lin(rsrp_dbm[0] - rsrp_dbm[1]);
    }

    double sqrt_rho = std::sqrt(rho);
    double x = 2.0 * std::atan(std::tan(0.25 * separation) * (sqrt_rho - 1.0) / (sqrt_rho + 1.0));
    double mu_hat = midpoint + x;

    double zen_conv = conversion_zen_rad > 0.0 ? conversion_zen_rad : probe_zen_rad;
    return axis_angle(mu_hat, spacing_m, wavelength_m, zen_conv, axis);
}

void append_beam_reports(std::ostream &out, const std::vector<BeamReport> &reports)
{
    auto old_precision = out.precision(12);
    for (const auto &report : reports)
        out << report.drop << '\t' << report.beam_index << '\t' << report.az_deg << '\t'
            << report.el_deg << '\t' << report.rsrp_dbm << '\n';
    out.precision(old_precision);
}

} // namespace posim
