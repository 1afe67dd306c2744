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

#ifndef posim_beamforming_H
#define posim_beamforming_H

#include "posim/config.hpp"
#include "posim/estimation.hpp"
#include "posim/rng.hpp"
#include "posim/types.hpp"
#include <iosfwd>
#include <vector>

namespace posim
{

// A grid of analog beams: per-beam steering angles, the weight vectors
// (element-major, one column per beam), the 3dB beamwidths at the steered
// angles, and the phase-shifter error parameters the weights were generated
// under.
struct BeamSet
{
    arma::vec az_rad;
    arma::vec el_rad; // zenith angles
    arma::cx_mat weights;
    arma::vec beamwidth_az_rad;
    double beamwidth_el_rad = 0.0;
    SteeringErrParams quantization;

    arma::uword n_beams() const { return az_rad.n_elem; }
};

// Half-power beamwidth 0.886 lambda / (N d cos(theta)) of an N-element
// uniform array steered theta off broadside. Throws for N < 2 or theta at
// +-pi/2 (endfire, where the width diverges).
double beamwidth_3db(arma::uword n, double spacing_m, double wavelength_m, double theta_rad);

// Evenly partitions the azimuth sweep range into `count` beams (centers at
// the cell midpoints, symmetric about the range center) at the elevation
// range midpoint, and fills the ideal steering weights. Throws when the
// azimuth spacing exceeds the 3dB beamwidth at any beam center, or a
// non-degenerate elevation range exceeds the vertical beamwidth, so every
// swept direction stays covered.
BeamSet allocate_beams(double az_lo_rad, double az_hi_rad, double el_lo_rad, double el_hi_rad,
                       arma::uword count, const ArrayGeometry &array, double wavelength_m);

// Unit-modulus steering weights, element m phase +2 pi (p_m . u(az, el)) /
// lambda; the conjugate of the channel's array phase, so a matching path
// combines to the full array gain.
arma::cx_vec steering_weights(const ArrayGeometry &array, double az_rad, double el_rad,
                              double wavelength_m);

// Steering weights from per-axis spatial frequencies: the element in array
// column c and row r gets phase c mu_h + r mu_v. Equals steering_weights at
// mu_h = 2 pi d sin(el) sin(az) / lambda, mu_v = 2 pi d cos(el) / lambda.
arma::cx_vec spatial_weights(const ArrayGeometry &array, double mu_h, double mu_v);

// Which array axis an estimator refines: horizontal resolves azimuth,
// vertical the zenith angle.
enum class SplitAxis
{
    horizontal,
    vertical
};

// Spatial frequency of a steered direction along one array axis: the
// element-to-element phase progression a plane wave from (az, el) produces
// in spatial_weights. Horizontal: 2 pi d sin(el) sin(az) / lambda;
// vertical: 2 pi d cos(el) / lambda.
double spatial_frequency(const ArrayGeometry &array, double az_rad, double el_rad,
                         double wavelength_m, SplitAxis axis);

// Element-wise quantization and amplitude/phase perturbation of an ideal
// weight vector.
arma::cx_vec perturb_weights(const arma::cx_vec &ideal, const SteeringErrParams &params,
                             Stream &stream);

// Differential-beam weights: the second half of every segment is negated.
// segment = 0 splits the whole vector (the ULA form; the horizontal axis of
// a column-major UPA vector); segment = rows splits each column (vertical
// axis). Throws on an odd segment length or when the length is not a
// multiple of the segment.
arma::cx_vec diff_weights(const arma::cx_vec &sum_weights, arma::uword segment = 0);

struct AngleEstimate
{
    double angle_rad = 0.0;
    bool in_coverage = false;
};

// Monopulse refinement from simultaneous sum- and difference-beam outputs
// over one or more resource elements. The complex ratio is recovered by the
// least-squares projection sum(y_diff conj(y_sum)) / sum(|y_sum|^2) and is
// -j tan(alpha/2) in the half-array phase deviation alpha, which the
// closed form inverts (series expansion below |ratio| = 1e-6). The estimate
// is flagged in-coverage while |ratio| <= 1, the quarter-period core that
// contains the half-3dB-beamwidth region, and the angle conversion stays in
// the asin/acos domain. conversion_zen_rad > 0 replaces the probe zenith in
// the azimuth conversion once a refined zenith is known. Throws when the
// split axis has fewer than two or an odd number of elements, or the sum
// signal vanishes (degenerate ratio).
AngleEstimate estimate_sumdiff(const arma::cx_vec &y_sum, const arma::cx_vec &y_diff,
                               double probe_az_rad, double probe_zen_rad,
                               const ArrayGeometry &array, double wavelength_m, SplitAxis axis,
                               double conversion_zen_rad = -1.0);

enum class AuxPairMode
{
    two_beam,
    three_beam
};

// Angle refinement from the received powers of beams steered symmetrically
// in spatial frequency about the initial beam. Modes:
//  - two_beam: rsrp_dbm = {power at mu0 - eta, power at mu0 + eta};
//  - three_beam: rsrp_dbm = {initial, mu0 - eta, mu0 + eta}; the stronger
//    adjacent beam is kept and the pair reduces to (initial, stronger).
// The pair separation (2 eta for two_beam, eta for three_beam) must equal
// 2 pi l / N with integer l in {1..N/4}, which cancels the Dirichlet
// numerator so the power ratio inverts in closed form. Throws when the
// separation is off that grid or every power sits below noise_floor_dbm.
AngleEstimate estimate_aux_pair(const arma::vec &rsrp_dbm, double probe_az_rad,
                                double probe_zen_rad, double eta_sf, AuxPairMode mode,
                                const ArrayGeometry &array, double wavelength_m,
                                SplitAxis axis, double noise_floor_dbm,
                                double conversion_zen_rad = -1.0);

// Writes one delimited row per report: drop, beam index, az_deg, el_deg,
// rsrp_dbm.
void append_beam_reports(std::ostream &out, const std::vector<BeamReport> &reports);

} // namespace posim

#endif
