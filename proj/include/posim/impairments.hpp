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

#ifndef posim_impairments_H
#define posim_impairments_H

#include "posim/channel.hpp"
#include "posim/config.hpp"
#include "posim/estimation.hpp"
#include "posim/rng.hpp"
#include "posim/types.hpp"
#include "posim/waveform.hpp"
#include <string>
#include <vector>

namespace posim
{

// Per-antenna phase offset of the array manifold, sampled on a regular
// (subcarrier, azimuth, elevation) lattice. The subcarrier axis holds
// centered indices (relative to DC), the angle axes degrees in the local
// array frame; the el axis is the zenith angle measured from vertical,
// matching the beam-sweep configuration convention. one cube per antenna,
// cube dimensions (subcarrier, az, el).
struct ApoTable
{
    arma::vec subcarrier_axis;
    arma::vec az_axis_deg;
    arma::vec el_axis_deg;
    std::vector<arma::cube> phase_rad;

    arma::uword n_antennas() const { return phase_rad.size(); }

    // True when the query point lies inside the lattice hull.
    bool covers(double subcarrier, double az_deg, double el_deg) const;

    // Trilinear interpolation of the phase offset at an off-lattice point.
    // Extrapolation is refused: queries outside the hull throw.
    double interpolate(arma::uword antenna, double subcarrier, double az_deg,
                       double el_deg) const;
};

// Reads a table from delimited text with header columns antenna,
// subcarrier, az_deg, el_deg, phase_rad (any order, whitespace separated).
// The rows must fill a complete regular lattice; missing columns, repeated
// points, or an incomplete lattice throw.
ApoTable load_apo_table(const std::string &path);

// Writes a table in the load_apo_table format.
void save_apo_table(const std::string &path, const ApoTable &table);

// Deterministic synthetic table: per antenna a smooth random surface built
// from a few low-order cosine terms over the normalized axes, scaled so the
// largest lattice offset equals amplitude_rad. The subcarrier axis spans
// the given centered indices; the angle axes cover azimuth [-90, 90] and
// zenith [0, 180] degrees.
ApoTable synthesize_apo_table(arma::uword n_antennas, const arma::vec &subcarrier_indices,
                              double amplitude_rad, arma::uword terms, std::uint64_t seed);

// Composite CFR with the per-antenna phase offset applied: for every path,
// the table is interpolated at the receive-side path angles and each
// subcarrier, and the resulting unit phasors multiply the path's channel
// frequency response before the paths are summed. The receive side is the
// BS on the uplink and the user otherwise; tx_index selects the transmit
// element. Throws when the table holds fewer antennas than the paths carry
// receive elements, or a path angle or subcarrier falls outside the table.
Cfr apply_apo(const PathSet &pathset, const ApoTable &table, const arma::vec &subcarrier_indices,
              double subcarrier_spacing_hz, SystemConfig::Direction direction,
              arma::uword tx_index = 0);

// Per-receive-link timing offsets drawn from the truncated Gaussian.
arma::vec draw_timing_offsets(arma::uword n_links, const ToParams &params, Stream &stream);

// Timing offset on an estimated CFR: row l is multiplied per column by
// e^{-j 2 pi k df t_l} with k the column's centered subcarrier index.
// offsets_s must hold one entry per row.
void apply_to(Cfr &cfr, double subcarrier_spacing_hz, const arma::vec &offsets_s);

// Timing offset on a received resource grid; ports are receive links.
void apply_to(ResourceGrid &grid, const CarrierConfig &carrier, const arma::vec &offsets_s);

// Quantized beamforming weight with amplitude and phase errors: the ideal
// phase snaps to the nearest of the 2^bits uniform phase states, then
// w = 10^(xi/20) e^{j(2 pi i / 2^bits + psi)} with xi (dB) and psi (rad)
// truncated-Gaussian draws. With zero sigmas the quantization error is
// bounded by pi / 2^bits.
cxd perturb_weight(double ideal_phase_rad, const SteeringErrParams &params, Stream &stream);

// Carrier frequency offset: sample n of every port is multiplied by
// e^{j 2 pi epsilon n / K_fft} with n counted across the whole burst, so
// the inter-symbol phase drift the offset causes stays observable.
void apply_cfo(BasebandWaveform &waveform, double epsilon);

// IQ imbalance: y = mu (*) x + nu (*) conj(x) with
// mu = (alpha - beta)/2 g_I + (alpha + beta)/2 g_Q,
// nu = (alpha - beta)/2 g_I - (alpha + beta)/2 g_Q,
// alpha = cos(psi) + j xi sin(psi), beta = xi cos(psi) + j sin(psi), and
// (*) causal convolution truncated to the input length. Equal unit-impulse
// branch filters reduce to y = alpha x - beta conj(x). Throws when the
// branch filters differ in length or are empty.
void apply_iq(BasebandWaveform &waveform, const IqParams &params);

// Phase-noise trajectory in radians whose two-sided PSD follows
// S(f) = S(0) prod (1 + (f/f_z)^2) / (1 + (f/f_p)^2), synthesized by
// shaping white Gaussian noise with sqrt(S) in the frequency domain and
// inverse transforming. Throws when length < 2 or any pole or zero lies at
// or above Nyquist.
arma::vec synthesize_pn(const PnParams &params, arma::uword length, double sample_rate_hz,
                        Stream &stream);

// Multiplies every port's sample n by e^{j phase_rad[n]}.
void apply_pn(BasebandWaveform &waveform, const arma::vec &phase_rad);

// Amplitude conversion of the memoryless amplifier:
// F_A(r) = eta r / (1 + (eta r / A_sat)^(2 zeta))^(1/(2 zeta)).
double pan_am_am(double r, const PanParams &params);

// Phase conversion in degrees:
// F_P(r) = alpha r^gamma1 / (1 + (r/beta)^gamma2).
double pan_am_pm_deg(double r, const PanParams &params);

// Amplifier nonlinearity per port: the column is normalized to its RMS,
// scaled so the drive sits input_backoff_db below a_sat, and pushed through
// y = F_A(|x|) e^{j F_P(|x|)} x/|x| (zero stays zero). The output level is
// set by the back-off, not by the input scale, so the transform does not
// commute with input scaling.
void apply_pan(BasebandWaveform &waveform, const PanParams &params);

} // namespace posim

#endif
