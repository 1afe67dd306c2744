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

#ifndef posim_channel_H
#define posim_channel_H

#include "posim/config.hpp"
#include "posim/rng.hpp"
#include "posim/types.hpp"
#include "posim/waveform.hpp"
#include <iosfwd>
#include <string>
#include <vector>

namespace posim
{

// Deterministic geometry of one BS-user link. Azimuths are expressed in each
// side's local array frame (boresight = 0, counterclockwise positive);
// zeniths are measured from the vertical and are frame independent because
// array orientations only rotate about z.
struct LinkGeometry
{
    double d2d_m = 0.0;
    double d3d_m = 0.0;
    double ground_distance_m = 0.0; // BS -> ground bounce -> user
    double az_bs = 0.0;             // direction of the user seen from the BS
    double zen_bs = 0.0;
    double az_user = 0.0; // direction of the BS seen from the user
    double zen_user = 0.0;
    double h_bs_m = 0.0;
    double h_user_m = 0.0;
    bool los_state = true;
    bool o2i_state = false;
};

// Large-scale parameters of one link realization. Spreads are in degrees,
// the delay spread in seconds, SF/KF in dB.
struct LargeScaleParams
{
    double sf_db = 0.0;
    double kf_db = 0.0;
    double ds_s = 0.0;
    double asd_deg = 0.0;
    double asa_deg = 0.0;
    double esd_deg = 0.0;
    double esa_deg = 0.0;
    double pathloss_db = 0.0;
};

// One propagation path (cluster centroid or ray). Angles follow the
// LinkGeometry frame convention: bs_az/bs_zen at the BS array, user_az/
// user_zen at the user array. coef(r, t) is the narrowband coefficient from
// tx antenna t to rx antenna r including field patterns, array phases, and
// pathloss + shadow scaling; power_lin excludes pathloss and sums to one
// across the set.
struct Path
{
    double delay_s = 0.0;
    double power_lin = 0.0;
    double bs_az = 0.0;
    double bs_zen = 0.0;
    double user_az = 0.0;
    double user_zen = 0.0;
    double xpr_db = 0.0;
    double doppler_hz = 0.0;
    double init_phase_rad = 0.0; // deterministic extra phase (reflection sign)
    bool is_los = false;
    bool is_ground_reflection = false;
    arma::cx_mat coef; // n_rx x n_tx
};

struct PathSet
{
    std::vector<Path> paths;
    double pathloss_db = 0.0;
    double sf_db = 0.0;
};

// Lattices of correlated standard-normal values, one per large-scale
// parameter, shared by every link of a drop region.
struct CorrelatedFieldGrid
{
    static constexpr arma::uword n_params = 7;
    enum Param
    {
        p_sf = 0,
        p_kf = 1,
        p_ds = 2,
        p_asd = 3,
        p_asa = 4,
        p_zsd = 5,
        p_zsa = 6
    };

    std::vector<arma::mat> field; // n_params lattices, nx x ny
    double spacing_m = 1.0;
    arma::vec2 origin;

    bool contains(const arma::vec2 &position) const;
};

// Local element positions (3 x n, meters) of a panel: rows stack along z,
// columns along y, element (0,0) at the origin, column-major element order.
arma::mat element_positions(const ArrayGeometry &array, double wavelength_m);

// Element amplitude gain toward (azimuth, zenith) in the local array frame.
// The directional pattern is the TR 38.901 section 7.3 single element
// (65 degree 3 dB widths, 30 dB floor, 8 dBi peak).
double element_pattern_amplitude(const ArrayGeometry &array, double azimuth, double zenith);

// Line-of-sight probability of the named scenario (TR 38.901 table 7.4.2-1).
double los_probability(const std::string &scenario, double d2d_m);

// Scenario pathloss in dB (TR 38.901 table 7.4.1-1 forms, coefficients from
// the scenario table rows; NLOS rows may take the LOS formula as a floor).
double pathloss_db(const std::vector<ScenarioTable> &rows, const std::string &scenario,
                   bool los, const LinkGeometry &geom, double fc_ghz);

// Distances, angles, and LOS/O2I state of one link. The LOS state is forced
// by the channel config or drawn from the scenario probability model with
// the link's stream. Throws for coincident endpoints.
LinkGeometry compute_geometry(const SystemConfig &system, const ChannelConfig &channel,
                              arma::uword bs_index, arma::uword user_index, Stream &stream);

// Correlated-field generation over a rectangular region: independent
// standard-normal lattices are filtered along each axis by the exponential
// coefficient exp(-spacing/d_corr) with unit-variance renormalization, then
// mixed across parameters by the square root (Cholesky factor) of xcorr.
// Lattice spacing is min(d_corr)/4 clamped to >= 0.5 m. Throws when xcorr is
// not positive definite.
CorrelatedFieldGrid generate_lsp_fields(const ScenarioTable &table, const arma::vec2 &lo,
                                        const arma::vec2 &hi, const arma::mat &xcorr,
                                        Stream &stream);

// Variance-preserving interpolation of four i.i.d. standard-normal corner
// values at offsets (alpha, beta) within a d_corr-sized cell. Exact at the
// corners; square weights sum to one. Throws when alpha or beta lies outside
// [0, d_corr].
double interpolate_consistency(double eta00, double eta10, double eta01, double eta11,
                               double alpha, double beta, double d_corr);

// Reads the seven correlated fields at a position (bilinear interpolation)
// and maps them through the scenario statistics to physical large-scale
// parameters, including the pathloss of the link. Throws when the position
// lies outside the lattice.
LargeScaleParams draw_lsp(const CorrelatedFieldGrid &fields, const arma::vec2 &position,
                          const std::vector<ScenarioTable> &rows, const std::string &scenario,
                          const LinkGeometry &geom, double fc_ghz);

// Spatial-consistency-free variant: the seven standard normals are drawn
// directly from the stream and mixed by the square root of xcorr.
LargeScaleParams draw_lsp(Stream &stream, const arma::mat &xcorr,
                          const std::vector<ScenarioTable> &rows, const std::string &scenario,
                          const LinkGeometry &geom, double fc_ghz);

// Cluster delays, powers, angles, and XPRs for one link realization
// following the TR 38.901 section 7.5 procedure at cluster level
// (rays_per_cluster 1) or with the 20-ray offset refinement
// (rays_per_cluster 20). Absolute TOA adds the LOS flight time to every
// delay. The LOS path, when present, carries the Ricean share of the power;
// an optional ground-reflection path is added from the geometry.
PathSet generate_small_scale(const LargeScaleParams &lsp, const LinkGeometry &geom,
                             const ScenarioTable &table, arma::uword rays_per_cluster,
                             ChannelConfig::ToaType toa, bool ground_reflection,
                             double ground_permittivity, double wavelength_m, Stream &stream);

// Fills Path::coef for every path: field patterns of both arrays, array
// phase e^{-j 2 pi (p . u) / lambda} per element, random initial phases for
// scattered paths, deterministic flight phase for LOS/ground paths, and the
// pathloss + shadow amplitude. Mode los-only keeps just the LOS path at unit
// power; dynamic mode fills Path::doppler_hz from the user velocity.
void generate_coefficients(PathSet &pathset, const SystemConfig &system,
                           arma::uword bs_index, arma::uword user_index,
                           const ChannelConfig &channel, ChannelConfig::CoefMode mode,
                           Stream &stream);

// Single-path channel frequency response A e^{-j 2 pi df tau k} over the
// given centered subcarrier indices.
arma::cx_vec path_cfr(double delay_s, double amplitude, const arma::vec &subcarrier_indices,
                      double subcarrier_spacing_hz);

// Centered index (relative to DC) of every active subcarrier of a grid.
arma::vec active_subcarrier_indices(const ResourceGrid &grid, const CarrierConfig &carrier);

// True when the largest path delay exceeds the cyclic prefix, breaking the
// circular-convolution equivalence. Callers emit a warning record and
// proceed.
bool delays_exceed_cp(const PathSet &pathset, const CarrierConfig &carrier);

// Applies the channel on the resource grid: per subcarrier and symbol,
// rx(k, s, r) = sum over tx t and paths p of coef_p(r, t) f_p[k] tx(k, s, t),
// with per-symbol Doppler phase when paths carry one. Equivalent to the
// waveform route whenever path delays stay within the cyclic prefix.
ResourceGrid apply_channel_grid(const ResourceGrid &tx, const PathSet &pathset,
                                const CarrierConfig &carrier);

// Applies the channel on the sampled waveform through per-symbol FFT,
// full-bin CFR multiplication, and inverse FFT with CP reinsertion.
BasebandWaveform apply_channel(const BasebandWaveform &tx, const PathSet &pathset,
                               const CarrierConfig &carrier);

// Mean received power per resource element and antenna over the REs the
// transmitter occupied; reference quantity for setting the noise level.
double mean_occupied_power(const ResourceGrid &rx, const arma::ucube &tx_occupied);

// Adds circularly symmetric complex Gaussian noise of total variance sigma2
// per entry.
void add_awgn(ResourceGrid &grid, double sigma2, Stream &stream);
void add_awgn(BasebandWaveform &waveform, double sigma2, Stream &stream);

// Writes one line per path: drop, link, path index, delay, linear power,
// angles (degrees, array frames), and flags.
void append_pathset(std::ostream &out, arma::uword drop, arma::uword link,
                    const PathSet &pathset);

} // namespace posim

#endif
