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

#ifndef posim_config_H
#define posim_config_H

#include "posim/types.hpp"
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace posim
{

// Antenna panel layout. rows stack vertically (along z), cols horizontally
// (along y in the local frame). Spacing 0 resolves to lambda/2 at load time.
struct ArrayGeometry
{
    arma::uword rows = 1;
    arma::uword cols = 1;
    double element_spacing_m = 0.0;
    enum class Pattern
    {
        isotropic,
        directional_3gpp
    } pattern = Pattern::isotropic;
    enum class Polarization
    {
        single,
        cross
    } polarization = Polarization::single;

    arma::uword size() const { return rows * cols; }
};

// System layout and global simulation settings. Angles are stored in
// radians; config files carry degrees.
struct SystemConfig
{
    double bandwidth_hz = 0.0;
    double center_frequency_hz = 0.0;
    std::string scenario; // indoor-office | umi | uma | rma | custom
    std::vector<arma::vec3> bs_positions;
    std::vector<arma::vec3> user_positions;
    std::vector<double> bs_orientation_rad;   // bearing per BS
    std::vector<double> user_orientation_rad; // bearing per user
    ArrayGeometry bs_array;
    ArrayGeometry user_array;
    double tx_power_dbm = 23.0;
    enum class Direction
    {
        uplink,
        downlink
    } direction = Direction::uplink;
    std::uint64_t master_seed = 1;

    double wavelength_m = 0.0; // derived: c / center_frequency_hz
};

// Time-frequency numerology of the carrier.
struct CarrierConfig
{
    double subcarrier_spacing_hz = 30e3; // one of 15/30/60/120 kHz
    arma::uword fft_length = 4096;
    arma::uword grid_length_rb = 0; // resource blocks of 12 subcarriers
    std::string cp_mode = "normal";

    double sample_rate_hz = 0.0; // derived: subcarrier_spacing_hz * fft_length

    arma::uword active_subcarriers() const { return 12 * grid_length_rb; }
    // Normal-CP length per symbol (the NR 144-of-2048 ratio, long first
    // symbol not modelled).
    arma::uword cp_length() const { return (144 * fft_length) / 2048; }
    arma::uword samples_per_symbol() const { return fft_length + cp_length(); }
};

// Positioning-signal resource configuration.
struct SignalConfig
{
    enum class Type
    {
        srs,
        prs
    } type = Type::srs;
    arma::uword comb = 2;        // SRS: 2/4, PRS: 2/4/6/12
    arma::uword comb_offset = 0; // < comb
    arma::uword start_symbol = 13;
    arma::uword num_symbols = 1;
    arma::uword period_slots = 1;
    std::uint64_t sequence_id = 0;
    arma::uword cyclic_shift = 0;
};

// One (scenario, LOS-state) row of channel statistics. Log-domain spread
// statistics use value(fc) = a * log10(1 + fc_GHz) + c; SF/KF are in dB.
struct ScenarioTable
{
    std::string scenario;
    bool los = true;

    struct Stat
    {
        double mu_a = 0.0, mu_c = 0.0;
        double sigma_a = 0.0, sigma_c = 0.0;
        double mu(double fc_ghz) const { return mu_a * std::log10(1.0 + fc_ghz) + mu_c; }
        double sigma(double fc_ghz) const
        {
            return std::max(0.0, sigma_a * std::log10(1.0 + fc_ghz) + sigma_c);
        }
    };
    Stat lg_ds;  // log10(seconds)
    Stat lg_asd; // log10(degrees)
    Stat lg_asa;
    Stat lg_zsa;
    Stat lg_zsd;
    Stat sf_db;
    Stat kf_db;

    arma::uword cluster_count = 1;
    arma::uword rays_per_cluster = 1;
    double r_tau = 3.0;                // delay distribution proportionality factor
    double per_cluster_shadow_db = 3.0;
    double c_asd_deg = 5.0, c_asa_deg = 8.0, c_zsa_deg = 9.0; // intra-cluster spreads
    double xpr_mu_db = 10.0, xpr_sigma_db = 4.0;

    // decorrelation distances, metres
    double dcorr_ds = 8, dcorr_asd = 7, dcorr_asa = 5, dcorr_zsa = 4, dcorr_zsd = 4;
    double dcorr_sf = 10, dcorr_kf = 4;
    double dcorr_los = 10; // LOS-state consistency grid

    // pathloss: pl_db = pl_a*log10(d3d_m) + pl_b + pl_c*log10(fc_GHz)
    //                   + pl_hut*(h_ut_m - 1.5)
    // pl_dualslope switches to the breakpoint form; pl_nlos_floor takes the
    // max against the same scenario's LOS model.
    double pl_a = 0, pl_b = 0, pl_c = 0, pl_hut = 0;
    bool pl_dualslope = false;
    bool pl_nlos_floor = false;
};

// Channel realization options.
struct ChannelConfig
{
    enum class LosMode
    {
        forced_los,
        forced_nlos,
        probabilistic
    } los_mode = LosMode::forced_los;
    enum class ToaType
    {
        absolute,
        relative
    } toa_type = ToaType::absolute;
    enum class CoefMode
    {
        los_only,
        static_drop,
        dynamic
    } mode = CoefMode::static_drop;

    bool spatial_consistency = true;
    std::string scenario_table_path = "data/scenario_tables.tsv";
    arma::uword rays_per_cluster_override = 0; // 0 keeps the table value
    bool ground_reflection = false;
    double ground_permittivity = 5.0;
    bool o2i = false;
    double o2i_loss_db = 0.0;
    arma::vec3 user_velocity_mps = {0.0, 0.0, 0.0}; // dynamic mode only
    // 7x7 cross-correlation of the large-scale parameters in the order
    // {SF, KF, DS, ASD, ASA, ZSD, ZSA}; identity when not configured.
    arma::mat lsp_xcorr = arma::eye(7, 7);
};

// Hardware-impairment activation flags and parameters.
struct ApoParams
{
    bool enabled = false;
    std::string table_file; // empty -> synthetic table
    double synthetic_amplitude_rad = 0.2;
    arma::uword synthetic_terms = 3;
    std::uint64_t synthetic_seed = 1;
};
struct ToParams
{
    bool enabled = false;
    double sigma_s = 0.0;
    double bound_sigmas = 2.0;
};
struct SteeringErrParams
{
    bool enabled = false;
    arma::uword bits = 6;
    double sigma_phase_rad = 0.0;
    double sigma_amp_db = 0.0;
    double bound_sigmas = 2.0;
};
struct CfoParams
{
    bool enabled = false;
    double epsilon = 0.0; // normalized to the subcarrier spacing
};
struct IqParams
{
    bool enabled = false;
    double amplitude_mismatch = 0.0; // xi
    double phase_mismatch_rad = 0.0; // psi
    enum class Side
    {
        tx,
        rx
    } side = Side::rx;
    arma::vec filter_i = {1.0};
    arma::vec filter_q = {1.0};
};
struct PnParams
{
    bool enabled = false;
    double s0_dbc_hz = -100.0;
    std::vector<double> zeros_hz;
    std::vector<double> poles_hz;
};
struct PanParams
{
    bool enabled = false;
    double small_signal_gain = 1.0; // eta
    double smoothness = 1.1;        // zeta
    double a_sat = 1.0;             // input saturation amplitude, RMS volts
    double input_backoff_db = 8.0;  // RMS drive level below a_sat
    double phase_alpha = 0.0;       // amplitude-to-phase fit, degrees out
    double phase_beta = 1.0;
    double phase_gamma1 = 1.0;
    double phase_gamma2 = 1.0;
};
struct ImpairmentProfile
{
    ApoParams apo;
    ToParams to;
    SteeringErrParams steering;
    CfoParams cfo;
    IqParams iq;
    PnParams pn;
    PanParams pan;

    bool any_waveform_domain() const
    {
        return cfo.enabled || iq.enabled || pn.enabled || pan.enabled;
    }
};

// Analog-beamforming sweep and estimator selection.
struct AbfConfig
{
    bool enabled = false;
    double az_lo_deg = -60.0, az_hi_deg = 60.0;
    double el_lo_deg = 90.0, el_hi_deg = 90.0; // zenith angles
    arma::uword beam_count = 12;
    enum class Estimator
    {
        max_rsrp,
        sum_diff,
        two_beam,
        three_beam
    } estimator = Estimator::max_rsrp;
    arma::uword eta_index = 1; // l in the admissible spacing grid
    // initial-beam draw ranges for the angle-estimation case (azimuth and
    // zenith, degrees)
    double init_az_lo_deg = 0.0, init_az_hi_deg = 0.0;
    double init_el_lo_deg = 90.0, init_el_hi_deg = 90.0;
};

// Monte-Carlo case description.
struct CaseSpec
{
    enum class Kind
    {
        localization_2d,
        beam_sweep,
        bf_angle
    } kind = Kind::localization_2d;
    std::vector<double> snr_db = {10.0};
    arma::uword drops = 100;
    std::string output_dir = "out";
    bool emit_pathsets = false;
    bool emit_beam_reports = false;
    bool emit_cdfs = true;
    arma::uword slots = 1; // simulated duration override, in slots
    // Region users are dropped in (localization case): x_lo, y_lo, x_hi,
    // y_hi metres; empty -> bounding box of the BS positions.
    std::vector<double> drop_region_m;
};

// The validated configuration bundle.
struct SimConfig
{
    SystemConfig system;
    CarrierConfig carrier;
    SignalConfig signal;
    ChannelConfig channel;
    ImpairmentProfile hi;
    AbfConfig abf;
    std::optional<CaseSpec> case_spec;

    std::vector<ScenarioTable> scenario_rows; // loaded from the table file
};

// Loads, validates, and completes a JSON config file with sections
// system/carrier/signal/channel/hi/abf (+ optional case). Unknown keys and
// out-of-range values raise std::invalid_argument naming the offending key.
SimConfig load_config(const std::string &path);

// Same, from an in-memory JSON document (base_dir resolves relative paths).
SimConfig load_config_text(const std::string &json_text, const std::string &base_dir = ".");

// Canonical JSON text of a validated bundle, reloadable by load_config_text;
// serialize(load(x)) == serialize(load(serialize(load(x)))) by construction.
std::string serialize_config(const SimConfig &cfg);

// Parses a scenario statistics table (tab-separated, header row, one row
// per (scenario, LOS-state)). Missing columns raise std::invalid_argument
// naming the column.
std::vector<ScenarioTable> load_scenario_tables(const std::string &path);

// Returns the statistics row for (scenario, los_state).
const ScenarioTable &scenario_lookup(const std::vector<ScenarioTable> &rows,
                                     const std::string &scenario, bool los);

} // namespace posim

#endif
