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

#include "posim/config.hpp"

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace posim
{

namespace
{

using nlohmann::json;

[[noreturn]] void fail(const std::string &msg)
{
    throw std::invalid_argument("posim::load_config: " + msg);
}

// Wraps one JSON object section; records accessed keys so that leftover
// (unknown) keys can be reported as errors.
class Section
{
  public:
    Section(const json &j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object())
            fail("section '" + name_ + "' must be an object");
    }

    bool has(const std::string &key)
    {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json &raw(const std::string &key)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            fail("missing required key '" + name_ + "." + key + "'");
        return j_.at(key);
    }

    template <typename T> T require(const std::string &key)
    {
        try
        {
            return raw(key).get<T>();
        }
        catch (const json::exception &)
        {
            fail("key '" + name_ + "." + key + "' has the wrong type");
        }
    }

    template <typename T> T get_or(const std::string &key, T def)
    {
        if (!has(key))
            return def;
        return require<T>(key);
    }

    // Errors on any key that was never accessed (catches typos).
    void finish()
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                fail("unknown key '" + name_ + "." + it.key() + "'");
    }

    const std::string &name() const { return name_; }

  private:
    const json &j_;
    std::string name_;
    std::set<std::string> seen_;
};

arma::vec3 parse_position(const json &j, const std::string &where)
{
    if (!j.is_array() || j.size() != 3)
        fail("'" + where + "' entries must be [x, y, z] metres");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<arma::vec3> parse_positions(Section &sec, const std::string &key)
{
    const json &j = sec.raw(key);
    if (!j.is_array() || j.empty())
        fail("'" + sec.name() + "." + key + "' must be a non-empty list of positions");
    std::vector<arma::vec3> out;
    for (const auto &e : j)
        out.push_back(parse_position(e, sec.name() + "." + key));
    return out;
}

// Scalar (applied to every node) or per-node list, degrees in the file.
std::vector<double> parse_orientations(Section &sec, const std::string &key, std::size_t n_nodes)
{
    std::vector<double> out;
    if (!sec.has(key))
    {
        out.assign(n_nodes, 0.0);
        return out;
    }
    const json &j = sec.raw(key);
    if (j.is_number())
        out.assign(n_nodes, deg2rad(j.get<double>()));
    else if (j.is_array())
    {
        if (j.size() != n_nodes)
            fail("'" + sec.name() + "." + key + "' list length must match the node count");
        for (const auto &e : j)
            out.push_back(deg2rad(e.get<double>()));
    }
    else
        fail("'" + sec.name() + "." + key + "' must be a number or list of numbers (degrees)");
    return out;
}

ArrayGeometry parse_array(const json &j, const std::string &where, double wavelength)
{
    Section sec(j, where);
    ArrayGeometry a;
    a.rows = sec.get_or<arma::uword>("rows", 1);
    a.cols = sec.get_or<arma::uword>("cols", 1);
    if (a.rows * a.cols < 1)
        fail("'" + where + "' must have at least one element");
    a.element_spacing_m = sec.get_or<double>("element_spacing_m", 0.0);
    if (a.element_spacing_m == 0.0)
        a.element_spacing_m = wavelength / 2.0;
    if (a.element_spacing_m <= 0.0)
        fail("'" + where + ".element_spacing_m' must be positive");
    std::string pat = sec.get_or<std::string>("pattern", "isotropic");
    if (pat == "isotropic")
        a.pattern = ArrayGeometry::Pattern::isotropic;
    else if (pat == "directional-3gpp")
        a.pattern = ArrayGeometry::Pattern::directional_3gpp;
    else
        fail("'" + where + ".pattern' must be 'isotropic' or 'directional-3gpp'");
    std::string pol = sec.get_or<std::string>("polarization", "single");
    if (pol == "single")
        a.polarization = ArrayGeometry::Polarization::single;
    else if (pol == "cross")
        fail("'" + where + ".polarization' = 'cross' is not supported by this build");
    else
        fail("'" + where + ".polarization' must be 'single' or 'cross'");
    sec.finish();
    return a;
}

SystemConfig parse_system(const json &j)
{
    Section sec(j, "system");
    SystemConfig s;
    s.bandwidth_hz = sec.require<double>("bandwidth_hz");
    if (s.bandwidth_hz <= 0)
        fail("'system.bandwidth_hz' must be positive");
    s.center_frequency_hz = sec.require<double>("center_frequency_hz");
    if (s.center_frequency_hz < 0.5e9 || s.center_frequency_hz > 100e9)
        fail("'system.center_frequency_hz' out of range [0.5e9, 100e9]");
    s.wavelength_m = speed_of_light / s.center_frequency_hz;

    s.scenario = sec.require<std::string>("scenario");
    static const std::set<std::string> known = {"indoor-office", "umi", "uma", "rma", "custom"};
    if (!known.count(s.scenario))
        fail("'system.scenario' must be one of indoor-office/umi/uma/rma/custom");

    s.bs_positions = parse_positions(sec, "bs_positions");
    s.user_positions = parse_positions(sec, "user_positions");
    for (const auto &p : s.bs_positions)
        if (p[2] <= 0)
            fail("'system.bs_positions' heights must be > 0");
    for (const auto &p : s.user_positions)
        if (p[2] <= 0)
            fail("'system.user_positions' heights must be > 0");

    s.bs_orientation_rad = parse_orientations(sec, "bs_orientation_deg", s.bs_positions.size());
    s.user_orientation_rad =
        parse_orientations(sec, "user_orientation_deg", s.user_positions.size());

    s.bs_array = parse_array(sec.raw("bs_array"), "system.bs_array", s.wavelength_m);
    if (sec.has("user_array"))
        s.user_array = parse_array(sec.raw("user_array"), "system.user_array", s.wavelength_m);
    else
        s.user_array.element_spacing_m = s.wavelength_m / 2.0;

    s.tx_power_dbm = sec.get_or<double>("tx_power_dbm", 23.0);
    std::string dir = sec.get_or<std::string>("direction", "uplink");
    if (dir == "uplink")
        s.direction = SystemConfig::Direction::uplink;
    else if (dir == "downlink")
        s.direction = SystemConfig::Direction::downlink;
    else
        fail("'system.direction' must be 'uplink' or 'downlink'");
    s.master_seed = sec.get_or<std::uint64_t>("master_seed", 1);
    sec.finish();
    return s;
}

CarrierConfig parse_carrier(const json &j)
{
    Section sec(j, "carrier");
    CarrierConfig c;
    c.subcarrier_spacing_hz = sec.require<double>("subcarrier_spacing_hz");
    static const std::set<double> valid_scs = {15e3, 30e3, 60e3, 120e3};
    if (!valid_scs.count(c.subcarrier_spacing_hz))
        fail("'carrier.subcarrier_spacing_hz' must be one of 15e3/30e3/60e3/120e3");
    c.fft_length = sec.require<arma::uword>("fft_length");
    if (c.fft_length == 0 || (c.fft_length & (c.fft_length - 1)) != 0)
        fail("'carrier.fft_length' must be a power of two");
    c.grid_length_rb = sec.require<arma::uword>("grid_length_rb");
    if (c.grid_length_rb < 1)
        fail("'carrier.grid_length_rb' must be >= 1");
    if (12 * c.grid_length_rb > c.fft_length)
        fail("'carrier.grid_length_rb' grid (12 subcarriers each) exceeds the FFT length");
    c.cp_mode = sec.get_or<std::string>("cp_mode", std::string("normal"));
    if (c.cp_mode != "normal")
        fail("'carrier.cp_mode' must be 'normal'");
    c.sample_rate_hz = c.subcarrier_spacing_hz * static_cast<double>(c.fft_length);
    sec.finish();
    return c;
}

void check_carrier_vs_system(const CarrierConfig &c, const SystemConfig &s)
{
    double occupied = 12.0 * static_cast<double>(c.grid_length_rb) * c.subcarrier_spacing_hz;
    if (occupied > s.bandwidth_hz)
        fail("occupied bandwidth (carrier.grid_length_rb * 12 * subcarrier spacing) exceeds "
             "'system.bandwidth_hz'");
}

SignalConfig parse_signal(const json &j)
{
    Section sec(j, "signal");
    SignalConfig s;
    std::string type = sec.get_or<std::string>("type", "srs");
    if (type == "srs")
        s.type = SignalConfig::Type::srs;
    else if (type == "prs")
        s.type = SignalConfig::Type::prs;
    else
        fail("'signal.type' must be 'srs' or 'prs'");
    s.comb = sec.get_or<arma::uword>("comb", 2);
    if (s.type == SignalConfig::Type::srs && s.comb != 2 && s.comb != 4)
        fail("'signal.comb' must be 2 or 4 for SRS");
    if (s.type == SignalConfig::Type::prs && s.comb != 2 && s.comb != 4 && s.comb != 6 &&
        s.comb != 12)
        fail("'signal.comb' must be one of 2/4/6/12 for PRS");
    s.comb_offset = sec.get_or<arma::uword>("comb_offset", 0);
    if (s.comb_offset >= s.comb)
        fail("'signal.comb_offset' must be smaller than 'signal.comb'");
    s.start_symbol = sec.require<arma::uword>("start_symbol");
    s.num_symbols = sec.require<arma::uword>("num_symbols");
    if (s.num_symbols < 1)
        fail("'signal.num_symbols' must be >= 1");
    if (s.start_symbol + s.num_symbols > 14)
        fail("'signal.start_symbol' + 'signal.num_symbols' must fit a 14-symbol slot");
    s.period_slots = sec.get_or<arma::uword>("period_slots", 1);
    if (s.period_slots < 1)
        fail("'signal.period_slots' must be >= 1");
    s.sequence_id = sec.get_or<std::uint64_t>("sequence_id", 0);
    s.cyclic_shift = sec.get_or<arma::uword>("cyclic_shift", 0);
    sec.finish();
    return s;
}

ChannelConfig parse_channel(const json &j, const std::string &base_dir)
{
    Section sec(j, "channel");
    ChannelConfig c;
    std::string los = sec.get_or<std::string>("los_state", "los");
    if (los == "los")
        c.los_mode = ChannelConfig::LosMode::forced_los;
    else if (los == "nlos")
        c.los_mode = ChannelConfig::LosMode::forced_nlos;
    else if (los == "auto")
        c.los_mode = ChannelConfig::LosMode::probabilistic;
    else
        fail("'channel.los_state' must be 'los', 'nlos', or 'auto'");

    std::string toa = sec.get_or<std::string>("toa_type", "absolute");
    if (toa == "absolute")
        c.toa_type = ChannelConfig::ToaType::absolute;
    else if (toa == "relative")
        c.toa_type = ChannelConfig::ToaType::relative;
    else
        fail("'channel.toa_type' must be 'absolute' or 'relative'");

    std::string mode = sec.get_or<std::string>("mode", "static");
    if (mode == "los-only")
        c.mode = ChannelConfig::CoefMode::los_only;
    else if (mode == "static")
        c.mode = ChannelConfig::CoefMode::static_drop;
    else if (mode == "dynamic")
        c.mode = ChannelConfig::CoefMode::dynamic;
    else
        fail("'channel.mode' must be 'los-only', 'static', or 'dynamic'");

    c.spatial_consistency = sec.get_or<bool>("spatial_consistency", true);
    c.scenario_table_path =
        sec.get_or<std::string>("scenario_table_path", std::string("data/scenario_tables.tsv"));
    std::filesystem::path p(c.scenario_table_path);
    if (p.is_relative())
    {
        std::filesystem::path joined =
            (std::filesystem::path(base_dir) / p).lexically_normal();
        if (std::filesystem::exists(joined))
            c.scenario_table_path = joined.string();
    }
    c.rays_per_cluster_override = sec.get_or<arma::uword>("rays_per_cluster", 0);
    c.ground_reflection = sec.get_or<bool>("ground_reflection", false);
    c.ground_permittivity = sec.get_or<double>("ground_permittivity", 5.0);
    if (c.ground_permittivity <= 1.0)
        fail("'channel.ground_permittivity' must be > 1");
    c.o2i = sec.get_or<bool>("o2i", false);
    c.o2i_loss_db = sec.get_or<double>("o2i_loss_db", 0.0);
    if (sec.has("user_velocity_mps"))
        c.user_velocity_mps = parse_position(sec.raw("user_velocity_mps"), "channel.user_velocity_mps");
    if (sec.has("lsp_xcorr"))
    {
        const json &m = sec.raw("lsp_xcorr");
        if (!m.is_array() || m.size() != 7)
            fail("'channel.lsp_xcorr' must be a 7x7 matrix (order SF,KF,DS,ASD,ASA,ZSD,ZSA)");
        c.lsp_xcorr.set_size(7, 7);
        for (arma::uword r = 0; r < 7; ++r)
        {
            if (!m[r].is_array() || m[r].size() != 7)
                fail("'channel.lsp_xcorr' must be a 7x7 matrix (order SF,KF,DS,ASD,ASA,ZSD,ZSA)");
            for (arma::uword q = 0; q < 7; ++q)
                c.lsp_xcorr(r, q) = m[r][q].get<double>();
        }
        if (arma::norm(c.lsp_xcorr - c.lsp_xcorr.t(), "fro") > 1e-9)
            fail("'channel.lsp_xcorr' must be symmetric");
    }
    sec.finish();
    return c;
}

ImpairmentProfile parse_hi(const json &j)
{
    Section sec(j, "hi");
    ImpairmentProfile hi;

    if (sec.has("apo"))
    {
        Section s(sec.raw("apo"), "hi.apo");
        hi.apo.enabled = s.get_or<bool>("enabled", true);
        hi.apo.table_file = s.get_or<std::string>("table_file", std::string());
        hi.apo.synthetic_amplitude_rad = s.get_or<double>("synthetic_amplitude_rad", 0.2);
        hi.apo.synthetic_terms = s.get_or<arma::uword>("synthetic_terms", 3);
        hi.apo.synthetic_seed = s.get_or<std::uint64_t>("synthetic_seed", 1);
        if (hi.apo.synthetic_amplitude_rad < 0)
            fail("'hi.apo.synthetic_amplitude_rad' must be >= 0");
        s.finish();
    }
    if (sec.has("to"))
    {
        Section s(sec.raw("to"), "hi.to");
        hi.to.enabled = s.get_or<bool>("enabled", true);
        hi.to.sigma_s = s.get_or<double>("sigma_s", 0.0);
        hi.to.bound_sigmas = s.get_or<double>("bound_sigmas", 2.0);
        if (hi.to.sigma_s < 0)
            fail("'hi.to.sigma_s' must be >= 0");
        s.finish();
    }
    if (sec.has("steering"))
    {
        Section s(sec.raw("steering"), "hi.steering");
        hi.steering.enabled = s.get_or<bool>("enabled", true);
        hi.steering.bits = s.get_or<arma::uword>("bits", 6);
        if (hi.steering.bits < 1)
            fail("'hi.steering.bits' must be >= 1");
        hi.steering.sigma_phase_rad = deg2rad(s.get_or<double>("sigma_phase_deg", 0.0));
        hi.steering.sigma_amp_db = s.get_or<double>("sigma_amp_db", 0.0);
        hi.steering.bound_sigmas = s.get_or<double>("bound_sigmas", 2.0);
        if (hi.steering.sigma_phase_rad < 0 || hi.steering.sigma_amp_db < 0)
            fail("'hi.steering' sigma values must be >= 0");
        s.finish();
    }
    if (sec.has("cfo"))
    {
        Section s(sec.raw("cfo"), "hi.cfo");
        hi.cfo.enabled = s.get_or<bool>("enabled", true);
        hi.cfo.epsilon = s.get_or<double>("epsilon", 0.0);
        s.finish();
    }
    if (sec.has("iq"))
    {
        Section s(sec.raw("iq"), "hi.iq");
        hi.iq.enabled = s.get_or<bool>("enabled", true);
        hi.iq.amplitude_mismatch = s.get_or<double>("amplitude_mismatch", 0.0);
        hi.iq.phase_mismatch_rad = deg2rad(s.get_or<double>("phase_mismatch_deg", 0.0));
        std::string side = s.get_or<std::string>("side", "rx");
        if (side == "tx")
            hi.iq.side = IqParams::Side::tx;
        else if (side == "rx")
            hi.iq.side = IqParams::Side::rx;
        else
            fail("'hi.iq.side' must be 'tx' or 'rx'");
        auto parse_taps = [&](const char *key, arma::vec &out) {
            if (!s.has(key))
                return;
            const json &t = s.raw(key);
            if (!t.is_array() || t.empty())
                fail(std::string("'hi.iq.") + key + "' must be a non-empty list");
            out.set_size(t.size());
            for (arma::uword i = 0; i < t.size(); ++i)
                out[i] = t[i].get<double>();
        };
        parse_taps("filter_i", hi.iq.filter_i);
        parse_taps("filter_q", hi.iq.filter_q);
        if (hi.iq.filter_i.n_elem != hi.iq.filter_q.n_elem)
            fail("'hi.iq.filter_i' and 'hi.iq.filter_q' must have equal length");
        s.finish();
    }
    if (sec.has("pn"))
    {
        Section s(sec.raw("pn"), "hi.pn");
        hi.pn.enabled = s.get_or<bool>("enabled", true);
        hi.pn.s0_dbc_hz = s.get_or<double>("s0_dbc_hz", -100.0);
        hi.pn.zeros_hz = s.get_or<std::vector<double>>("zeros_hz", {});
        hi.pn.poles_hz = s.get_or<std::vector<double>>("poles_hz", {});
        for (double f : hi.pn.zeros_hz)
            if (f <= 0)
                fail("'hi.pn.zeros_hz' must be positive");
        for (double f : hi.pn.poles_hz)
            if (f <= 0)
                fail("'hi.pn.poles_hz' must be positive");
        s.finish();
    }
    if (sec.has("pan"))
    {
        Section s(sec.raw("pan"), "hi.pan");
        hi.pan.enabled = s.get_or<bool>("enabled", true);
        hi.pan.small_signal_gain = s.get_or<double>("small_signal_gain", 1.0);
        hi.pan.smoothness = s.get_or<double>("smoothness", 1.1);
        hi.pan.a_sat = s.get_or<double>("a_sat", 1.0);
        if (hi.pan.a_sat <= 0)
            fail("'hi.pan.a_sat' must be > 0");
        if (hi.pan.smoothness <= 0)
            fail("'hi.pan.smoothness' must be > 0");
        hi.pan.input_backoff_db = s.get_or<double>("input_backoff_db", 8.0);
        hi.pan.phase_alpha = s.get_or<double>("phase_alpha", 0.0);
        hi.pan.phase_beta = s.get_or<double>("phase_beta", 1.0);
        if (hi.pan.phase_beta <= 0)
            fail("'hi.pan.phase_beta' must be > 0");
        hi.pan.phase_gamma1 = s.get_or<double>("phase_gamma1", 1.0);
        hi.pan.phase_gamma2 = s.get_or<double>("phase_gamma2", 1.0);
        s.finish();
    }
    sec.finish();
    return hi;
}

AbfConfig parse_abf(const json &j)
{
    Section sec(j, "abf");
    AbfConfig a;
    a.enabled = sec.get_or<bool>("enabled", true);
    a.az_lo_deg = sec.get_or<double>("az_range_deg_lo", -60.0);
    a.az_hi_deg = sec.get_or<double>("az_range_deg_hi", 60.0);
    a.el_lo_deg = sec.get_or<double>("el_range_deg_lo", 90.0);
    a.el_hi_deg = sec.get_or<double>("el_range_deg_hi", 90.0);
    if (a.az_lo_deg > a.az_hi_deg || a.el_lo_deg > a.el_hi_deg)
        fail("'abf' sweep ranges must have lo <= hi");
    a.beam_count = sec.get_or<arma::uword>("beam_count", 12);
    if (a.beam_count < 1)
        fail("'abf.beam_count' must be >= 1");
    std::string est = sec.get_or<std::string>("estimator", "max-rsrp");
    if (est == "max-rsrp")
        a.estimator = AbfConfig::Estimator::max_rsrp;
    else if (est == "sum-diff")
        a.estimator = AbfConfig::Estimator::sum_diff;
    else if (est == "two-beam")
        a.estimator = AbfConfig::Estimator::two_beam;
    else if (est == "three-beam")
        a.estimator = AbfConfig::Estimator::three_beam;
    else
        fail("'abf.estimator' must be one of max-rsrp/sum-diff/two-beam/three-beam");
    a.eta_index = sec.get_or<arma::uword>("eta_index", 1);
    if (a.eta_index < 1)
        fail("'abf.eta_index' must be >= 1");
    a.init_az_lo_deg = sec.get_or<double>("initial_az_deg_lo", 0.0);
    a.init_az_hi_deg = sec.get_or<double>("initial_az_deg_hi", 0.0);
    a.init_el_lo_deg = sec.get_or<double>("initial_el_deg_lo", 90.0);
    a.init_el_hi_deg = sec.get_or<double>("initial_el_deg_hi", 90.0);
    if (a.init_az_lo_deg > a.init_az_hi_deg || a.init_el_lo_deg > a.init_el_hi_deg)
        fail("'abf' initial-beam ranges must have lo <= hi");
    sec.finish();
    return a;
}

CaseSpec parse_case(const json &j)
{
    Section sec(j, "case");
    CaseSpec c;
    std::string kind = sec.require<std::string>("name");
    if (kind == "localization-2d")
        c.kind = CaseSpec::Kind::localization_2d;
    else if (kind == "beam-sweep")
        c.kind = CaseSpec::Kind::beam_sweep;
    else if (kind == "bf-angle")
        c.kind = CaseSpec::Kind::bf_angle;
    else
        fail("'case.name' must be one of localization-2d/beam-sweep/bf-angle");
    c.snr_db = sec.get_or<std::vector<double>>("snr_db", {10.0});
    if (c.snr_db.empty())
        fail("'case.snr_db' must be non-empty");
    c.drops = sec.get_or<arma::uword>("drops", 100);
    if (c.drops < 1)
        fail("'case.drops' must be >= 1");
    c.output_dir = sec.get_or<std::string>("output_dir", std::string("out"));
    c.emit_pathsets = sec.get_or<bool>("emit_pathsets", false);
    c.emit_beam_reports = sec.get_or<bool>("emit_beam_reports", false);
    c.emit_cdfs = sec.get_or<bool>("emit_cdfs", true);
    c.slots = sec.get_or<arma::uword>("slots", 1);
    if (c.slots < 1)
        fail("'case.slots' must be >= 1");
    c.drop_region_m = sec.get_or<std::vector<double>>("drop_region_m", {});
    if (!c.drop_region_m.empty())
    {
        if (c.drop_region_m.size() != 4)
            fail("'case.drop_region_m' must be [x_lo, y_lo, x_hi, y_hi]");
        if (c.drop_region_m[0] >= c.drop_region_m[2] || c.drop_region_m[1] >= c.drop_region_m[3])
            fail("'case.drop_region_m' must have lo < hi per axis");
    }
    sec.finish();
    return c;
}

double column(const std::vector<std::string> &header, const std::vector<std::string> &fields,
              const std::string &name, const std::string &path)
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
        {
            if (i >= fields.size())
                throw std::invalid_argument("posim::load_scenario_tables: row in '" + path +
                                            "' is missing a value for column '" + name + "'");
            return std::stod(fields[i]);
        }
    throw std::invalid_argument("posim::load_scenario_tables: '" + path +
                                "' is missing column '" + name + "'");
}

std::string column_str(const std::vector<std::string> &header,
                       const std::vector<std::string> &fields, const std::string &name,
                       const std::string &path)
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
        {
            if (i >= fields.size())
                throw std::invalid_argument("posim::load_scenario_tables: row in '" + path +
                                            "' is missing a value for column '" + name + "'");
            return fields[i];
        }
    throw std::invalid_argument("posim::load_scenario_tables: '" + path +
                                "' is missing column '" + name + "'");
}

std::vector<std::string> split_tsv(const std::string &line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t'))
        out.push_back(field);
    return out;
}

json array_to_json(const ArrayGeometry &a)
{
    json j;
    j["rows"] = a.rows;
    j["cols"] = a.cols;
    j["element_spacing_m"] = a.element_spacing_m;
    j["pattern"] =
        a.pattern == ArrayGeometry::Pattern::isotropic ? "isotropic" : "directional-3gpp";
    j["polarization"] = "single";
    return j;
}

} // namespace

std::vector<ScenarioTable> load_scenario_tables(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("posim::load_scenario_tables: cannot open '" + path + "'");

    std::vector<std::string> header;
    std::vector<ScenarioTable> rows;
    std::string line;
    while (std::getline(in, line))
    {
        if (line.empty() || line[0] == '#')
            continue;
        auto fields = split_tsv(line);
        if (header.empty())
        {
            header = fields;
            continue;
        }
        ScenarioTable t;
        t.scenario = column_str(header, fields, "scenario", path);
        std::string los = column_str(header, fields, "los", path);
        if (los != "los" && los != "nlos")
            throw std::invalid_argument("posim::load_scenario_tables: '" + path +
                                        "' column 'los' must be 'los' or 'nlos'");
        t.los = (los == "los");

        auto num = [&](const std::string &name) { return column(header, fields, name, path); };
        t.cluster_count = static_cast<arma::uword>(num("n_clusters"));
        t.rays_per_cluster = static_cast<arma::uword>(num("rays_per_cluster"));
        t.r_tau = num("r_tau");
        t.per_cluster_shadow_db = num("zeta_db");
        t.c_asd_deg = num("c_asd");
        t.c_asa_deg = num("c_asa");
        t.c_zsa_deg = num("c_zsa");
        t.xpr_mu_db = num("xpr_mu");
        t.xpr_sigma_db = num("xpr_sigma");

        auto stat = [&](const std::string &prefix) {
            ScenarioTable::Stat s;
            s.mu_a = num(prefix + "_mu_a");
            s.mu_c = num(prefix + "_mu_c");
            s.sigma_a = num(prefix + "_sg_a");
            s.sigma_c = num(prefix + "_sg_c");
            return s;
        };
        t.lg_ds = stat("lgds");
        t.lg_asd = stat("lgasd");
        t.lg_asa = stat("lgasa");
        t.lg_zsa = stat("lgzsa");
        t.lg_zsd = stat("lgzsd");
        t.sf_db = ScenarioTable::Stat{0.0, 0.0, 0.0, num("sf_sigma")};
        t.kf_db = ScenarioTable::Stat{0.0, num("kf_mu"), 0.0, num("kf_sigma")};

        t.dcorr_ds = num("dcorr_ds");
        t.dcorr_asd = num("dcorr_asd");
        t.dcorr_asa = num("dcorr_asa");
        t.dcorr_zsa = num("dcorr_zsa");
        t.dcorr_zsd = num("dcorr_zsd");
        t.dcorr_sf = num("dcorr_sf");
        t.dcorr_kf = num("dcorr_kf");
        t.dcorr_los = num("dcorr_los");

        t.pl_a = num("pl_a");
        t.pl_b = num("pl_b");
        t.pl_c = num("pl_c");
        t.pl_hut = num("pl_hut");
        t.pl_dualslope = num("pl_dualslope") != 0.0;
        t.pl_nlos_floor = num("pl_nlos_floor") != 0.0;

        if (t.cluster_count < 1)
            throw std::invalid_argument(
                "posim::load_scenario_tables: 'n_clusters' must be >= 1 in '" + path + "'");
        for (double d : {t.dcorr_ds, t.dcorr_asd, t.dcorr_asa, t.dcorr_zsa, t.dcorr_zsd,
                         t.dcorr_sf, t.dcorr_kf, t.dcorr_los})
            if (d <= 0)
                throw std::invalid_argument(
                    "posim::load_scenario_tables: decorrelation distances must be > 0 in '" +
                    path + "'");
        rows.push_back(std::move(t));
    }
    if (rows.empty())
        throw std::invalid_argument("posim::load_scenario_tables: '" + path +
                                    "' contains no data rows");
    return rows;
}

const ScenarioTable &scenario_lookup(const std::vector<ScenarioTable> &rows,
                                     const std::string &scenario, bool los)
{
    for (const auto &r : rows)
        if (r.scenario == scenario && r.los == los)
            return r;
    throw std::invalid_argument("posim::scenario_lookup: no statistics row for scenario '" +
                                scenario + "' (" + (los ? "los" : "nlos") + ")");
}

SimConfig load_config_text(const std::string &json_text, const std::string &base_dir)
{
    json doc;
    try
    {
        doc = json::parse(json_text, nullptr, true, true); // allow // comments
    }
    catch (const json::exception &e)
    {
        fail(std::string("JSON parse error: ") + e.what());
    }
    if (!doc.is_object())
        fail("top level must be an object");

    Section top(doc, "config");
    SimConfig cfg;
    cfg.system = parse_system(top.raw("system"));
    cfg.carrier = parse_carrier(top.raw("carrier"));
    check_carrier_vs_system(cfg.carrier, cfg.system);
    cfg.signal = parse_signal(top.raw("signal"));
    cfg.channel = parse_channel(top.raw("channel"), base_dir);
    if (top.has("hi"))
        cfg.hi = parse_hi(top.raw("hi"));
    if (top.has("abf"))
        cfg.abf = parse_abf(top.raw("abf"));
    if (top.has("case"))
        cfg.case_spec = parse_case(top.raw("case"));
    top.finish();

    cfg.scenario_rows = load_scenario_tables(cfg.channel.scenario_table_path);
    // Fail fast when the configured scenario has no statistics row for the
    // LOS states this run can visit.
    if (cfg.channel.los_mode != ChannelConfig::LosMode::forced_nlos)
        scenario_lookup(cfg.scenario_rows, cfg.system.scenario, true);
    if (cfg.channel.los_mode != ChannelConfig::LosMode::forced_los)
        scenario_lookup(cfg.scenario_rows, cfg.system.scenario, false);
    return cfg;
}

SimConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        fail("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    std::string base_dir = std::filesystem::path(path).parent_path().string();
    if (base_dir.empty())
        base_dir = ".";
    return load_config_text(buf.str(), base_dir);
}

std::string serialize_config(const SimConfig &cfg)
{
    json j;

    json &sys = j["system"];
    sys["bandwidth_hz"] = cfg.system.bandwidth_hz;
    sys["center_frequency_hz"] = cfg.system.center_frequency_hz;
    sys["scenario"] = cfg.system.scenario;
    auto positions_to_json = [](const std::vector<arma::vec3> &v) {
        json a = json::array();
        for (const auto &p : v)
            a.push_back({p[0], p[1], p[2]});
        return a;
    };
    sys["bs_positions"] = positions_to_json(cfg.system.bs_positions);
    sys["user_positions"] = positions_to_json(cfg.system.user_positions);
    auto orient_to_json = [](const std::vector<double> &v) {
        json a = json::array();
        for (double r : v)
            a.push_back(rad2deg(r));
        return a;
    };
    sys["bs_orientation_deg"] = orient_to_json(cfg.system.bs_orientation_rad);
    sys["user_orientation_deg"] = orient_to_json(cfg.system.user_orientation_rad);
    sys["bs_array"] = array_to_json(cfg.system.bs_array);
    sys["user_array"] = array_to_json(cfg.system.user_array);
    sys["tx_power_dbm"] = cfg.system.tx_power_dbm;
    sys["direction"] =
        cfg.system.direction == SystemConfig::Direction::uplink ? "uplink" : "downlink";
    sys["master_seed"] = cfg.system.master_seed;

    json &car = j["carrier"];
    car["subcarrier_spacing_hz"] = cfg.carrier.subcarrier_spacing_hz;
    car["fft_length"] = cfg.carrier.fft_length;
    car["grid_length_rb"] = cfg.carrier.grid_length_rb;
    car["cp_mode"] = cfg.carrier.cp_mode;

    json &sig = j["signal"];
    sig["type"] = cfg.signal.type == SignalConfig::Type::srs ? "srs" : "prs";
    sig["comb"] = cfg.signal.comb;
    sig["comb_offset"] = cfg.signal.comb_offset;
    sig["start_symbol"] = cfg.signal.start_symbol;
    sig["num_symbols"] = cfg.signal.num_symbols;
    sig["period_slots"] = cfg.signal.period_slots;
    sig["sequence_id"] = cfg.signal.sequence_id;
    sig["cyclic_shift"] = cfg.signal.cyclic_shift;

    json &ch = j["channel"];
    switch (cfg.channel.los_mode)
    {
    case ChannelConfig::LosMode::forced_los:
        ch["los_state"] = "los";
        break;
    case ChannelConfig::LosMode::forced_nlos:
        ch["los_state"] = "nlos";
        break;
    case ChannelConfig::LosMode::probabilistic:
        ch["los_state"] = "auto";
        break;
    }
    ch["toa_type"] =
        cfg.channel.toa_type == ChannelConfig::ToaType::absolute ? "absolute" : "relative";
    switch (cfg.channel.mode)
    {
    case ChannelConfig::CoefMode::los_only:
        ch["mode"] = "los-only";
        break;
    case ChannelConfig::CoefMode::static_drop:
        ch["mode"] = "static";
        break;
    case ChannelConfig::CoefMode::dynamic:
        ch["mode"] = "dynamic";
        break;
    }
    ch["spatial_consistency"] = cfg.channel.spatial_consistency;
    ch["scenario_table_path"] = cfg.channel.scenario_table_path;
    ch["rays_per_cluster"] = cfg.channel.rays_per_cluster_override;
    ch["ground_reflection"] = cfg.channel.ground_reflection;
    ch["ground_permittivity"] = cfg.channel.ground_permittivity;
    ch["o2i"] = cfg.channel.o2i;
    ch["o2i_loss_db"] = cfg.channel.o2i_loss_db;
    ch["user_velocity_mps"] = {cfg.channel.user_velocity_mps[0], cfg.channel.user_velocity_mps[1],
                               cfg.channel.user_velocity_mps[2]};
    json xc = json::array();
    for (arma::uword r = 0; r < 7; ++r)
    {
        json row = json::array();
        for (arma::uword q = 0; q < 7; ++q)
            row.push_back(cfg.channel.lsp_xcorr(r, q));
        xc.push_back(row);
    }
    ch["lsp_xcorr"] = xc;

    json &hi = j["hi"];
    hi["apo"] = {{"enabled", cfg.hi.apo.enabled},
                 {"table_file", cfg.hi.apo.table_file},
                 {"synthetic_amplitude_rad", cfg.hi.apo.synthetic_amplitude_rad},
                 {"synthetic_terms", cfg.hi.apo.synthetic_terms},
                 {"synthetic_seed", cfg.hi.apo.synthetic_seed}};
    hi["to"] = {{"enabled", cfg.hi.to.enabled},
                {"sigma_s", cfg.hi.to.sigma_s},
                {"bound_sigmas", cfg.hi.to.bound_sigmas}};
    hi["steering"] = {{"enabled", cfg.hi.steering.enabled},
                      {"bits", cfg.hi.steering.bits},
                      {"sigma_phase_deg", rad2deg(cfg.hi.steering.sigma_phase_rad)},
                      {"sigma_amp_db", cfg.hi.steering.sigma_amp_db},
                      {"bound_sigmas", cfg.hi.steering.bound_sigmas}};
    hi["cfo"] = {{"enabled", cfg.hi.cfo.enabled}, {"epsilon", cfg.hi.cfo.epsilon}};
    json iq;
    iq["enabled"] = cfg.hi.iq.enabled;
    iq["amplitude_mismatch"] = cfg.hi.iq.amplitude_mismatch;
    iq["phase_mismatch_deg"] = rad2deg(cfg.hi.iq.phase_mismatch_rad);
    iq["side"] = cfg.hi.iq.side == IqParams::Side::tx ? "tx" : "rx";
    iq["filter_i"] = std::vector<double>(cfg.hi.iq.filter_i.begin(), cfg.hi.iq.filter_i.end());
    iq["filter_q"] = std::vector<double>(cfg.hi.iq.filter_q.begin(), cfg.hi.iq.filter_q.end());
    hi["iq"] = iq;
    hi["pn"] = {{"enabled", cfg.hi.pn.enabled},
                {"s0_dbc_hz", cfg.hi.pn.s0_dbc_hz},
                {"zeros_hz", cfg.hi.pn.zeros_hz},
                {"poles_hz", cfg.hi.pn.poles_hz}};
    hi["pan"] = {{"enabled", cfg.hi.pan.enabled},
                 {"small_signal_gain", cfg.hi.pan.small_signal_gain},
                 {"smoothness", cfg.hi.pan.smoothness},
                 {"a_sat", cfg.hi.pan.a_sat},
                 {"input_backoff_db", cfg.hi.pan.input_backoff_db},
                 {"phase_alpha", cfg.hi.pan.phase_alpha},
                 {"phase_beta", cfg.hi.pan.phase_beta},
                 {"phase_gamma1", cfg.hi.pan.phase_gamma1},
                 {"phase_gamma2", cfg.hi.pan.phase_gamma2}};

    json &abf = j["abf"];
    abf["enabled"] = cfg.abf.enabled;
    abf["az_range_deg_lo"] = cfg.abf.az_lo_deg;
    abf["az_range_deg_hi"] = cfg.abf.az_hi_deg;
    abf["el_range_deg_lo"] = cfg.abf.el_lo_deg;
    abf["el_range_deg_hi"] = cfg.abf.el_hi_deg;
    abf["beam_count"] = cfg.abf.beam_count;
    switch (cfg.abf.estimator)
    {
    case AbfConfig::Estimator::max_rsrp:
        abf["estimator"] = "max-rsrp";
        break;
    case AbfConfig::Estimator::sum_diff:
        abf["estimator"] = "sum-diff";
        break;
    case AbfConfig::Estimator::two_beam:
        abf["estimator"] = "two-beam";
        break;
    case AbfConfig::Estimator::three_beam:
        abf["estimator"] = "three-beam";
        break;
    }
    abf["eta_index"] = cfg.abf.eta_index;
    abf["initial_az_deg_lo"] = cfg.abf.init_az_lo_deg;
    abf["initial_az_deg_hi"] = cfg.abf.init_az_hi_deg;
    abf["initial_el_deg_lo"] = cfg.abf.init_el_lo_deg;
    abf["initial_el_deg_hi"] = cfg.abf.init_el_hi_deg;

    if (cfg.case_spec)
    {
        json &c = j["case"];
        switch (cfg.case_spec->kind)
        {
        case CaseSpec::Kind::localization_2d:
            c["name"] = "localization-2d";
            break;
        case CaseSpec::Kind::beam_sweep:
            c["name"] = "beam-sweep";
            break;
        case CaseSpec::Kind::bf_angle:
            c["name"] = "bf-angle";
            break;
        }
        c["snr_db"] = cfg.case_spec->snr_db;
        c["drops"] = cfg.case_spec->drops;
        c["output_dir"] = cfg.case_spec->output_dir;
        c["emit_pathsets"] = cfg.case_spec->emit_pathsets;
        c["emit_beam_reports"] = cfg.case_spec->emit_beam_reports;
        c["emit_cdfs"] = cfg.case_spec->emit_cdfs;
        c["slots"] = cfg.case_spec->slots;
        c["drop_region_m"] = cfg.case_spec->drop_region_m;
    }

    return j.dump(2) + "\n";
}

} // namespace posim
