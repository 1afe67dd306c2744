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

#include "posim/cases.hpp"
#include "posim/beamforming.hpp"
#include "posim/channel.hpp"
#include "posim/estimation.hpp"
#include "posim/impairments.hpp"
#include "posim/rng.hpp"
#include "posim/types.hpp"
#include "posim/waveform.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace posim
{

namespace
{

// Stream-derivation tags. The derivation paths are part of the output
// contract: every random draw hangs off {drop, link, tag}, drop-level draws
// off {drop, tag_drop}, and per-BS field lattices off {bs, los, tag_fields},
// so any drop can be replayed in isolation from the master seed recorded in
// the manifest. Receiver noise is drawn once per (drop, link) and scaled to
// each SNR point; estimates at neighbouring SNR values therefore share their
// noise realization, which removes Monte-Carlo jitter from RMSE-versus-SNR
// trends without biasing any single point.
enum stream_tag : std::uint64_t
{
    tag_drop = 1,     // drop-level draws: user position, truth angle
    tag_geometry,     // per-link LOS state
    tag_lsp,          // per-link large-scale draws (consistency off)
    tag_fields,       // per-BS correlated-parameter lattices
    tag_small_scale,  // per-link cluster realization
    tag_coefficients, // per-link coefficient phases
    tag_noise,        // per-link receiver noise (unit draws)
    tag_timing,       // per-link receive-chain timing offsets
    tag_steering,     // per-drop beam-weight perturbations
    tag_initial_beam, // per-drop initial-beam draw
    tag_phase_noise,  // per-link oscillator trajectory
};

const char *case_name(CaseSpec::Kind kind)
{
    switch (kind)
    {
    case CaseSpec::Kind::localization_2d:
        return "localization-2d";
    case CaseSpec::Kind::beam_sweep:
        return "beam-sweep";
    default:
        return "bf-angle";
    }
}

std::ofstream open_table(const std::filesystem::path &dir, const std::string &name,
                         const std::string &header, std::vector<std::string> &files)
{
    std::ofstream out(dir / name);
    if (!out)
        throw std::runtime_error("cases: cannot write " + (dir / name).string());
    out.precision(12);
    out << header << '\n';
    files.push_back(name);
    return out;
}

std::string sanitize(std::string text)
{
    for (char &c : text)
        if (c == '\t' || c == '\n' || c == '\r')
            c = ' ';
    return text;
}

std::uint64_t fnv1a64(const std::string &text)
{
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : text)
    {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

void write_manifest(const std::filesystem::path &dir, const SimConfig &cfg,
                    const CaseSpec &spec, CaseSummary &summary)
{
    // The hash identifies the simulation-defining configuration, so fields
    // that only steer output presentation are pinned to defaults first.
    SimConfig effective = cfg;
    effective.case_spec = spec;
    effective.case_spec->output_dir = "out";
    effective.case_spec->emit_pathsets = false;
    effective.case_spec->emit_beam_reports = false;
    effective.case_spec->emit_cdfs = true;
    char hash[17];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(serialize_config(effective))));

    nlohmann::json manifest;
    manifest["case"] = case_name(spec.kind);
    manifest["master_seed"] = cfg.system.master_seed;
    manifest["drops"] = spec.drops;
    manifest["slots"] = spec.slots;
    manifest["snr_db"] = spec.snr_db;
    manifest["drops_completed"] = summary.drops_completed;
    manifest["drops_failed"] = summary.drops_failed;
    manifest["config_fnv1a"] = hash;
    manifest["files"] = summary.output_files;
    manifest["versions"] = {{"posim", "0.1.0"},
                            {"armadillo", std::string(arma::arma_version::as_string())}};

    std::ofstream out(dir / "manifest.json");
    if (!out)
        throw std::runtime_error("cases: cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
    summary.output_files.push_back("manifest.json");
}

// Runs body(0..n-1) on a worker pool over an atomic drop counter. The body
// must not throw; per-drop failures are captured inside the drop records.
void parallel_for(arma::uword n, const std::function<void(arma::uword)> &body)
{
    arma::uword workers = std::thread::hardware_concurrency();
    if (workers == 0)
        workers = 1;
    workers = std::min(workers, n);
    if (workers < 2)
    {
        for (arma::uword i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<arma::uword> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (arma::uword w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (arma::uword i; (i = next.fetch_add(1)) < n;)
                body(i);
        });
    for (auto &worker : pool)
        worker.join();
}

void drop_region_bounds(const CaseSpec &spec, const SystemConfig &system, arma::vec2 &lo,
                        arma::vec2 &hi)
{
    if (spec.drop_region_m.size() == 4)
    {
        lo = {spec.drop_region_m[0], spec.drop_region_m[1]};
        hi = {spec.drop_region_m[2], spec.drop_region_m[3]};
    }
    else if (spec.drop_region_m.empty())
    {
        lo = {arma::datum::inf, arma::datum::inf};
        hi = {-arma::datum::inf, -arma::datum::inf};
        for (const auto &position : system.bs_positions)
        {
            lo[0] = std::min(lo[0], position[0]);
            lo[1] = std::min(lo[1], position[1]);
            hi[0] = std::max(hi[0], position[0]);
            hi[1] = std::max(hi[1], position[1]);
        }
    }
    else
        throw std::invalid_argument("cases: drop_region_m needs 4 entries (x_lo y_lo x_hi y_hi)");
    if (!(lo[0] < hi[0]) || !(lo[1] < hi[1]))
        throw std::invalid_argument("cases: the drop region is degenerate");
}

struct LinkRealization
{
    LinkGeometry geometry;
    PathSet paths;
};

// Correlated large-scale parameter lattices per BS, one per LOS state that
// the configured mode can produce.
struct ConsistencyFields
{
    std::optional<CorrelatedFieldGrid> state[2];
};

std::vector<ConsistencyFields> build_consistency_fields(const SimConfig &cfg,
                                                        const arma::vec2 &lo,
                                                        const arma::vec2 &hi,
                                                        const Stream &master)
{
    std::vector<ConsistencyFields> fields(cfg.system.bs_positions.size());
    bool need_los = cfg.channel.los_mode != ChannelConfig::LosMode::forced_nlos;
    bool need_nlos = cfg.channel.los_mode != ChannelConfig::LosMode::forced_los;
    for (arma::uword bs = 0; bs < fields.size(); ++bs)
        for (int los = 0; los < 2; ++los)
        {
            if (los == 1 ? !need_los : !need_nlos)
                continue;
            Stream stream = master.derive({bs, std::uint64_t(los), tag_fields});
            fields[bs].state[los] =
                generate_lsp_fields(scenario_lookup(cfg.scenario_rows, cfg.system.scenario,
                                                    los == 1),
                                    lo, hi, cfg.channel.lsp_xcorr, stream);
        }
    return fields;
}

// One full channel realization of the link BS -> dropped user, with every
// random draw on its own derived stream.
LinkRealization realize_link(const SimConfig &cfg, const SystemConfig &placed,
                             const Stream &master, arma::uword drop, arma::uword bs,
                             const std::vector<ConsistencyFields> *fields)
{
    Stream geometry_stream = master.derive({drop, bs, tag_geometry});
    LinkRealization link;
    link.geometry = compute_geometry(placed, cfg.channel, bs, 0, geometry_stream);

    double fc_ghz = cfg.system.center_frequency_hz / 1.0e9;
    const ScenarioTable &table =
        scenario_lookup(cfg.scenario_rows, cfg.system.scenario, link.geometry.los_state);
    LargeScaleParams lsp;
    if (fields)
    {
        arma::vec2 position = {placed.user_positions[0][0], placed.user_positions[0][1]};
        lsp = draw_lsp(*(*fields)[bs].state[link.geometry.los_state ? 1 : 0], position,
                       cfg.scenario_rows, cfg.system.scenario, link.geometry, fc_ghz);
    }
    else
    {
        Stream lsp_stream = master.derive({drop, bs, tag_lsp});
        lsp = draw_lsp(lsp_stream, cfg.channel.lsp_xcorr, cfg.scenario_rows,
                       cfg.system.scenario, link.geometry, fc_ghz);
    }

    arma::uword rays = cfg.channel.rays_per_cluster_override
                           ? cfg.channel.rays_per_cluster_override
                           : table.rays_per_cluster;
    Stream small_scale_stream = master.derive({drop, bs, tag_small_scale});
    link.paths = generate_small_scale(lsp, link.geometry, table, rays, cfg.channel.toa_type,
                                      cfg.channel.ground_reflection,
                                      cfg.channel.ground_permittivity, cfg.system.wavelength_m,
                                      small_scale_stream);
    Stream coefficient_stream = master.derive({drop, bs, tag_coefficients});
    generate_coefficients(link.paths, placed, bs, 0, cfg.channel, cfg.channel.mode,
                          coefficient_stream);
    return link;
}

// The known pilot grid at the configured transmit power: |symbol|^2 is the
// per-resource-element transmit power in mW, so downstream RSRP values come
// out in dBm.
ResourceGrid scaled_pilot(const SimConfig &cfg)
{
    ResourceGrid known = generate_signal_grid(cfg.signal, cfg.carrier);
    known.symbols *= std::sqrt(db2lin(cfg.system.tx_power_dbm));
    return known;
}

arma::uword receive_count(const SystemConfig &system)
{
    return system.direction == SystemConfig::Direction::uplink ? system.bs_array.size()
                                                               : system.user_array.size();
}

ApoTable make_apo_table(const SimConfig &cfg, const ResourceGrid &known)
{
    if (!cfg.hi.apo.table_file.empty())
        return load_apo_table(cfg.hi.apo.table_file);
    return synthesize_apo_table(receive_count(cfg.system),
                                active_subcarrier_indices(known, cfg.carrier),
                                cfg.hi.apo.synthetic_amplitude_rad, cfg.hi.apo.synthetic_terms,
                                cfg.hi.apo.synthetic_seed);
}

// Per-antenna received grid with the antenna phase offset folded into the
// composite CFR.
ResourceGrid apo_grid(const SimConfig &cfg, const PathSet &paths, const ResourceGrid &known,
                      const ApoTable &table)
{
    arma::vec indices = active_subcarrier_indices(known, cfg.carrier);
    Cfr cfr = apply_apo(paths, table, indices, cfg.carrier.subcarrier_spacing_hz,
                        cfg.system.direction);
    arma::uvec rows = arma::find(arma::sum(known.occupied.slice(0), 1) > 0);

    ResourceGrid rx;
    rx.symbols.zeros(known.n_subcarriers(), known.n_symbols(), cfr.n_rx());
    rx.occupied.zeros(known.n_subcarriers(), known.n_symbols(), cfr.n_rx());
    rx.subcarrier0_offset = known.subcarrier0_offset;
    for (arma::uword r = 0; r < cfr.n_rx(); ++r)
    {
        for (arma::uword j = 0; j < rows.n_elem; ++j)
            for (arma::uword s = 0; s < known.n_symbols(); ++s)
                if (known.occupied(rows[j], s, 0))
                    rx.symbols(rows[j], s, r) = cfr.values(r, j) * known.symbols(rows[j], s, 0);
        rx.occupied.slice(r) = known.occupied.slice(0);
    }
    return rx;
}

// Transmit-side waveform impairments, shared by every link of a drop.
BasebandWaveform transmit_waveform(const SimConfig &cfg, const ResourceGrid &known)
{
    BasebandWaveform tx = ofdm_modulate(known, cfg.carrier);
    if (cfg.hi.iq.enabled && cfg.hi.iq.side == IqParams::Side::tx)
        apply_iq(tx, cfg.hi.iq);
    if (cfg.hi.pan.enabled)
        apply_pan(tx, cfg.hi.pan);
    return tx;
}

void receive_impairments(const SimConfig &cfg, BasebandWaveform &rx, Stream &pn_stream)
{
    if (cfg.hi.cfo.enabled)
        apply_cfo(rx, cfg.hi.cfo.epsilon);
    if (cfg.hi.pn.enabled)
        apply_pn(rx, synthesize_pn(cfg.hi.pn, rx.samples.n_rows, rx.sample_rate_hz, pn_stream));
    if (cfg.hi.iq.enabled && cfg.hi.iq.side == IqParams::Side::rx)
        apply_iq(rx, cfg.hi.iq);
}

// Per-antenna measurement through the waveform-domain impairment chain:
// modulated pilot, transmit impairments, channel, receive impairments,
// demodulation.
ResourceGrid waveform_measurement(const SimConfig &cfg, const BasebandWaveform &tx,
                                  const PathSet &paths, const ResourceGrid &known,
                                  Stream &pn_stream)
{
    BasebandWaveform rx = apply_channel(tx, paths, cfg.carrier);
    receive_impairments(cfg, rx, pn_stream);
    ResourceGrid grid = ofdm_demodulate(rx, cfg.carrier);
    for (arma::uword p = 0; p < grid.n_ports(); ++p)
        grid.occupied.slice(p) = known.occupied.slice(0);
    return grid;
}

// A noiseless beam-combined measurement: probe beam b rides pilot symbol
// first_symbol + b and its weight vector combines the receive antennas into
// a single port. ref_power is the clean per-antenna mean occupied power
// that defines the SNR (the level before the beamforming gain), and
// weight_power scales the combined noise per probe symbol.
struct CombinedMeasurement
{
    ResourceGrid combined;
    double ref_power = 0.0;
    arma::vec weight_power;
};

CombinedMeasurement combine_probe_beams(const SimConfig &cfg, const LinkRealization &link,
                                        const ResourceGrid &known, const arma::cx_mat &weights,
                                        arma::uword first_symbol, const ApoTable *apo,
                                        const Stream &master, arma::uword drop)
{
    ResourceGrid clean = apply_channel_grid(known, link.paths, cfg.carrier);

    CombinedMeasurement measurement;
    measurement.ref_power = mean_occupied_power(clean, known.occupied);
    measurement.weight_power.set_size(weights.n_cols);
    for (arma::uword b = 0; b < weights.n_cols; ++b)
        measurement.weight_power[b] = arma::accu(arma::square(arma::abs(weights.col(b))));

    measurement.combined.symbols.zeros(known.n_subcarriers(), known.n_symbols(), 1);
    measurement.combined.occupied.zeros(known.n_subcarriers(), known.n_symbols(), 1);
    measurement.combined.occupied.slice(0) = known.occupied.slice(0);
    measurement.combined.subcarrier0_offset = known.subcarrier0_offset;

    if (!cfg.hi.any_waveform_domain())
    {
        ResourceGrid base = apo ? apo_grid(cfg, link.paths, known, *apo) : std::move(clean);
        for (arma::uword b = 0; b < weights.n_cols; ++b)
        {
            arma::uword s = first_symbol + b;
            for (arma::uword r = 0; r < base.n_ports(); ++r)
                measurement.combined.symbols.slice(0).col(s) +=
                    weights(r, b) * base.symbols.slice(r).col(s);
        }
        return measurement;
    }

    BasebandWaveform tx = transmit_waveform(cfg, known);
    BasebandWaveform rx = apply_channel(tx, link.paths, cfg.carrier);
    BasebandWaveform combined_wave = rx;
    combined_wave.samples.zeros(rx.samples.n_rows, 1);
    arma::uword span = cfg.carrier.samples_per_symbol();
    for (arma::uword b = 0; b < weights.n_cols; ++b)
    {
        arma::uword start = rx.symbol_start[first_symbol + b];
        combined_wave.samples.rows(start, start + span - 1) =
            rx.samples.rows(start, start + span - 1) * weights.col(b);
    }
    Stream pn_stream = master.derive({drop, 0, tag_phase_noise});
    receive_impairments(cfg, combined_wave, pn_stream);
    ResourceGrid grid = ofdm_demodulate(combined_wave, cfg.carrier);
    measurement.combined.symbols = grid.symbols;
    return measurement;
}

// Adds receiver noise to the probe symbols of a combined grid, one
// independent complex Gaussian per resource element, scaled per probe by
// the combining weight power.
void add_probe_noise(ResourceGrid &grid, arma::uword first_symbol, const arma::vec &weight_power,
                     double sigma2, Stream &stream)
{
    for (arma::uword b = 0; b < weight_power.n_elem; ++b)
        grid.symbols.slice(0).col(first_symbol + b) +=
            std::sqrt(sigma2 * weight_power[b]) * stream.cnormal_vec(grid.n_subcarriers());
}

// One-symbol subgrid, all ports.
ResourceGrid symbol_slice(const ResourceGrid &grid, arma::uword s)
{
    ResourceGrid out;
    out.symbols.set_size(grid.n_subcarriers(), 1, grid.n_ports());
    out.occupied.set_size(grid.n_subcarriers(), 1, grid.n_ports());
    for (arma::uword p = 0; p < grid.n_ports(); ++p)
    {
        out.symbols.slice(p).col(0) = grid.symbols.slice(p).col(s);
        out.occupied.slice(p).col(0) = grid.occupied.slice(p).col(s);
    }
    out.subcarrier0_offset = grid.subcarrier0_offset;
    return out;
}

// RMSE table row shared by the cases; nan marks an SNR point without any
// completed drop.
void append_rmse_row(std::ofstream &out, double snr_db, arma::uword n_ok, arma::uword n_failed,
                     const std::vector<const arma::vec *> &error_sets)
{
    out << snr_db << '\t' << n_ok << '\t' << n_failed;
    for (const arma::vec *errors : error_sets)
    {
        if (errors->empty())
        {
            out << "\tnan\tnan";
            continue;
        }
        ErrorMetrics metrics = compute_metrics(*errors);
        out << '\t' << metrics.rmse_about_mean << '\t' << metrics.rmse_about_truth;
    }
    out << '\n';
}

void append_cdf_rows(std::ofstream &out, double snr_db, const std::string &metric,
                     const arma::vec &errors)
{
    if (errors.empty())
        return;
    ErrorMetrics metrics = compute_metrics(errors);
    for (arma::uword i = 0; i < metrics.cdf_value.n_elem; ++i)
        out << snr_db << '\t' << metric << '\t' << metrics.cdf_value[i] << '\t'
            << metrics.cdf_probability[i] << '\n';
}

void check_hi_compatibility(const SimConfig &cfg)
{
    if (cfg.hi.apo.enabled && cfg.hi.any_waveform_domain())
        throw std::invalid_argument("cases: the antenna phase offset acts on the composite CFR "
                                    "and cannot be combined with waveform-domain impairments");
}

double mid(double lo, double hi) { return 0.5 * (lo + hi); }

} // namespace

// ---------------------------------------------------------------- localization

namespace
{

struct LocalizationPoint
{
    bool ok = false;
    std::string error;
    arma::uword bs_first = 0, bs_second = 0;
    double bearing_first_deg = 0.0, bearing_second_deg = 0.0;
    double est_x = 0.0, est_y = 0.0, error_m = 0.0;
    bool converged = false;
};

struct LocalizationDrop
{
    std::uint64_t seed = 0;
    double truth_x = 0.0, truth_y = 0.0;
    std::vector<LocalizationPoint> points;
    std::string pathset_rows;
    std::vector<std::string> warning_rows;
};

} // namespace

CaseSummary run_localization_case(const SimConfig &cfg, const CaseSpec &spec)
{
    const SystemConfig &system = cfg.system;
    const arma::uword n_bs = system.bs_positions.size();
    if (n_bs < 2)
        throw std::invalid_argument("run_localization_case: at least two base stations required");
    if (system.bs_orientation_rad.size() < n_bs)
        throw std::invalid_argument("run_localization_case: every BS needs an orientation");
    if (system.user_positions.empty())
        throw std::invalid_argument(
            "run_localization_case: a template user position (for the drop height) is required");
    if (system.direction != SystemConfig::Direction::uplink)
        throw std::invalid_argument(
            "run_localization_case: the case measures uplink pilots at the base stations");
    if (system.bs_array.size() < 2)
        throw std::invalid_argument(
            "run_localization_case: direction finding needs at least two BS antennas");
    check_hi_compatibility(cfg);

    arma::vec2 region_lo, region_hi;
    drop_region_bounds(spec, system, region_lo, region_hi);

    std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);

    const ResourceGrid known = scaled_pilot(cfg);
    const arma::vec scan = aoa_scan_grid(-90.0, 90.0);
    const Stream master(system.master_seed);
    const arma::uword n_snr = spec.snr_db.size();

    std::optional<ApoTable> apo;
    if (cfg.hi.apo.enabled)
        apo = make_apo_table(cfg, known);

    std::vector<ConsistencyFields> fields;
    if (cfg.channel.spatial_consistency)
        fields = build_consistency_fields(cfg, region_lo - 1.0, region_hi + 1.0, master);

    std::vector<LocalizationDrop> drops(spec.drops);

    parallel_for(spec.drops, [&](arma::uword drop) {
        LocalizationDrop &record = drops[drop];
        record.seed = derive_seed(system.master_seed, {drop, tag_drop});
        record.points.assign(n_snr, {});

        Stream drop_stream = master.derive({drop, tag_drop});
        record.truth_x = drop_stream.uniform(region_lo[0], region_hi[0]);
        record.truth_y = drop_stream.uniform(region_lo[1], region_hi[1]);

        SystemConfig placed = system;
        placed.user_positions = {
            arma::vec3{record.truth_x, record.truth_y, system.user_positions[0][2]}};

        struct LinkData
        {
            LinkRealization link;
            ResourceGrid measured;
            double ref_power = 0.0;
            arma::vec timing_s;
        };
        std::vector<LinkData> links(n_bs);
        try
        {
            std::optional<BasebandWaveform> tx;
            if (cfg.hi.any_waveform_domain())
                tx = transmit_waveform(cfg, known);
            for (arma::uword bs = 0; bs < n_bs; ++bs)
            {
                LinkData &data = links[bs];
                data.link = realize_link(cfg, placed, master, drop, bs,
                                         cfg.channel.spatial_consistency ? &fields : nullptr);
                if (delays_exceed_cp(data.link.paths, cfg.carrier))
                    record.warning_rows.push_back(std::to_string(drop) + "\t" +
                                                  std::to_string(bs) + "\tdelay_exceeds_cp");
                ResourceGrid clean = apply_channel_grid(known, data.link.paths, cfg.carrier);
                data.ref_power = mean_occupied_power(clean, known.occupied);
                if (apo)
                    data.measured = apo_grid(cfg, data.link.paths, known, *apo);
                else if (tx)
                {
                    Stream pn_stream = master.derive({drop, bs, tag_phase_noise});
                    data.measured =
                        waveform_measurement(cfg, *tx, data.link.paths, known, pn_stream);
                }
                else
                    data.measured = std::move(clean);
                if (cfg.hi.to.enabled)
                {
                    Stream timing_stream = master.derive({drop, bs, tag_timing});
                    data.timing_s = draw_timing_offsets(data.measured.n_ports(), cfg.hi.to,
                                                        timing_stream);
                }
            }
            if (spec.emit_pathsets)
            {
                std::ostringstream rows;
                for (arma::uword bs = 0; bs < n_bs; ++bs)
                    append_pathset(rows, drop, bs, links[bs].link.paths);
                record.pathset_rows = rows.str();
            }
        }
        catch (const std::exception &err)
        {
            for (auto &point : record.points)
                point.error = err.what();
            return;
        }

        double peak_power = 0.0;
        for (const auto &data : links)
            peak_power = std::max(peak_power, data.ref_power);

        for (arma::uword s = 0; s < n_snr; ++s)
        {
            LocalizationPoint &point = record.points[s];
            try
            {
                double sigma2 = peak_power / db2lin(spec.snr_db[s]) / double(spec.slots);
                auto noisy_grid = [&](arma::uword bs) {
                    ResourceGrid grid = links[bs].measured;
                    Stream noise_stream = master.derive({drop, bs, tag_noise});
                    add_awgn(grid, sigma2, noise_stream);
                    return grid;
                };

                arma::vec rsrp(n_bs);
                for (arma::uword bs = 0; bs < n_bs; ++bs)
                    rsrp[bs] = estimate_rsrp(noisy_grid(bs), known);
                arma::uvec order = arma::regspace<arma::uvec>(0, n_bs - 1);
                std::stable_sort(order.begin(), order.end(),
                                 [&](arma::uword a, arma::uword b) { return rsrp[a] > rsrp[b]; });
                point.bs_first = order[0];
                point.bs_second = order[1];

                arma::vec bearings(2);
                arma::mat anchors(2, 2);
                for (arma::uword i = 0; i < 2; ++i)
                {
                    arma::uword bs = i == 0 ? point.bs_first : point.bs_second;
                    Cfr cfr = estimate_cfr_ls(noisy_grid(bs), known, cfg.carrier);
                    if (cfg.hi.to.enabled)
                        apply_to(cfr, cfg.carrier.subcarrier_spacing_hz, links[bs].timing_s);
                    double local_aoa =
                        estimate_aoa(cfr, system.bs_array, system.wavelength_m, scan).aoa_rad;
                    bearings[i] = wrap_pi(system.bs_orientation_rad[bs] + local_aoa);
                    anchors(0, i) = system.bs_positions[bs][0];
                    anchors(1, i) = system.bs_positions[bs][1];
                }
                point.bearing_first_deg = rad2deg(bearings[0]);
                point.bearing_second_deg = rad2deg(bearings[1]);

                // The two-bearing normal matrix is rank-deficient at any point
                // on the anchor-anchor line, so the iteration starts from the
                // bearing-line intersection instead of the anchor centroid.
                arma::vec2 d0 = {std::cos(bearings[0]), std::sin(bearings[0])};
                arma::vec2 d1 = {std::cos(bearings[1]), std::sin(bearings[1])};
                double cross = d0[0] * d1[1] - d0[1] * d1[0];
                if (std::abs(cross) < 1.0e-9)
                    throw std::runtime_error(
                        "the bearing lines are nearly parallel, no stable intersection");
                double rx = anchors(0, 1) - anchors(0, 0);
                double ry = anchors(1, 1) - anchors(1, 0);
                double along = (rx * d1[1] - ry * d1[0]) / cross;
                arma::vec2 start = {anchors(0, 0) + along * d0[0],
                                    anchors(1, 0) + along * d0[1]};
                LocalizationResult fix = localize_2d(bearings, anchors, start, 50);
                point.est_x = fix.position[0];
                point.est_y = fix.position[1];
                point.converged = fix.converged;
                point.error_m =
                    std::hypot(point.est_x - record.truth_x, point.est_y - record.truth_y);
                point.ok = true;
            }
            catch (const std::exception &err)
            {
                point.error = err.what();
            }
        }
    });

    CaseSummary summary;
    const std::string name = case_name(spec.kind);
    std::ofstream results =
        open_table(dir, "results.tsv",
                   "case\tdrop\tsnr_db\tdrop_seed\ttruth_x_m\ttruth_y_m\tbs_first\tbs_second"
                   "\tbearing_first_deg\tbearing_second_deg\test_x_m\test_y_m\terror_m"
                   "\tconverged",
                   summary.output_files);
    std::ofstream rmse = open_table(dir, "rmse.tsv",
                                    "snr_db\tn_completed\tn_failed\trmse_about_mean_m"
                                    "\trmse_about_truth_m",
                                    summary.output_files);
    std::optional<std::ofstream> cdf;
    if (spec.emit_cdfs)
        cdf = open_table(dir, "cdf.tsv", "snr_db\tmetric\tvalue\tprobability",
                         summary.output_files);
    std::ofstream errors =
        open_table(dir, "errors.tsv", "case\tdrop\tsnr_db\tmessage", summary.output_files);
    std::ofstream warnings =
        open_table(dir, "warnings.tsv", "case\tdrop\tlink\tkind", summary.output_files);
    std::optional<std::ofstream> pathsets;
    if (spec.emit_pathsets)
        pathsets = open_table(dir, "pathsets.tsv",
                              "drop\tlink\tpath\tdelay_s\tpower_lin\tbs_az_deg\tbs_zen_deg"
                              "\tuser_az_deg\tuser_zen_deg\tis_los\tis_ground",
                              summary.output_files);

    for (arma::uword drop = 0; drop < spec.drops; ++drop)
    {
        const LocalizationDrop &record = drops[drop];
        bool any_failed = false;
        for (arma::uword s = 0; s < n_snr; ++s)
        {
            const LocalizationPoint &point = record.points[s];
            if (!point.ok)
            {
                errors << name << '\t' << drop << '\t' << spec.snr_db[s] << '\t'
                       << sanitize(point.error) << '\n';
                any_failed = true;
                continue;
            }
            results << name << '\t' << drop << '\t' << spec.snr_db[s] << '\t' << record.seed
                    << '\t' << record.truth_x << '\t' << record.truth_y << '\t' << point.bs_first
                    << '\t' << point.bs_second << '\t' << point.bearing_first_deg << '\t'
                    << point.bearing_second_deg << '\t' << point.est_x << '\t' << point.est_y
                    << '\t' << point.error_m << '\t' << (point.converged ? 1 : 0) << '\n';
        }
        ++(any_failed ? summary.drops_failed : summary.drops_completed);
        for (const std::string &row : record.warning_rows)
            warnings << name << '\t' << row << '\n';
        if (pathsets)
            *pathsets << record.pathset_rows;
    }

    for (arma::uword s = 0; s < n_snr; ++s)
    {
        std::vector<double> errs;
        arma::uword failed = 0;
        for (const auto &record : drops)
        {
            if (record.points[s].ok)
                errs.push_back(record.points[s].error_m);
            else
                ++failed;
        }
        arma::vec error_vec(errs);
        append_rmse_row(rmse, spec.snr_db[s], error_vec.n_elem, failed, {&error_vec});
        if (cdf)
            append_cdf_rows(*cdf, spec.snr_db[s], "position_error_m", error_vec);
    }

    write_manifest(dir, cfg, spec, summary);
    return summary;
}

// ------------------------------------------------------------------ beam sweep

namespace
{

struct SweepPoint
{
    bool ok = false;
    std::string error;
    arma::uword best_beam = 0;
    double est_az_deg = 0.0, error_deg = 0.0;
    std::vector<BeamReport> reports;
};

struct SweepDrop
{
    std::uint64_t seed = 0;
    double truth_az_deg = 0.0;
    std::vector<SweepPoint> points;
    std::string pathset_rows;
    std::vector<std::string> warning_rows;
};

void check_beam_case_common(const SimConfig &cfg, arma::uword n_probes)
{
    if (!cfg.abf.enabled)
        throw std::invalid_argument("cases: analog beamforming is disabled in the configuration");
    if (cfg.system.bs_positions.empty() || cfg.system.user_positions.empty())
        throw std::invalid_argument("cases: one BS and a template user position are required");
    if (cfg.system.bs_orientation_rad.empty())
        throw std::invalid_argument("cases: BS 0 needs an orientation");
    if (cfg.system.direction != SystemConfig::Direction::uplink)
        throw std::invalid_argument("cases: beam combining happens at the BS array; configure "
                                    "the uplink direction");
    if (cfg.signal.num_symbols < n_probes)
        throw std::invalid_argument("cases: the pilot needs one occupied symbol per probe beam");
    check_hi_compatibility(cfg);
}

} // namespace

CaseSummary run_beamsweep_case(const SimConfig &cfg, const CaseSpec &spec)
{
    const SystemConfig &system = cfg.system;
    check_beam_case_common(cfg, cfg.abf.beam_count);

    BeamSet beams = allocate_beams(deg2rad(cfg.abf.az_lo_deg), deg2rad(cfg.abf.az_hi_deg),
                                   deg2rad(cfg.abf.el_lo_deg), deg2rad(cfg.abf.el_hi_deg),
                                   cfg.abf.beam_count, system.bs_array, system.wavelength_m);

    std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);

    const ResourceGrid known = scaled_pilot(cfg);
    const Stream master(system.master_seed);
    const arma::uword n_snr = spec.snr_db.size();
    const arma::uword first_symbol = cfg.signal.start_symbol;

    std::optional<ApoTable> apo;
    if (cfg.hi.apo.enabled)
        apo = make_apo_table(cfg, known);

    const double range_2d = std::hypot(system.user_positions[0][0] - system.bs_positions[0][0],
                                       system.user_positions[0][1] - system.bs_positions[0][1]);
    if (range_2d < 1.0e-6)
        throw std::invalid_argument("run_beamsweep_case: the template user sits on BS 0");

    std::vector<ConsistencyFields> fields;
    if (cfg.channel.spatial_consistency)
    {
        arma::vec2 center = {system.bs_positions[0][0], system.bs_positions[0][1]};
        fields = build_consistency_fields(cfg, center - (range_2d + 2.0),
                                          center + (range_2d + 2.0), master);
    }

    std::vector<SweepDrop> drops(spec.drops);

    parallel_for(spec.drops, [&](arma::uword drop) {
        SweepDrop &record = drops[drop];
        record.seed = derive_seed(system.master_seed, {drop, tag_drop});
        record.points.assign(n_snr, {});

        Stream drop_stream = master.derive({drop, tag_drop});
        double truth_local = drop_stream.uniform(deg2rad(cfg.abf.az_lo_deg),
                                                 deg2rad(cfg.abf.az_hi_deg));
        record.truth_az_deg = rad2deg(truth_local);

        double bearing = system.bs_orientation_rad[0] + truth_local;
        SystemConfig placed = system;
        placed.user_positions = {
            arma::vec3{system.bs_positions[0][0] + range_2d * std::cos(bearing),
                       system.bs_positions[0][1] + range_2d * std::sin(bearing),
                       system.user_positions[0][2]}};

        CombinedMeasurement measurement;
        try
        {
            LinkRealization link = realize_link(cfg, placed, master, drop, 0,
                                                cfg.channel.spatial_consistency ? &fields
                                                                                : nullptr);
            if (delays_exceed_cp(link.paths, cfg.carrier))
                record.warning_rows.push_back(std::to_string(drop) + "\t0\tdelay_exceeds_cp");

            arma::cx_mat weights = beams.weights;
            if (cfg.hi.steering.enabled)
            {
                Stream steering_stream = master.derive({drop, 0, tag_steering});
                for (arma::uword b = 0; b < weights.n_cols; ++b)
                    weights.col(b) =
                        perturb_weights(weights.col(b), cfg.hi.steering, steering_stream);
            }
            measurement = combine_probe_beams(cfg, link, known, weights, first_symbol,
                                              apo ? &*apo : nullptr, master, drop);
            if (spec.emit_pathsets)
            {
                std::ostringstream rows;
                append_pathset(rows, drop, 0, link.paths);
                record.pathset_rows = rows.str();
            }
        }
        catch (const std::exception &err)
        {
            for (auto &point : record.points)
                point.error = err.what();
            return;
        }

        for (arma::uword s = 0; s < n_snr; ++s)
        {
            SweepPoint &point = record.points[s];
            try
            {
                double sigma2 =
                    measurement.ref_power / db2lin(spec.snr_db[s]) / double(spec.slots);
                ResourceGrid noisy = measurement.combined;
                Stream noise_stream = master.derive({drop, 0, tag_noise});
                add_probe_noise(noisy, first_symbol, measurement.weight_power, sigma2,
                                noise_stream);

                std::vector<BeamReport> reports(beams.n_beams());
                for (arma::uword b = 0; b < beams.n_beams(); ++b)
                {
                    reports[b].drop = drop;
                    reports[b].beam_index = b;
                    reports[b].az_deg = rad2deg(beams.az_rad[b]);
                    reports[b].el_deg = rad2deg(beams.el_rad[b]);
                    reports[b].rsrp_dbm = estimate_rsrp(symbol_slice(noisy, first_symbol + b),
                                                        symbol_slice(known, first_symbol + b));
                }
                point.best_beam = select_best_beam(reports);
                point.est_az_deg = rad2deg(beams.az_rad[point.best_beam]);
                point.error_deg = rad2deg(wrap_pi(beams.az_rad[point.best_beam] - truth_local));
                if (spec.emit_beam_reports)
                    point.reports = std::move(reports);
                point.ok = true;
            }
            catch (const std::exception &err)
            {
                point.error = err.what();
            }
        }
    });

    CaseSummary summary;
    const std::string name = case_name(spec.kind);
    std::ofstream results = open_table(dir, "results.tsv",
                                       "case\tdrop\tsnr_db\tdrop_seed\ttruth_az_deg\tbest_beam"
                                       "\test_az_deg\terror_deg",
                                       summary.output_files);
    std::ofstream rmse = open_table(dir, "rmse.tsv",
                                    "snr_db\tn_completed\tn_failed\trmse_about_mean_deg"
                                    "\trmse_about_truth_deg",
                                    summary.output_files);
    std::optional<std::ofstream> cdf;
    if (spec.emit_cdfs)
        cdf = open_table(dir, "cdf.tsv", "snr_db\tmetric\tvalue\tprobability",
                         summary.output_files);
    std::ofstream errors =
        open_table(dir, "errors.tsv", "case\tdrop\tsnr_db\tmessage", summary.output_files);
    std::ofstream warnings =
        open_table(dir, "warnings.tsv", "case\tdrop\tlink\tkind", summary.output_files);
    std::optional<std::ofstream> pathsets;
    if (spec.emit_pathsets)
        pathsets = open_table(dir, "pathsets.tsv",
                              "drop\tlink\tpath\tdelay_s\tpower_lin\tbs_az_deg\tbs_zen_deg"
                              "\tuser_az_deg\tuser_zen_deg\tis_los\tis_ground",
                              summary.output_files);
    std::vector<std::ofstream> beam_tables;
    if (spec.emit_beam_reports)
        for (arma::uword s = 0; s < n_snr; ++s)
            beam_tables.push_back(open_table(dir, "beams_" + std::to_string(s) + ".tsv",
                                             "drop\tbeam_index\taz_deg\tel_deg\trsrp_dbm",
                                             summary.output_files));

    for (arma::uword drop = 0; drop < spec.drops; ++drop)
    {
        const SweepDrop &record = drops[drop];
        bool any_failed = false;
        for (arma::uword s = 0; s < n_snr; ++s)
        {
            const SweepPoint &point = record.points[s];
            if (!point.ok)
            {
                errors << name << '\t' << drop << '\t' << spec.snr_db[s] << '\t'
                       << sanitize(point.error) << '\n';
                any_failed = true;
                continue;
            }
            results << name << '\t' << drop << '\t' << spec.snr_db[s] << '\t' << record.seed
                    << '\t' << record.truth_az_deg << '\t' << point.best_beam << '\t'
                    << point.est_az_deg << '\t' << point.error_deg << '\n';
            if (spec.emit_beam_reports)
                append_beam_reports(beam_tables[s], point.reports);
        }
        ++(any_failed ? summary.drops_failed : summary.drops_completed);
        for (const std::string &row : record.warning_rows)
            warnings << name << '\t' << row << '\n';
        if (pathsets)
            *pathsets << record.pathset_rows;
    }

    for (arma::uword s = 0; s < n_snr; ++s)
    {
        std::vector<double> errs;
        arma::uword failed = 0;
        for (const auto &record : drops)
        {
            if (record.points[s].ok)
                errs.push_back(record.points[s].error_deg);
            else
                ++failed;
        }
        arma::vec error_vec(errs);
        append_rmse_row(rmse, spec.snr_db[s], error_vec.n_elem, failed, {&error_vec});
        if (cdf)
            append_cdf_rows(*cdf, spec.snr_db[s], "abs_error_deg", arma::abs(error_vec));
    }

    write_manifest(dir, cfg, spec, summary);
    return summary;
}

// ---------------------------------------------------- beamforming angle case

namespace
{

struct BfAnglePoint
{
    bool ok = false;
    std::string error;
    double est_az_deg = 0.0, est_el_deg = 0.0;
    double error_az_deg = 0.0, error_el_deg = 0.0;
    bool in_coverage = false;
    std::vector<BeamReport> reports;
};

struct BfAngleDrop
{
    std::uint64_t seed = 0;
    double init_az_deg = 0.0, init_el_deg = 0.0;
    double truth_az_deg = 0.0, truth_el_deg = 0.0;
    std::vector<BfAnglePoint> points;
    std::string pathset_rows;
    std::vector<std::string> warning_rows;
};

arma::uword probe_count(AbfConfig::Estimator estimator)
{
    switch (estimator)
    {
    case AbfConfig::Estimator::sum_diff:
        return 3;
    case AbfConfig::Estimator::two_beam:
        return 4;
    case AbfConfig::Estimator::three_beam:
        return 5;
    default:
        throw std::invalid_argument(
            "run_bfangle_case: select the sum_diff, two_beam, or three_beam estimator");
    }
}

void check_probe_axes(const ArrayGeometry &array, AbfConfig::Estimator estimator,
                      arma::uword eta_index)
{
    if (estimator == AbfConfig::Estimator::sum_diff)
    {
        if (array.cols < 2 || array.cols % 2 || array.rows < 2 || array.rows % 2)
            throw std::invalid_argument("run_bfangle_case: the sum/difference split needs an "
                                        "even element count on both array axes");
        return;
    }
    if (eta_index < 1 || eta_index * 4 > array.cols || eta_index * 4 > array.rows)
        throw std::invalid_argument("run_bfangle_case: the auxiliary-pair spacing index must "
                                    "satisfy 1 <= l <= N/4 on both array axes");
}

// Probe-beam direction report: inverts the per-axis spatial frequencies for
// the emitted beam table.
BeamReport probe_report(arma::uword drop, arma::uword index, double mu_h, double mu_v,
                        const ArrayGeometry &array, double wavelength_m, double rsrp_dbm)
{
    double spacing = array.element_spacing_m > 0.0 ? array.element_spacing_m : wavelength_m / 2.0;
    double scale = wavelength_m / (2.0 * pi * spacing);
    double el = std::acos(std::clamp(mu_v * scale, -1.0, 1.0));
    double sin_el = std::sin(el);
    double az = sin_el < 1.0e-12
                    ? 0.0
                    : std::asin(std::clamp(mu_h * scale / sin_el, -1.0, 1.0));
    return {drop, index, rad2deg(az), rad2deg(el), rsrp_dbm};
}

} // namespace

CaseSummary run_bfangle_case(const SimConfig &cfg, const CaseSpec &spec)
{
    const SystemConfig &system = cfg.system;
    const ArrayGeometry &array = system.bs_array;
    const arma::uword n_probes = probe_count(cfg.abf.estimator);
    check_beam_case_common(cfg, n_probes);
    check_probe_axes(array, cfg.abf.estimator, cfg.abf.eta_index);
    if (cfg.signal.start_symbol + n_probes > 14)
        throw std::invalid_argument("run_bfangle_case: the probe symbols overrun the slot");

    std::filesystem::path dir(spec.output_dir);
    std::filesystem::create_directories(dir);

    const ResourceGrid known = scaled_pilot(cfg);
    const Stream master(system.master_seed);
    const arma::uword n_snr = spec.snr_db.size();
    const arma::uword first_symbol = cfg.signal.start_symbol;
    const double lambda = system.wavelength_m;
    const double l = double(cfg.abf.eta_index);

    std::optional<ApoTable> apo;
    if (cfg.hi.apo.enabled)
        apo = make_apo_table(cfg, known);

    // The user sits at the centre of the initial-beam ranges, at the
    // template distance from BS 0; the exact truth angles come back out of
    // the placed geometry.
    const double az_mid = deg2rad(mid(cfg.abf.init_az_lo_deg, cfg.abf.init_az_hi_deg));
    const double el_mid = deg2rad(mid(cfg.abf.init_el_lo_deg, cfg.abf.init_el_hi_deg));
    const double az_sigma = deg2rad(cfg.abf.init_az_hi_deg - cfg.abf.init_az_lo_deg) / 4.0;
    const double el_sigma = deg2rad(cfg.abf.init_el_hi_deg - cfg.abf.init_el_lo_deg) / 4.0;

    arma::vec3 offset = system.user_positions[0] - system.bs_positions[0];
    const double range_3d = arma::norm(offset);
    if (range_3d < 1.0e-6)
        throw std::invalid_argument("run_bfangle_case: the template user sits on BS 0");
    SystemConfig placed = system;
    placed.user_positions = {system.bs_positions[0] +
                             range_3d *
                                 unit_vector(system.bs_orientation_rad[0] + az_mid, el_mid)};

    std::vector<ConsistencyFields> fields;
    if (cfg.channel.spatial_consistency)
    {
        arma::vec2 center = {system.bs_positions[0][0], system.bs_positions[0][1]};
        fields = build_consistency_fields(cfg, center - (range_3d + 2.0),
                                          center + (range_3d + 2.0), master);
    }

    std::vector<BfAngleDrop> drops(spec.drops);

    parallel_for(spec.drops, [&](arma::uword drop) {
        BfAngleDrop &record = drops[drop];
        record.seed = derive_seed(system.master_seed, {drop, tag_drop});
        record.points.assign(n_snr, {});

        Stream beam_stream = master.derive({drop, tag_initial_beam});
        double az0 = beam_stream.truncated_normal(az_mid, az_sigma, 2.0);
        double el0 = beam_stream.truncated_normal(el_mid, el_sigma, 2.0);
        record.init_az_deg = rad2deg(az0);
        record.init_el_deg = rad2deg(el0);

        CombinedMeasurement measurement;
        double truth_az = 0.0, truth_el = 0.0;
        double mu_h0 = 0.0, mu_v0 = 0.0, eta_h = 0.0, eta_v = 0.0;
        try
        {
            LinkRealization link = realize_link(cfg, placed, master, drop, 0,
                                                cfg.channel.spatial_consistency ? &fields
                                                                                : nullptr);
            truth_az = link.geometry.az_bs;
            truth_el = link.geometry.zen_bs;
            record.truth_az_deg = rad2deg(truth_az);
            record.truth_el_deg = rad2deg(truth_el);
            if (delays_exceed_cp(link.paths, cfg.carrier))
                record.warning_rows.push_back(std::to_string(drop) + "\t0\tdelay_exceeds_cp");

            arma::cx_mat weights(array.size(), n_probes);
            mu_h0 = spatial_frequency(array, az0, el0, lambda, SplitAxis::horizontal);
            mu_v0 = spatial_frequency(array, az0, el0, lambda, SplitAxis::vertical);
            switch (cfg.abf.estimator)
            {
            case AbfConfig::Estimator::sum_diff:
            {
                arma::cx_vec sum = steering_weights(array, az0, el0, lambda);
                weights.col(0) = sum;
                weights.col(1) = diff_weights(sum, array.rows);
                weights.col(2) = diff_weights(sum, 0);
                break;
            }
            case AbfConfig::Estimator::two_beam:
                eta_h = pi * l / double(array.cols);
                eta_v = pi * l / double(array.rows);
                weights.col(0) = spatial_weights(array, mu_h0 - eta_h, mu_v0);
                weights.col(1) = spatial_weights(array, mu_h0 + eta_h, mu_v0);
                weights.col(2) = spatial_weights(array, mu_h0, mu_v0 - eta_v);
                weights.col(3) = spatial_weights(array, mu_h0, mu_v0 + eta_v);
                break;
            default:
                eta_h = 2.0 * pi * l / double(array.cols);
                eta_v = 2.0 * pi * l / double(array.rows);
                weights.col(0) = spatial_weights(array, mu_h0, mu_v0);
                weights.col(1) = spatial_weights(array, mu_h0 - eta_h, mu_v0);
                weights.col(2) = spatial_weights(array, mu_h0 + eta_h, mu_v0);
                weights.col(3) = spatial_weights(array, mu_h0, mu_v0 - eta_v);
                weights.col(4) = spatial_weights(array, mu_h0, mu_v0 + eta_v);
                break;
            }
            if (cfg.hi.steering.enabled)
            {
                Stream steering_stream = master.derive({drop, 0, tag_steering});
                for (arma::uword b = 0; b < weights.n_cols; ++b)
                    weights.col(b) =
                        perturb_weights(weights.col(b), cfg.hi.steering, steering_stream);
            }
            measurement = combine_probe_beams(cfg, link, known, weights, first_symbol,
                                              apo ? &*apo : nullptr, master, drop);
            if (spec.emit_pathsets)
            {
                std::ostringstream rows;
                append_pathset(rows, drop, 0, link.paths);
                record.pathset_rows = rows.str();
            }
        }
        catch (const std::exception &err)
        {
            for (auto &point : record.points)
                point.error = err.what();
            return;
        }

        for (arma::uword s = 0; s < n_snr; ++s)
        {
            BfAnglePoint &point = record.points[s];
            try
            {
                double sigma2 =
                    measurement.ref_power / db2lin(spec.snr_db[s]) / double(spec.slots);
                ResourceGrid noisy = measurement.combined;
                Stream noise_stream = master.derive({drop, 0, tag_noise});
                add_probe_noise(noisy, first_symbol, measurement.weight_power, sigma2,
                                noise_stream);
                double floor_dbm = lin2db(sigma2 * double(array.size()));

                AngleEstimate az_est, el_est;
                std::vector<BeamReport> reports;
                if (cfg.abf.estimator == AbfConfig::Estimator::sum_diff)
                {
                    arma::cx_vec outputs[3];
                    for (arma::uword b = 0; b < 3; ++b)
                    {
                        Cfr cfr = estimate_cfr_ls(symbol_slice(noisy, first_symbol + b),
                                                  symbol_slice(known, first_symbol + b),
                                                  cfg.carrier);
                        outputs[b] = cfr.values.row(0).st();
                    }
                    el_est = estimate_sumdiff(outputs[0], outputs[1], az0, el0, array, lambda,
                                              SplitAxis::vertical);
                    az_est = estimate_sumdiff(outputs[0], outputs[2], az0, el0, array, lambda,
                                              SplitAxis::horizontal, el_est.angle_rad);
                    if (spec.emit_beam_reports)
                        for (arma::uword b = 0; b < 3; ++b)
                            reports.push_back({drop, b, record.init_az_deg, record.init_el_deg,
                                               estimate_rsrp(symbol_slice(noisy, first_symbol + b),
                                                             symbol_slice(known,
                                                                          first_symbol + b))});
                }
                else
                {
                    arma::vec rsrp(n_probes);
                    for (arma::uword b = 0; b < n_probes; ++b)
                        rsrp[b] = estimate_rsrp(symbol_slice(noisy, first_symbol + b),
                                                symbol_slice(known, first_symbol + b));
                    if (cfg.abf.estimator == AbfConfig::Estimator::two_beam)
                    {
                        el_est = estimate_aux_pair({rsrp[2], rsrp[3]}, az0, el0, eta_v,
                                                   AuxPairMode::two_beam, array, lambda,
                                                   SplitAxis::vertical, floor_dbm);
                        az_est = estimate_aux_pair({rsrp[0], rsrp[1]}, az0, el0, eta_h,
                                                   AuxPairMode::two_beam, array, lambda,
                                                   SplitAxis::horizontal, floor_dbm,
                                                   el_est.angle_rad);
                        if (spec.emit_beam_reports)
                        {
                            reports.push_back(probe_report(drop, 0, mu_h0 - eta_h, mu_v0, array,
                                                           lambda, rsrp[0]));
                            reports.push_back(probe_report(drop, 1, mu_h0 + eta_h, mu_v0, array,
                                                           lambda, rsrp[1]));
                            reports.push_back(probe_report(drop, 2, mu_h0, mu_v0 - eta_v, array,
                                                           lambda, rsrp[2]));
                            reports.push_back(probe_report(drop, 3, mu_h0, mu_v0 + eta_v, array,
                                                           lambda, rsrp[3]));
                        }
                    }
                    else
                    {
                        el_est = estimate_aux_pair({rsrp[0], rsrp[3], rsrp[4]}, az0, el0, eta_v,
                                                   AuxPairMode::three_beam, array, lambda,
                                                   SplitAxis::vertical, floor_dbm);
                        az_est = estimate_aux_pair({rsrp[0], rsrp[1], rsrp[2]}, az0, el0, eta_h,
                                                   AuxPairMode::three_beam, array, lambda,
                                                   SplitAxis::horizontal, floor_dbm,
                                                   el_est.angle_rad);
                        if (spec.emit_beam_reports)
                        {
                            reports.push_back(
                                probe_report(drop, 0, mu_h0, mu_v0, array, lambda, rsrp[0]));
                            reports.push_back(probe_report(drop, 1, mu_h0 - eta_h, mu_v0, array,
                                                           lambda, rsrp[1]));
                            reports.push_back(probe_report(drop, 2, mu_h0 + eta_h, mu_v0, array,
                                                           lambda, rsrp[2]));
                            reports.push_back(probe_report(drop, 3, mu_h0, mu_v0 - eta_v, array,
                                                           lambda, rsrp[3]));
                            reports.push_back(probe_report(drop, 4, mu_h0, mu_v0 + eta_v, array,
                                                           lambda, rsrp[4]));
                        }
                    }
                }
                point.est_az_deg = rad2deg(az_est.angle_rad);
                point.est_el_deg = rad2deg(el_est.angle_rad);
                point.error_az_deg = rad2deg(wrap_pi(az_est.angle_rad - truth_az));
                point.error_el_deg = rad2deg(el_est.angle_rad - truth_el);
                point.in_coverage = az_est.in_coverage && el_est.in_coverage;
                point.reports = std::move(reports);
                point.ok = true;
            }
            catch (const std::exception &err)
            {
                point.error = err.what();
            }
        }
    });

    CaseSummary summary;
    const std::string name = case_name(spec.kind);
    std::ofstream results = open_table(dir, "results.tsv",
                                       "case\tdrop\tsnr_db\tdrop_seed\tinit_az_deg\tinit_el_deg"
                                       "\ttruth_az_deg\ttruth_el_deg\test_az_deg\test_el_deg"
                                       "\terror_az_deg\terror_el_deg\tin_coverage",
                                       summary.output_files);
    std::ofstream rmse = open_table(dir, "rmse.tsv",
                                    "snr_db\tn_completed\tn_failed\trmse_about_mean_az_deg"
                                    "\trmse_about_truth_az_deg\trmse_about_mean_el_deg"
                                    "\trmse_about_truth_el_deg",
                                    summary.output_files);
    std::optional<std::ofstream> cdf;
    if (spec.emit_cdfs)
        cdf = open_table(dir, "cdf.tsv", "snr_db\tmetric\tvalue\tprobability",
                         summary.output_files);
    std::ofstream errors =
        open_table(dir, "errors.tsv", "case\tdrop\tsnr_db\tmessage", summary.output_files);
    std::ofstream warnings =
        open_table(dir, "warnings.tsv", "case\tdrop\tlink\tkind", summary.output_files);
    std::optional<std::ofstream> pathsets;
    if (spec.emit_pathsets)
        pathsets = open_table(dir, "pathsets.tsv",
                              "drop\tlink\tpath\tdelay_s\tpower_lin\tbs_az_deg\tbs_zen_deg"
                              "\tuser_az_deg\tuser_zen_deg\tis_los\tis_ground",
                              summary.output_files);
    std::vector<std::ofstream> beam_tables;
    if (spec.emit_beam_reports)
        for (arma::uword s = 0; s < n_snr; ++s)
            beam_tables.push_back(open_table(dir, "beams_" + std::to_string(s) + ".tsv",
                                             "drop\tbeam_index\taz_deg\tel_deg\trsrp_dbm",
                                             summary.output_files));

    for (arma::uword drop = 0; drop < spec.drops; ++drop)
    {
        const BfAngleDrop &record = drops[drop];
        bool any_failed = false;
        for (arma::uword s = 0; s < n_snr; ++s)
        {
            const BfAnglePoint &point = record.points[s];
            if (!point.ok)
            {
                errors << name << '\t' << drop << '\t' << spec.snr_db[s] << '\t'
                       << sanitize(point.error) << '\n';
                any_failed = true;
                continue;
            }
            results << name << '\t' << drop << '\t' << spec.snr_db[s] << '\t' << record.seed
                    << '\t' << record.init_az_deg << '\t' << record.init_el_deg << '\t'
                    << record.truth_az_deg << '\t' << record.truth_el_deg << '\t'
                    << point.est_az_deg << '\t' << point.est_el_deg << '\t' << point.error_az_deg
                    << '\t' << point.error_el_deg << '\t' << (point.in_coverage ? 1 : 0) << '\n';
            if (spec.emit_beam_reports)
                append_beam_reports(beam_tables[s], point.reports);
        }
        ++(any_failed ? summary.drops_failed : summary.drops_completed);
        for (const std::string &row : record.warning_rows)
            warnings << name << '\t' << row << '\n';
        if (pathsets)
            *pathsets << record.pathset_rows;
    }

    for (arma::uword s = 0; s < n_snr; ++s)
    {
        std::vector<double> az_errs, el_errs;
        arma::uword failed = 0;
        for (const auto &record : drops)
        {
            if (record.points[s].ok)
            {
                az_errs.push_back(record.points[s].error_az_deg);
                el_errs.push_back(record.points[s].error_el_deg);
            }
            else
                ++failed;
        }
        arma::vec az_vec(az_errs), el_vec(el_errs);
        append_rmse_row(rmse, spec.snr_db[s], az_vec.n_elem, failed, {&az_vec, &el_vec});
        if (cdf)
        {
            append_cdf_rows(*cdf, spec.snr_db[s], "abs_error_az_deg", arma::abs(az_vec));
            append_cdf_rows(*cdf, spec.snr_db[s], "abs_error_el_deg", arma::abs(el_vec));
        }
    }

    write_manifest(dir, cfg, spec, summary);
    return summary;
}

CaseSummary run_case(const SimConfig &cfg, const CaseSpec &spec)
{
    switch (spec.kind)
    {
    case CaseSpec::Kind::localization_2d:
        return run_localization_case(cfg, spec);
    case CaseSpec::Kind::beam_sweep:
        return run_beamsweep_case(cfg, spec);
    default:
        return run_bfangle_case(cfg, spec);
    }
}

} // namespace posim
