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

// Command-line front end. One executable, one subcommand (or --case flag)
// per application case; flags override the matching config-file values.
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime case
// failure (including a run in which no drop completed).

#include "posim/cases.hpp"
#include "posim/config.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace
{

std::optional<posim::CaseSpec::Kind> parse_case_name(const std::string &name)
{
    if (name == "localization-2d")
        return posim::CaseSpec::Kind::localization_2d;
    if (name == "beam-sweep")
        return posim::CaseSpec::Kind::beam_sweep;
    if (name == "bf-angle")
        return posim::CaseSpec::Kind::bf_angle;
    return std::nullopt;
}

const char *case_name(posim::CaseSpec::Kind kind)
{
    switch (kind)
    {
    case posim::CaseSpec::Kind::localization_2d:
        return "localization-2d";
    case posim::CaseSpec::Kind::beam_sweep:
        return "beam-sweep";
    case posim::CaseSpec::Kind::bf_angle:
        return "bf-angle";
    }
    return "unknown";
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app("posim - link-level simulator for 5G positioning-signal transmission");
    app.fallthrough();

    std::string config_path;
    app.add_option("-c,--config", config_path, "Simulation config file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);

    std::string case_flag;
    app.add_option("--case", case_flag,
                   "Application case: localization-2d, beam-sweep or bf-angle "
                   "(alternative to the subcommand form)");

    std::uint64_t seed = 0;
    auto *seed_opt = app.add_option("-s,--seed", seed, "Override system.master_seed");

    std::vector<double> snr_db;
    auto *snr_opt =
        app.add_option("--snr", snr_db, "Override case.snr_db (dB, repeatable)")->delimiter(',');

    std::uint64_t drops = 0;
    auto *drops_opt = app.add_option("-d,--drops", drops, "Override case.drops")
                          ->check(CLI::PositiveNumber);

    std::uint64_t slots = 0;
    auto *slots_opt =
        app.add_option("--slots", slots, "Override case.slots (coherent integration length)")
            ->check(CLI::PositiveNumber);

    std::string out_dir;
    auto *out_opt = app.add_option("-o,--out", out_dir, "Override case.output_dir");

    bool emit_pathsets = false;
    auto *paths_opt =
        app.add_flag("--emit-pathsets", emit_pathsets, "Write per-drop path tables");
    bool emit_beams = false;
    auto *beams_opt =
        app.add_flag("--emit-beam-reports", emit_beams, "Write per-beam RSRP tables");
    bool no_cdfs = false;
    auto *cdf_opt = app.add_flag("--no-cdfs", no_cdfs, "Skip CDF tables");

    CLI::App *sub_loc = app.add_subcommand("localization-2d", "2-D AOA localization case");
    CLI::App *sub_sweep = app.add_subcommand("beam-sweep", "Beam-sweeping case");
    CLI::App *sub_angle = app.add_subcommand("bf-angle", "Beamforming-based angle estimation");
    app.require_subcommand(0, 1);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp &e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError &e)
    {
        app.exit(e);
        return 2;
    }

    std::optional<posim::CaseSpec::Kind> requested;
    if (sub_loc->parsed())
        requested = posim::CaseSpec::Kind::localization_2d;
    else if (sub_sweep->parsed())
        requested = posim::CaseSpec::Kind::beam_sweep;
    else if (sub_angle->parsed())
        requested = posim::CaseSpec::Kind::bf_angle;
    if (!case_flag.empty())
    {
        std::optional<posim::CaseSpec::Kind> named = parse_case_name(case_flag);
        if (!named)
        {
            std::cerr << "posim: unknown case '" << case_flag << "'" << std::endl;
            return 2;
        }
        if (requested && *requested != *named)
        {
            std::cerr << "posim: subcommand and --case disagree" << std::endl;
            return 2;
        }
        requested = named;
    }

    posim::SimConfig cfg;
    try
    {
        cfg = posim::load_config(config_path);
    }
    catch (const std::exception &e)
    {
        std::cerr << "posim: " << e.what() << std::endl;
        return 2;
    }

    if (!cfg.case_spec && !requested)
    {
        std::cerr << "posim: config has no case section; select one with a subcommand or --case"
                  << std::endl;
        return 2;
    }

    posim::CaseSpec spec = cfg.case_spec ? *cfg.case_spec : posim::CaseSpec{};
    if (requested)
        spec.kind = *requested;
    if (seed_opt->count() > 0)
        cfg.system.master_seed = seed;
    if (snr_opt->count() > 0)
        spec.snr_db = snr_db;
    if (drops_opt->count() > 0)
        spec.drops = drops;
    if (slots_opt->count() > 0)
        spec.slots = slots;
    if (out_opt->count() > 0)
        spec.output_dir = out_dir;
    if (paths_opt->count() > 0)
        spec.emit_pathsets = true;
    if (beams_opt->count() > 0)
        spec.emit_beam_reports = true;
    if (cdf_opt->count() > 0)
        spec.emit_cdfs = false;

    if (spec.snr_db.empty())
    {
        std::cerr << "posim: SNR list is empty" << std::endl;
        return 2;
    }
    if (spec.drops < 1)
    {
        std::cerr << "posim: drops must be >= 1" << std::endl;
        return 2;
    }

    posim::CaseSummary summary;
    try
    {
        summary = posim::run_case(cfg, spec);
    }
    catch (const std::exception &e)
    {
        std::cerr << "posim: " << case_name(spec.kind) << ": " << e.what() << std::endl;
        return 3;
    }

    if (summary.drops_completed == 0)
    {
        std::cerr << "posim: " << case_name(spec.kind) << ": no drop completed ("
                  << summary.drops_failed << " failed); see errors.tsv in " << spec.output_dir
                  << std::endl;
        return 3;
    }

    std::cout << case_name(spec.kind) << ": " << summary.drops_completed << "/"
              << (summary.drops_completed + summary.drops_failed) << " drops completed, "
              << spec.snr_db.size() << " SNR point" << (spec.snr_db.size() == 1 ? "" : "s")
              << ", " << summary.output_files.size() << " files in " << spec.output_dir
              << std::endl;
    if (summary.drops_failed > 0)
        std::cerr << "posim: " << summary.drops_failed
                  << " drops failed; details in errors.tsv" << std::endl;
    return 0;
}
