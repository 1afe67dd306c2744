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
#include "posim/config.hpp"
#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace posim;
namespace fs = std::filesystem;

namespace
{

// Fresh output directory under the system temp root.
fs::path temp_dir(const std::string &name)
{
    fs::path dir = fs::temp_directory_path() / ("posim_case_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path &file)
{
    std::ifstream in(file, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Tab-split rows of a table file, header first.
std::vector<std::vector<std::string>> read_table(const fs::path &file)
{
    std::ifstream in(file);
    REQUIRE(in.good());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line))
    {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t'))
            cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::map<std::string, arma::uword> column_index(const std::vector<std::string> &header)
{
    std::map<std::string, arma::uword> idx;
    for (arma::uword i = 0; i < header.size(); ++i)
        idx[header[i]] = i;
    return idx;
}

SimConfig small_bfangle(const std::string &out_name, CaseSpec &spec)
{
    SimConfig cfg = load_config("configs/bfangle_indoor.json");
    spec = *cfg.case_spec;
    spec.drops = 3;
    spec.snr_db = {10.0};
    spec.output_dir = temp_dir(out_name).string();
    return cfg;
}

} // namespace

TEST_CASE("bf-angle case emits complete tables and manifest", "[cases]")
{
    CaseSpec spec;
    SimConfig cfg = small_bfangle("bfangle_tables", spec);
    spec.emit_pathsets = true;
    spec.emit_beam_reports = true;

    CaseSummary summary = run_case(cfg, spec);
    CHECK(summary.drops_completed == 3);
    CHECK(summary.drops_failed == 0);

    fs::path dir(spec.output_dir);
    for (const std::string &file : summary.output_files)
        CHECK(fs::exists(dir / file));
    for (const char *name : {"results.tsv", "rmse.tsv", "cdf.tsv", "errors.tsv",
                             "warnings.tsv", "pathsets.tsv", "manifest.json"})
        CHECK(fs::exists(dir / name));

    auto results = read_table(dir / "results.tsv");
    REQUIRE(results.size() == 1 + 3);
    auto idx = column_index(results[0]);
    REQUIRE(idx.count("drop") == 1);
    REQUIRE(idx.count("drop_seed") == 1);
    REQUIRE(idx.count("error_az_deg") == 1);
    for (arma::uword r = 1; r < results.size(); ++r)
    {
        CHECK(results[r].size() == results[0].size());
        CHECK(results[r][idx["case"]] == "bf-angle");
        CHECK(std::stod(results[r][idx["truth_az_deg"]]) == Catch::Approx(-45.0).margin(1.0));
    }

    auto rmse = read_table(dir / "rmse.tsv");
    REQUIRE(rmse.size() == 2);
    CHECK(std::stoul(rmse[1][column_index(rmse[0])["n_completed"]]) == 3);

    nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(manifest["case"] == "bf-angle");
    CHECK(manifest["drops"] == 3);
    CHECK(manifest["drops_completed"] == 3);
    CHECK(manifest["master_seed"] == cfg.system.master_seed);
    CHECK(manifest["config_fnv1a"].get<std::string>().size() == 16);
    for (const auto &file : manifest["files"])
        CHECK(fs::exists(dir / file.get<std::string>()));
}

TEST_CASE("identical config and seed reproduce byte-identical outputs", "[cases]")
{
    CaseSpec spec_a;
    SimConfig cfg = small_bfangle("identical_a", spec_a);
    CaseSpec spec_b = spec_a;
    spec_b.output_dir = temp_dir("identical_b").string();

    CaseSummary first = run_case(cfg, spec_a);
    CaseSummary second = run_case(cfg, spec_b);
    REQUIRE(first.output_files == second.output_files);
    for (const std::string &file : first.output_files)
        CHECK(slurp(fs::path(spec_a.output_dir) / file) ==
              slurp(fs::path(spec_b.output_dir) / file));
}

TEST_CASE("beam sweep selects a beam near the drawn bearing at high SNR", "[cases]")
{
    SimConfig cfg = load_config("configs/beamsweep_umi.json");
    cfg.channel.mode = ChannelConfig::CoefMode::los_only;
    CaseSpec spec = *cfg.case_spec;
    spec.drops = 5;
    spec.snr_db = {40.0};
    spec.output_dir = temp_dir("sweep_high_snr").string();
    spec.emit_beam_reports = true;

    CaseSummary summary = run_case(cfg, spec);
    REQUIRE(summary.drops_completed == 5);

    fs::path dir(spec.output_dir);
    auto results = read_table(dir / "results.tsv");
    auto idx = column_index(results[0]);
    double half_cell = 0.5 * 120.0 / 12.0;
    for (arma::uword r = 1; r < results.size(); ++r)
        CHECK(std::abs(std::stod(results[r][idx["error_deg"]])) < half_cell + 1.0);

    auto beams = read_table(dir / "beams_0.tsv");
    CHECK(beams.size() == 1 + 5 * 12);
}

TEST_CASE("localization errors stay small without noise or impairments", "[cases]")
{
    SimConfig cfg = load_config("configs/localization_indoor.json");
    cfg.channel.mode = ChannelConfig::CoefMode::los_only;
    CaseSpec spec = *cfg.case_spec;
    spec.drops = 3;
    spec.snr_db = {60.0};
    spec.output_dir = temp_dir("loc_clean").string();

    CaseSummary summary = run_case(cfg, spec);
    REQUIRE(summary.drops_completed + summary.drops_failed == 3);

    auto results = read_table(fs::path(spec.output_dir) / "results.tsv");
    auto idx = column_index(results[0]);
    REQUIRE(results.size() >= 2);
    for (arma::uword r = 1; r < results.size(); ++r)
    {
        CHECK(std::stod(results[r][idx["error_m"]]) < 0.5);
        CHECK(results[r][idx["converged"]] == "1");
    }
}

TEST_CASE("per-drop channel failures are recorded without aborting the run", "[cases]")
{
    CaseSpec spec;
    SimConfig cfg = small_bfangle("bfangle_failures", spec);
    cfg.channel.los_mode = ChannelConfig::LosMode::forced_nlos;
    cfg.channel.mode = ChannelConfig::CoefMode::los_only;

    CaseSummary summary = run_case(cfg, spec);
    CHECK(summary.drops_completed == 0);
    CHECK(summary.drops_failed == 3);

    auto errors = read_table(fs::path(spec.output_dir) / "errors.tsv");
    REQUIRE(errors.size() == 1 + 3);
    for (arma::uword r = 1; r < errors.size(); ++r)
        CHECK(errors[r][0] == "bf-angle");
}

TEST_CASE("case runners validate their configuration up front", "[cases]")
{
    CaseSpec spec;
    SimConfig cfg = small_bfangle("bfangle_invalid", spec);

    SECTION("waveform-domain impairments cannot combine with the phase-offset table")
    {
        cfg.hi.apo.enabled = true;
        cfg.hi.cfo.enabled = true;
        cfg.hi.cfo.epsilon = 1.0e-4;
        CHECK_THROWS_AS(run_case(cfg, spec), std::invalid_argument);
    }
    SECTION("beam cases require the analog beamforming section")
    {
        cfg.abf.enabled = false;
        CHECK_THROWS_AS(run_case(cfg, spec), std::invalid_argument);
    }
    SECTION("localization needs at least two base stations")
    {
        SimConfig loc = load_config("configs/localization_indoor.json");
        loc.system.bs_positions.resize(1);
        loc.system.bs_orientation_rad.resize(1);
        CaseSpec loc_spec = *loc.case_spec;
        loc_spec.drops = 1;
        loc_spec.output_dir = temp_dir("loc_invalid").string();
        CHECK_THROWS_AS(run_case(loc, loc_spec), std::invalid_argument);
    }
}
