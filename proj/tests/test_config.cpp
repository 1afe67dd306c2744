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
#include <catch2/catch_amalgamated.hpp>
#include <fstream>

using namespace posim;
using Catch::Matchers::ContainsSubstring;

namespace
{

// Minimal valid document; tests patch individual keys.
std::string base_json(const std::string &extra_system = "", const std::string &extra_signal = "")
{
    return R"({
      "system": {
        "bandwidth_hz": 100e6,
        "center_frequency_hz": 2.565e9,
        "scenario": "indoor-office",
        "bs_positions": [[10, 15, 3], [30, 15, 3]],
        "user_positions": [[20, 25, 1.5]],
        "bs_orientation_deg": 180,
        "bs_array": { "rows": 1, "cols": 4 })" +
           extra_system + R"(
      },
      "carrier": {
        "subcarrier_spacing_hz": 30e3,
        "fft_length": 4096,
        "grid_length_rb": 272
      },
      "signal": {
        "type": "srs",
        "start_symbol": 13,
        "num_symbols": 1)" +
           extra_signal + R"(
      },
      "channel": { "los_state": "los" }
    })";
}

} // namespace

TEST_CASE("full example bundles load and validate", "[config]")
{
    for (const char *path : {"configs/localization_indoor.json", "configs/beamsweep_umi.json",
                             "configs/bfangle_indoor.json"})
    {
        INFO(path);
        SimConfig cfg = load_config(path);
        CHECK(cfg.system.wavelength_m == Catch::Approx(speed_of_light / cfg.system.center_frequency_hz));
        CHECK(cfg.carrier.sample_rate_hz ==
              cfg.carrier.subcarrier_spacing_hz * static_cast<double>(cfg.carrier.fft_length));
        CHECK(cfg.case_spec.has_value());
    }
}

TEST_CASE("defaults are filled", "[config]")
{
    SimConfig cfg = load_config_text(base_json());
    CHECK(cfg.signal.comb == 2);
    CHECK(cfg.signal.comb_offset == 0);
    CHECK(cfg.system.tx_power_dbm == 23.0);
    CHECK(cfg.system.bs_array.element_spacing_m ==
          Catch::Approx(cfg.system.wavelength_m / 2.0));
    CHECK(cfg.system.bs_orientation_rad.size() == 2);
    CHECK(cfg.system.bs_orientation_rad[0] == Catch::Approx(pi));
    CHECK(cfg.channel.lsp_xcorr.n_rows == 7);
    CHECK(arma::norm(cfg.channel.lsp_xcorr - arma::eye(7, 7), "fro") == 0.0);
}

TEST_CASE("out-of-range center frequency is rejected by name", "[config]")
{
    std::string doc = base_json();
    auto pos = doc.find("2.565e9");
    doc.replace(pos, 7, "0.4e9");
    CHECK_THROWS_WITH(load_config_text(doc), ContainsSubstring("center_frequency_hz"));
}

TEST_CASE("grid exceeding the FFT is rejected", "[config]")
{
    std::string doc = base_json();
    auto pos = doc.find("\"fft_length\": 4096");
    doc.replace(pos, 18, "\"fft_length\": 2048");
    CHECK_THROWS_WITH(load_config_text(doc), ContainsSubstring("grid_length_rb"));
}

TEST_CASE("unknown keys are rejected by name", "[config]")
{
    std::string doc = base_json(", \"bogus_knob\": 1");
    CHECK_THROWS_WITH(load_config_text(doc), ContainsSubstring("bogus_knob"));
}

TEST_CASE("comb offset must stay below the comb", "[config]")
{
    std::string doc = base_json("", ", \"comb\": 2, \"comb_offset\": 2");
    CHECK_THROWS_WITH(load_config_text(doc), ContainsSubstring("comb_offset"));
}

TEST_CASE("symbol allocation must fit one slot", "[config]")
{
    std::string doc = base_json();
    auto pos = doc.find("\"num_symbols\": 1");
    doc.replace(pos, 16, "\"num_symbols\": 2");
    CHECK_THROWS_WITH(load_config_text(doc), ContainsSubstring("num_symbols"));
}

TEST_CASE("cross polarization is rejected", "[config]")
{
    std::string doc = base_json(", \"user_array\": { \"rows\": 1, \"cols\": 1, "
                                "\"polarization\": \"cross\" }");
    CHECK_THROWS_WITH(load_config_text(doc), ContainsSubstring("polarization"));
}

TEST_CASE("serialization round-trips to a fixed point", "[config]")
{
    SimConfig cfg = load_config("configs/bfangle_indoor.json");
    std::string first = serialize_config(cfg);
    SimConfig reloaded = load_config_text(first);
    std::string second = serialize_config(reloaded);
    CHECK(first == second);
}

TEST_CASE("scenario lookup finds shipped rows and rejects unknown ones", "[config]")
{
    auto rows = load_scenario_tables("data/scenario_tables.tsv");
    const ScenarioTable &inh = scenario_lookup(rows, "indoor-office", true);
    CHECK(inh.cluster_count == 15);
    CHECK(inh.r_tau == Catch::Approx(3.6));
    const ScenarioTable &umi_n = scenario_lookup(rows, "umi", false);
    CHECK(umi_n.cluster_count == 19);
    CHECK(umi_n.pl_nlos_floor);

    CHECK_THROWS_WITH(scenario_lookup(rows, "uma", true), ContainsSubstring("uma"));
}

TEST_CASE("frequency-dependent statistics evaluate per the table form", "[config]")
{
    auto rows = load_scenario_tables("data/scenario_tables.tsv");
    const ScenarioTable &inh = scenario_lookup(rows, "indoor-office", true);
    // mu = a*log10(1+fc) + c at fc = 26 GHz
    double fc = 26.0;
    CHECK(inh.lg_asa.mu(fc) == Catch::Approx(-0.19 * std::log10(27.0) + 1.781));
    CHECK(inh.lg_asa.sigma(fc) == Catch::Approx(0.12 * std::log10(27.0) + 0.119));
    CHECK(inh.sf_db.sigma(fc) == Catch::Approx(3.0));
    CHECK(inh.kf_db.mu(fc) == Catch::Approx(7.0));
}

TEST_CASE("a custom table missing a required column is rejected by name", "[config]")
{
    std::string path = "/tmp/posim_test_missing_col.tsv";
    {
        std::ifstream src("data/scenario_tables.tsv");
        std::ofstream dst(path);
        std::string line;
        while (std::getline(src, line))
        {
            if (line.rfind("scenario\t", 0) == 0)
            {
                auto pos = line.find("\tkf_mu");
                line.erase(pos, 6);
            }
            dst << line << "\n";
        }
    }
    CHECK_THROWS_WITH(load_scenario_tables(path), ContainsSubstring("kf_mu"));
}
