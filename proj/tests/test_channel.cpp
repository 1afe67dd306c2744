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

#include "posim/channel.hpp"
#include <catch2/catch_amalgamated.hpp>
#include <sstream>

using namespace posim;

namespace
{

SystemConfig umi_system()
{
    SystemConfig sys;
    sys.bandwidth_hz = 100e6;
    sys.center_frequency_hz = 26e9;
    sys.wavelength_m = speed_of_light / sys.center_frequency_hz;
    sys.scenario = "umi";
    sys.bs_positions = {arma::vec3{0.0, 0.0, 10.0}};
    sys.user_positions = {arma::vec3{-30.0, 0.0, 1.5}};
    sys.bs_orientation_rad = {pi};
    sys.user_orientation_rad = {0.0};
    sys.bs_array.rows = 1;
    sys.bs_array.cols = 1;
    sys.user_array.rows = 1;
    sys.user_array.cols = 1;
    return sys;
}

LinkGeometry los_geometry(const SystemConfig &sys)
{
    ChannelConfig channel;
    channel.los_mode = ChannelConfig::LosMode::forced_los;
    Stream stream(1);
    return compute_geometry(sys, channel, 0, 0, stream);
}

std::vector<ScenarioTable> shipped_tables()
{
    return load_scenario_tables("data/scenario_tables.tsv");
}

double rms_delay_spread(const PathSet &set)
{
    double mean = 0.0, second = 0.0;
    for (const Path &p : set.paths)
    {
        mean += p.power_lin * p.delay_s;
        second += p.power_lin * p.delay_s * p.delay_s;
    }
    return std::sqrt(std::max(second - mean * mean, 0.0));
}

double rms_azimuth_spread_deg(const PathSet &set, bool user_side)
{
    double sc = 0.0, ss = 0.0;
    for (const Path &p : set.paths)
    {
        double a = user_side ? p.user_az : p.bs_az;
        sc += p.power_lin * std::cos(a);
        ss += p.power_lin * std::sin(a);
    }
    double mean = std::atan2(ss, sc);
    double var = 0.0;
    for (const Path &p : set.paths)
    {
        double a = user_side ? p.user_az : p.bs_az;
        double d = wrap_pi(a - mean);
        var += p.power_lin * d * d;
    }
    return rad2deg(std::sqrt(var));
}

} // namespace

TEST_CASE("link geometry reproduces hand-computed distances and angles", "[channel]")
{
    SystemConfig sys = umi_system();
    LinkGeometry geom = los_geometry(sys);

    CHECK(geom.d2d_m == Catch::Approx(30.0));
    CHECK(geom.d3d_m == Catch::Approx(std::sqrt(30.0 * 30.0 + 8.5 * 8.5)));
    CHECK(geom.ground_distance_m == Catch::Approx(std::sqrt(30.0 * 30.0 + 11.5 * 11.5)));

    // User sits at global bearing pi from the BS; the BS array points at pi,
    // so the user appears at boresight.
    CHECK(geom.az_bs == Catch::Approx(0.0).margin(1e-12));
    CHECK(geom.az_user == Catch::Approx(0.0).margin(1e-12));
    CHECK(geom.zen_bs == Catch::Approx(std::acos(-8.5 / geom.d3d_m)));
    CHECK(geom.zen_user == Catch::Approx(std::acos(8.5 / geom.d3d_m)));
    CHECK(geom.los_state);
}

TEST_CASE("coincident endpoints are rejected", "[channel]")
{
    SystemConfig sys = umi_system();
    sys.user_positions[0] = sys.bs_positions[0];
    ChannelConfig channel;
    Stream stream(1);
    CHECK_THROWS(compute_geometry(sys, channel, 0, 0, stream));
    CHECK_THROWS(compute_geometry(sys, channel, 1, 0, stream));
}

TEST_CASE("los probability follows the scenario models", "[channel]")
{
    CHECK(los_probability("indoor-office", 4.0) == 1.0);
    CHECK(los_probability("indoor-office", 20.0) == Catch::Approx(std::exp(-15.0 / 70.8)));
    CHECK(los_probability("indoor-office", 60.0) ==
          Catch::Approx(0.54 * std::exp(-11.0 / 211.7)));
    CHECK(los_probability("umi", 10.0) == 1.0);
    CHECK(los_probability("umi", 50.0) ==
          Catch::Approx(18.0 / 50.0 + std::exp(-50.0 / 36.0) * (1.0 - 18.0 / 50.0)));
    CHECK_THROWS(los_probability("mars-canyon", 10.0));
}

TEST_CASE("pathloss matches the table forms", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    sys.scenario = "indoor-office";
    LinkGeometry geom = los_geometry(sys);

    double fc = 2.565;
    double expect = 32.4 + 17.3 * std::log10(geom.d3d_m) + 20.0 * std::log10(fc);
    CHECK(pathloss_db(rows, "indoor-office", true, geom, fc) == Catch::Approx(expect));

    // The NLOS value is floored by the LOS formula.
    double nlos = pathloss_db(rows, "indoor-office", false, geom, fc);
    CHECK(nlos >= expect);
    double nlos_formula = 38.3 * std::log10(geom.d3d_m) + 17.30 + 24.9 * std::log10(fc);
    CHECK(nlos == Catch::Approx(std::max(nlos_formula, expect)));
}

TEST_CASE("consistency interpolation is exact at corners and unit variance inside",
          "[channel]")
{
    double d = 8.0;
    CHECK(interpolate_consistency(1.5, -2.0, 3.0, 0.5, 0.0, 0.0, d) == Catch::Approx(1.5));
    CHECK(interpolate_consistency(1.5, -2.0, 3.0, 0.5, d, 0.0, d) == Catch::Approx(-2.0));
    CHECK(interpolate_consistency(1.5, -2.0, 3.0, 0.5, 0.0, d, d) == Catch::Approx(3.0));
    CHECK(interpolate_consistency(1.5, -2.0, 3.0, 0.5, d, d, d) == Catch::Approx(0.5));
    CHECK_THROWS(interpolate_consistency(0, 0, 0, 0, -0.1, 0, d));
    CHECK_THROWS(interpolate_consistency(0, 0, 0, 0, 0, d + 0.1, d));

    Stream rng(5);
    const int trials = 20000;
    double sum2 = 0.0;
    for (int t = 0; t < trials; ++t)
    {
        double y = interpolate_consistency(rng.normal(0, 1), rng.normal(0, 1),
                                           rng.normal(0, 1), rng.normal(0, 1),
                                           rng.uniform(0, d), rng.uniform(0, d), d);
        sum2 += y * y;
    }
    CHECK(sum2 / trials == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("correlated fields have unit variance and the right autocorrelation",
          "[channel]")
{
    auto rows = shipped_tables();
    const ScenarioTable &table = scenario_lookup(rows, "indoor-office", true);
    arma::mat eye = arma::eye(7, 7);
    Stream stream(42);
    CorrelatedFieldGrid grid =
        generate_lsp_fields(table, {0.0, 0.0}, {200.0, 200.0}, eye, stream);

    const arma::mat &ds = grid.field[CorrelatedFieldGrid::p_ds];
    REQUIRE(ds.n_elem > 10000);
    CHECK(arma::mean(arma::vectorise(ds)) == Catch::Approx(0.0).margin(0.06));
    CHECK(arma::var(arma::vectorise(ds)) == Catch::Approx(1.0).margin(0.06));

    // Empirical autocorrelation at lag d_corr along the first axis.
    arma::uword lag = static_cast<arma::uword>(std::round(table.dcorr_ds / grid.spacing_m));
    arma::vec a = arma::vectorise(ds.rows(0, ds.n_rows - 1 - lag));
    arma::vec b = arma::vectorise(ds.rows(lag, ds.n_rows - 1));
    double corr = arma::as_scalar(arma::cor(a, b));
    CHECK(corr == Catch::Approx(std::exp(-1.0)).margin(0.05));
}

TEST_CASE("cross-parameter correlation follows the configured matrix", "[channel]")
{
    auto rows = shipped_tables();
    const ScenarioTable &table = scenario_lookup(rows, "indoor-office", true);
    arma::mat xcorr = arma::eye(7, 7);
    xcorr(CorrelatedFieldGrid::p_ds, CorrelatedFieldGrid::p_asa) = 0.5;
    xcorr(CorrelatedFieldGrid::p_asa, CorrelatedFieldGrid::p_ds) = 0.5;

    Stream stream(43);
    CorrelatedFieldGrid grid =
        generate_lsp_fields(table, {0.0, 0.0}, {150.0, 150.0}, xcorr, stream);
    arma::vec ds = arma::vectorise(grid.field[CorrelatedFieldGrid::p_ds]);
    arma::vec asa = arma::vectorise(grid.field[CorrelatedFieldGrid::p_asa]);
    CHECK(arma::as_scalar(arma::cor(ds, asa)) == Catch::Approx(0.5).margin(0.07));

    arma::mat bad = arma::ones(7, 7);
    bad.diag().fill(0.5);
    Stream stream2(44);
    CHECK_THROWS(generate_lsp_fields(table, {0.0, 0.0}, {10.0, 10.0}, bad, stream2));
}

TEST_CASE("zero field values map to the configured medians", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    sys.scenario = "indoor-office";
    LinkGeometry geom = los_geometry(sys);
    double fc = 26.0;

    CorrelatedFieldGrid fields;
    fields.spacing_m = 1.0;
    fields.origin = {0.0, 0.0};
    fields.field.assign(7, arma::mat(64, 64, arma::fill::zeros));

    LargeScaleParams lsp = draw_lsp(fields, {31.0, 20.0}, rows, "indoor-office", geom, fc);
    const ScenarioTable &t = scenario_lookup(rows, "indoor-office", true);
    CHECK(lsp.sf_db == Catch::Approx(0.0).margin(1e-12));
    CHECK(lsp.kf_db == Catch::Approx(t.kf_db.mu(fc)));
    CHECK(lsp.ds_s == Catch::Approx(std::pow(10.0, t.lg_ds.mu(fc))));
    CHECK(lsp.asa_deg == Catch::Approx(std::min(std::pow(10.0, t.lg_asa.mu(fc)), 104.0)));
    CHECK(lsp.pathloss_db ==
          Catch::Approx(pathloss_db(rows, "indoor-office", true, geom, fc)));

    CHECK_THROWS(draw_lsp(fields, {200.0, 20.0}, rows, "indoor-office", geom, fc));
}

TEST_CASE("nearby positions give nearly identical large-scale parameters", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    sys.scenario = "indoor-office";
    LinkGeometry geom = los_geometry(sys);
    const ScenarioTable &t = scenario_lookup(rows, "indoor-office", true);

    Stream stream(7);
    CorrelatedFieldGrid grid =
        generate_lsp_fields(t, {0.0, 0.0}, {50.0, 50.0}, arma::eye(7, 7), stream);
    LargeScaleParams a = draw_lsp(grid, {20.0, 20.0}, rows, "indoor-office", geom, 26.0);
    LargeScaleParams b =
        draw_lsp(grid, {20.001, 20.0}, rows, "indoor-office", geom, 26.0);
    CHECK(a.ds_s == Catch::Approx(b.ds_s).epsilon(1e-2));
    CHECK(a.asa_deg == Catch::Approx(b.asa_deg).epsilon(1e-2));
}

TEST_CASE("path powers sum to one and the LOS path arrives first", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    LinkGeometry geom = los_geometry(sys);
    const ScenarioTable &t = scenario_lookup(rows, "umi", true);

    Stream stream(9);
    LargeScaleParams lsp = draw_lsp(stream, arma::eye(7, 7), rows, "umi", geom, 26.0);
    PathSet set = generate_small_scale(lsp, geom, t, 1, ChannelConfig::ToaType::absolute,
                                       false, 5.0, speed_of_light / 26e9, stream);

    double total = 0.0;
    double min_delay = 1e9;
    for (const Path &p : set.paths)
    {
        total += p.power_lin;
        min_delay = std::min(min_delay, p.delay_s);
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(set.paths[0].is_los);
    CHECK(set.paths[0].delay_s == Catch::Approx(geom.d3d_m / speed_of_light));
    CHECK(set.paths[0].delay_s <= min_delay + 1e-18);

    // First cluster is aligned with the LOS direction in LOS state.
    CHECK(set.paths[1].bs_az == Catch::Approx(geom.az_bs).margin(1e-9));
    CHECK(set.paths[1].user_az == Catch::Approx(geom.az_user).margin(1e-9));
}

TEST_CASE("an extreme Ricean factor collapses the scattered power", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    LinkGeometry geom = los_geometry(sys);
    const ScenarioTable &t = scenario_lookup(rows, "umi", true);

    Stream stream(10);
    LargeScaleParams lsp = draw_lsp(stream, arma::eye(7, 7), rows, "umi", geom, 26.0);
    lsp.kf_db = 300.0;
    PathSet set = generate_small_scale(lsp, geom, t, 1, ChannelConfig::ToaType::relative,
                                       false, 5.0, speed_of_light / 26e9, stream);
    CHECK(set.paths[0].is_los);
    CHECK(set.paths[0].power_lin == Catch::Approx(1.0).margin(1e-12));
    for (std::size_t i = 1; i < set.paths.size(); ++i)
        CHECK(set.paths[i].power_lin < 1e-20);
}

TEST_CASE("generated ensembles reproduce the input delay and angle spreads", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    sys.scenario = "indoor-office";
    ChannelConfig channel;
    channel.los_mode = ChannelConfig::LosMode::forced_nlos;
    Stream gstream(1);
    LinkGeometry geom = compute_geometry(sys, channel, 0, 0, gstream);
    const ScenarioTable &t = scenario_lookup(rows, "indoor-office", false);

    LargeScaleParams lsp;
    lsp.ds_s = 60e-9;
    lsp.asa_deg = 45.0;
    lsp.asd_deg = 40.0;
    lsp.esa_deg = 12.0;
    lsp.esd_deg = 10.0;

    Stream root(77);
    const int drops = 400;
    double ds_sum = 0.0, asa_sum = 0.0;
    for (int d = 0; d < drops; ++d)
    {
        Stream s = root.derive({static_cast<std::uint64_t>(d)});
        PathSet set = generate_small_scale(lsp, geom, t, 1, ChannelConfig::ToaType::relative,
                                           false, 5.0, speed_of_light / 26e9, s);
        ds_sum += rms_delay_spread(set) / lsp.ds_s;
        asa_sum += rms_azimuth_spread_deg(set, true) / lsp.asa_deg;
    }
    CHECK(ds_sum / drops == Catch::Approx(1.0).margin(0.15));
    CHECK(asa_sum / drops == Catch::Approx(1.0).margin(0.15));
}

TEST_CASE("the ground reflection arrives later and weaker than the LOS path", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    LinkGeometry geom = los_geometry(sys);
    const ScenarioTable &t = scenario_lookup(rows, "umi", true);

    Stream stream(12);
    LargeScaleParams lsp = draw_lsp(stream, arma::eye(7, 7), rows, "umi", geom, 26.0);
    PathSet set = generate_small_scale(lsp, geom, t, 1, ChannelConfig::ToaType::absolute,
                                       true, 5.0, speed_of_light / 26e9, stream);

    const Path *gr = nullptr;
    for (const Path &p : set.paths)
        if (p.is_ground_reflection)
            gr = &p;
    REQUIRE(gr != nullptr);
    CHECK(gr->delay_s >= set.paths[0].delay_s);
    CHECK(gr->delay_s == Catch::Approx(geom.ground_distance_m / speed_of_light));
    CHECK(gr->power_lin < set.paths[0].power_lin);
    CHECK(gr->bs_zen > pi / 2.0); // points below the horizon
}

TEST_CASE("unsupported ray counts per cluster are rejected", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    LinkGeometry geom = los_geometry(sys);
    const ScenarioTable &t = scenario_lookup(rows, "umi", true);
    Stream stream(13);
    LargeScaleParams lsp = draw_lsp(stream, arma::eye(7, 7), rows, "umi", geom, 26.0);
    CHECK_THROWS(generate_small_scale(lsp, geom, t, 5, ChannelConfig::ToaType::relative,
                                      false, 5.0, speed_of_light / 26e9, stream));

    PathSet rays = generate_small_scale(lsp, geom, t, 20, ChannelConfig::ToaType::relative,
                                        false, 5.0, speed_of_light / 26e9, stream);
    CHECK(rays.paths.size() == 1 + 20 * t.cluster_count);
    double total = 0.0;
    for (const Path &p : rays.paths)
        total += p.power_lin;
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("los-only coefficients carry the pathloss amplitude", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    LinkGeometry geom = los_geometry(sys);
    const ScenarioTable &t = scenario_lookup(rows, "umi", true);

    Stream stream(14);
    LargeScaleParams lsp = draw_lsp(stream, arma::eye(7, 7), rows, "umi", geom, 26.0);
    lsp.sf_db = 0.0;
    PathSet set = generate_small_scale(lsp, geom, t, 1, ChannelConfig::ToaType::absolute,
                                       false, 5.0, sys.wavelength_m, stream);
    set.sf_db = 0.0;

    ChannelConfig channel;
    generate_coefficients(set, sys, 0, 0, channel, ChannelConfig::CoefMode::los_only, stream);
    REQUIRE(set.paths.size() == 1);
    CHECK(set.paths[0].is_los);
    CHECK(std::abs(set.paths[0].coef(0, 0)) ==
          Catch::Approx(db2mag(-lsp.pathloss_db)).epsilon(1e-12));
}

TEST_CASE("los-only mode requires a LOS path", "[channel]")
{
    auto rows = shipped_tables();
    SystemConfig sys = umi_system();
    ChannelConfig channel;
    channel.los_mode = ChannelConfig::LosMode::forced_nlos;
    Stream stream(15);
    LinkGeometry geom = compute_geometry(sys, channel, 0, 0, stream);
    const ScenarioTable &t = scenario_lookup(rows, "umi", false);
    LargeScaleParams lsp = draw_lsp(stream, arma::eye(7, 7), rows, "umi", geom, 26.0);
    PathSet set = generate_small_scale(lsp, geom, t, 1, ChannelConfig::ToaType::absolute,
                                       false, 5.0, sys.wavelength_m, stream);
    CHECK_THROWS(
        generate_coefficients(set, sys, 0, 0, channel, ChannelConfig::CoefMode::los_only,
                              stream));
}

TEST_CASE("array phases follow the steering geometry", "[channel]")
{
    SystemConfig sys = umi_system();
    sys.bs_array.rows = 1;
    sys.bs_array.cols = 2; // two elements along y, lambda/2 spacing

    PathSet set;
    Path p;
    p.power_lin = 1.0;
    p.bs_az = 0.35;
    p.bs_zen = pi / 2.0;
    p.user_az = 0.0;
    p.user_zen = pi / 2.0;
    p.is_los = true;
    set.paths.push_back(p);

    ChannelConfig channel;
    Stream stream(16);
    generate_coefficients(set, sys, 0, 0, channel, ChannelConfig::CoefMode::static_drop,
                          stream);
    const arma::cx_mat &coef = set.paths[0].coef;
    REQUIRE(coef.n_rows == 2);
    double phase = std::arg(coef(1, 0) * std::conj(coef(0, 0)));
    CHECK(phase == Catch::Approx(wrap_pi(-pi * std::sin(0.35))).margin(1e-12));
}

TEST_CASE("doppler is zero when static and follows the velocity when dynamic", "[channel]")
{
    SystemConfig sys = umi_system();
    PathSet set;
    Path p;
    p.power_lin = 1.0;
    p.user_az = 0.0;
    p.user_zen = pi / 2.0;
    p.is_los = true;
    set.paths.push_back(p);

    ChannelConfig channel;
    channel.user_velocity_mps = {10.0, 0.0, 0.0};
    Stream stream(17);
    PathSet s1 = set;
    generate_coefficients(s1, sys, 0, 0, channel, ChannelConfig::CoefMode::static_drop,
                          stream);
    CHECK(s1.paths[0].doppler_hz == 0.0);

    PathSet s2 = set;
    generate_coefficients(s2, sys, 0, 0, channel, ChannelConfig::CoefMode::dynamic, stream);
    CHECK(s2.paths[0].doppler_hz == Catch::Approx(10.0 / sys.wavelength_m));
}

TEST_CASE("single-path responses match the inverse transform oracle", "[channel]")
{
    arma::uword k_fft = 64;
    double df = 30e3;
    arma::vec bins(k_fft);
    for (arma::uword k = 0; k < k_fft; ++k)
        bins[k] = k < k_fft / 2 ? static_cast<double>(k)
                                : static_cast<double>(k) - static_cast<double>(k_fft);

    SECTION("zero delay gives a constant response")
    {
        arma::cx_vec cfr = path_cfr(0.0, 0.7, bins, df);
        CHECK(arma::abs(cfr - cxd(0.7, 0.0)).max() < 1e-15);
    }

    SECTION("sample-aligned delay gives a single tap")
    {
        arma::uword m0 = 5;
        double tau = static_cast<double>(m0) / (static_cast<double>(k_fft) * df);
        arma::cx_vec taps = arma::ifft(path_cfr(tau, 1.0, bins, df));
        CHECK(std::abs(taps[m0] - 1.0) < 1e-9);
        taps[m0] = 0.0;
        CHECK(arma::abs(taps).max() < 1e-9);
    }

    SECTION("fractional delay disperses energy around the true position")
    {
        double tau = 5.5 / (static_cast<double>(k_fft) * df);
        arma::cx_vec taps = arma::ifft(path_cfr(tau, 1.0, bins, df));
        arma::vec mag = arma::abs(taps);
        arma::uword peak = mag.index_max();
        CHECK((peak == 5 || peak == 6));
        CHECK(mag[5] == Catch::Approx(mag[6]).epsilon(1e-9));
        CHECK(mag[5] < 1.0);
        CHECK(arma::accu(arma::square(mag)) == Catch::Approx(1.0).margin(1e-12));
    }
}

namespace
{

CarrierConfig test_carrier()
{
    CarrierConfig c;
    c.subcarrier_spacing_hz = 30e3;
    c.fft_length = 256;
    c.grid_length_rb = 16;
    c.sample_rate_hz = c.subcarrier_spacing_hz * static_cast<double>(c.fft_length);
    return c;
}

ResourceGrid test_grid(Stream &rng)
{
    CarrierConfig carrier = test_carrier();
    SignalConfig signal;
    signal.type = SignalConfig::Type::prs;
    signal.comb = 2;
    signal.start_symbol = 0;
    signal.num_symbols = 12;
    ResourceGrid grid = generate_signal_grid(signal, carrier);
    for (arma::uword s = 0; s < grid.n_symbols(); ++s)
        for (arma::uword k = 0; k < grid.n_subcarriers(); ++k)
            if (grid.occupied(k, s, 0))
                grid.symbols(k, s, 0) *= std::polar(1.0, rng.uniform(-pi, pi));
    return grid;
}

PathSet unit_pathset(double delay_s = 0.0)
{
    PathSet set;
    Path p;
    p.delay_s = delay_s;
    p.power_lin = 1.0;
    p.is_los = true;
    p.coef = arma::cx_mat(1, 1, arma::fill::ones);
    set.paths.push_back(p);
    return set;
}

} // namespace

TEST_CASE("a unit path is the identity channel", "[channel]")
{
    CarrierConfig carrier = test_carrier();
    Stream rng(21);
    ResourceGrid tx = test_grid(rng);

    ResourceGrid rx = apply_channel_grid(tx, unit_pathset(), carrier);
    CHECK(arma::abs(arma::vectorise(rx.symbols.slice(0) - tx.symbols.slice(0))).max() <
          1e-12);

    BasebandWaveform wf = ofdm_modulate(tx, carrier);
    BasebandWaveform rx_wf = apply_channel(wf, unit_pathset(), carrier);
    CHECK(arma::abs(arma::vectorise(rx_wf.samples - wf.samples)).max() < 1e-12);
}

TEST_CASE("an empty pathset yields zero output", "[channel]")
{
    CarrierConfig carrier = test_carrier();
    Stream rng(22);
    ResourceGrid tx = test_grid(rng);
    PathSet empty;
    ResourceGrid rx = apply_channel_grid(tx, empty, carrier);
    CHECK(arma::abs(arma::vectorise(rx.symbols)).max() == 0.0);
}

TEST_CASE("two equal paths produce the expected frequency nulls", "[channel]")
{
    CarrierConfig carrier = test_carrier();
    Stream rng(23);
    ResourceGrid tx = test_grid(rng);

    // Null at centered subcarrier 16: 2 pi df tau k = pi there.
    double tau = 1.0 / (2.0 * carrier.subcarrier_spacing_hz * 16.0);
    PathSet set = unit_pathset(0.0);
    Path second = set.paths[0];
    second.delay_s = tau;
    set.paths.push_back(second);

    ResourceGrid rx = apply_channel_grid(tx, set, carrier);
    arma::vec k_idx = active_subcarrier_indices(tx, carrier);
    for (arma::uword k = 0; k < tx.n_subcarriers(); ++k)
    {
        if (!tx.occupied(k, 0, 0))
            continue;
        double expect = std::abs(1.0 + std::polar(1.0, -2.0 * pi *
                                                           carrier.subcarrier_spacing_hz *
                                                           tau * k_idx[k]));
        CHECK(std::abs(rx.symbols(k, 0, 0)) ==
              Catch::Approx(expect).margin(1e-10));
        if (std::abs(k_idx[k]) == 16.0)
            CHECK(std::abs(rx.symbols(k, 0, 0)) < 1e-10);
    }
}

TEST_CASE("grid and waveform channel application agree", "[channel]")
{
    CarrierConfig carrier = test_carrier();
    Stream rng(24);
    ResourceGrid tx = test_grid(rng);

    PathSet set;
    for (int i = 0; i < 3; ++i)
    {
        Path p;
        p.delay_s = rng.uniform(0.0, 0.3e-6);
        p.power_lin = 1.0 / 3.0;
        p.coef = arma::cx_mat(2, 1);
        p.coef(0, 0) = std::polar(rng.uniform(0.1, 1.0), rng.uniform(-pi, pi));
        p.coef(1, 0) = std::polar(rng.uniform(0.1, 1.0), rng.uniform(-pi, pi));
        set.paths.push_back(p);
    }

    ResourceGrid rx_grid = apply_channel_grid(tx, set, carrier);
    BasebandWaveform rx_wf = apply_channel(ofdm_modulate(tx, carrier), set, carrier);
    ResourceGrid rx_demod = ofdm_demodulate(rx_wf, carrier);

    double worst = 0.0;
    for (arma::uword r = 0; r < 2; ++r)
        for (arma::uword s = 0; s < tx.n_symbols(); ++s)
            for (arma::uword k = 0; k < tx.n_subcarriers(); ++k)
                if (tx.occupied(k, s, 0))
                    worst = std::max(worst, std::abs(rx_demod.symbols(k, s, r) -
                                                     rx_grid.symbols(k, s, r)));
    CHECK(worst < 1e-10);
}

TEST_CASE("channel application matches a time-domain convolution oracle", "[channel]")
{
    CarrierConfig carrier = test_carrier();
    Stream rng(25);
    ResourceGrid tx = test_grid(rng);
    BasebandWaveform wf = ofdm_modulate(tx, carrier);

    // Two sample-aligned delays within the CP.
    arma::uvec delays = {0, 5};
    arma::cx_vec gains = {cxd(0.8, -0.3), cxd(-0.2, 0.45)};
    PathSet set;
    for (arma::uword i = 0; i < delays.n_elem; ++i)
    {
        Path p;
        p.delay_s = static_cast<double>(delays[i]) / carrier.sample_rate_hz;
        p.power_lin = 0.5;
        p.coef = arma::cx_mat(1, 1);
        p.coef(0, 0) = gains[i];
        set.paths.push_back(p);
    }

    arma::cx_vec oracle(wf.samples.n_rows, arma::fill::zeros);
    for (arma::uword i = 0; i < delays.n_elem; ++i)
        for (arma::uword n = delays[i]; n < wf.samples.n_rows; ++n)
            oracle[n] += gains[i] * wf.samples(n - delays[i], 0);

    BasebandWaveform oracle_wf = wf;
    oracle_wf.samples.col(0) = oracle;
    ResourceGrid from_oracle = ofdm_demodulate(oracle_wf, carrier);
    ResourceGrid from_grid = apply_channel_grid(tx, set, carrier);

    double worst = 0.0;
    for (arma::uword s = 0; s < tx.n_symbols(); ++s)
        for (arma::uword k = 0; k < tx.n_subcarriers(); ++k)
            if (tx.occupied(k, s, 0))
                worst = std::max(worst, std::abs(from_oracle.symbols(k, s, 0) -
                                                 from_grid.symbols(k, s, 0)));
    CHECK(worst < 1e-9);
}

TEST_CASE("delays beyond the cyclic prefix raise the flag", "[channel]")
{
    CarrierConfig carrier = test_carrier();
    double cp_s = static_cast<double>(carrier.cp_length()) / carrier.sample_rate_hz;
    CHECK_FALSE(delays_exceed_cp(unit_pathset(0.5 * cp_s), carrier));
    CHECK(delays_exceed_cp(unit_pathset(2.0 * cp_s), carrier));
}

TEST_CASE("awgn has the requested variance and power accounting works", "[channel]")
{
    CarrierConfig carrier = test_carrier();
    Stream rng(26);
    ResourceGrid tx = test_grid(rng);
    ResourceGrid rx = apply_channel_grid(tx, unit_pathset(), carrier);

    CHECK(mean_occupied_power(rx, tx.occupied) == Catch::Approx(1.0).margin(1e-12));

    ResourceGrid noisy = rx;
    double sigma2 = 0.25;
    Stream noise_rng(27);
    add_awgn(noisy, sigma2, noise_rng);
    arma::cx_vec diff = arma::vectorise(noisy.symbols - rx.symbols);
    double measured = arma::accu(arma::square(arma::abs(diff))) /
                      static_cast<double>(diff.n_elem);
    CHECK(measured == Catch::Approx(sigma2).epsilon(0.05));
}

TEST_CASE("pathset export writes one line per path", "[channel]")
{
    PathSet set = unit_pathset();
    Path p2 = set.paths[0];
    p2.is_los = false;
    p2.delay_s = 1e-7;
    set.paths.push_back(p2);

    std::ostringstream out;
    append_pathset(out, 3, 1, set);
    std::istringstream in(out.str());
    std::string line;
    int lines = 0;
    while (std::getline(in, line))
    {
        ++lines;
        std::istringstream fields(line);
        std::string field;
        int n_fields = 0;
        while (fields >> field)
            ++n_fields;
        CHECK(n_fields == 11);
    }
    CHECK(lines == 2);
}
