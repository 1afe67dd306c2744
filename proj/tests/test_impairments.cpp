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

#include "posim/impairments.hpp"
#include <catch2/catch_amalgamated.hpp>
#include <fstream>

using namespace posim;

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

// Multipath link with a 4-element BS receive row, coefficients filled.
PathSet bs_array_pathset(SystemConfig &sys)
{
    sys.bandwidth_hz = 100e6;
    sys.center_frequency_hz = 26e9;
    sys.wavelength_m = speed_of_light / sys.center_frequency_hz;
    sys.scenario = "umi";
    sys.bs_positions = {arma::vec3{0.0, 0.0, 10.0}};
    sys.user_positions = {arma::vec3{-30.0, 0.0, 1.5}};
    sys.bs_orientation_rad = {pi};
    sys.user_orientation_rad = {0.0};
    sys.bs_array.rows = 1;
    sys.bs_array.cols = 4;
    sys.user_array.rows = 1;
    sys.user_array.cols = 1;

    auto rows = load_scenario_tables("data/scenario_tables.tsv");
    ChannelConfig channel;
    channel.los_mode = ChannelConfig::LosMode::forced_los;
    Stream stream(42);
    LinkGeometry geom = compute_geometry(sys, channel, 0, 0, stream);
    const ScenarioTable &t = scenario_lookup(rows, "umi", true);
    LargeScaleParams lsp = draw_lsp(stream, arma::eye(7, 7), rows, "umi", geom, 26.0);
    PathSet set = generate_small_scale(lsp, geom, t, 1, ChannelConfig::ToaType::relative,
                                       false, 5.0, sys.wavelength_m, stream);
    generate_coefficients(set, sys, 0, 0, channel, ChannelConfig::CoefMode::static_drop,
                          stream);
    return set;
}

// Table of a single constant phase per antenna over a hull that covers every
// angle and the given subcarrier span.
ApoTable constant_table(arma::uword n_antennas, const arma::vec &phases,
                        const arma::vec &subcarrier_indices)
{
    ApoTable table;
    table.subcarrier_axis = {subcarrier_indices.min() - 1.0, subcarrier_indices.max() + 1.0};
    table.az_axis_deg = {-180.0, 180.0};
    table.el_axis_deg = {0.0, 180.0};
    for (arma::uword l = 0; l < n_antennas; ++l)
    {
        arma::cube c(2, 2, 2);
        c.fill(phases[l]);
        table.phase_rad.push_back(c);
    }
    return table;
}

// Plain composite CFR, same operation order as apply_apo with a unit table.
arma::cx_mat reference_cfr(const PathSet &set, const arma::vec &idx, double df)
{
    arma::uword n_rx = set.paths[0].coef.n_rows;
    arma::cx_mat ref(n_rx, idx.n_elem, arma::fill::zeros);
    for (const Path &p : set.paths)
    {
        arma::cx_vec f = path_cfr(p.delay_s, 1.0, idx, df);
        for (arma::uword l = 0; l < n_rx; ++l)
            for (arma::uword j = 0; j < idx.n_elem; ++j)
                ref(l, j) += f[j] * p.coef(l, 0);
    }
    return ref;
}

BasebandWaveform noise_waveform(arma::uword n, arma::uword ports, Stream &stream)
{
    BasebandWaveform w;
    w.samples.set_size(n, ports);
    for (arma::uword p = 0; p < ports; ++p)
        w.samples.col(p) = stream.cnormal_vec(n);
    w.sample_rate_hz = 7.68e6;
    w.fft_length = 256;
    w.cp_length = 18;
    w.symbol_start = arma::uvec{0};
    return w;
}

// Averaged-periodogram estimate of the two-sided PSD with a Hann window and
// half-segment overlap.
arma::vec welch_psd(const arma::vec &x, arma::uword seg, double fs)
{
    arma::vec w(seg);
    for (arma::uword i = 0; i < seg; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * pi * static_cast<double>(i) /
                                     static_cast<double>(seg - 1)));
    double u = arma::accu(arma::square(w));
    arma::vec acc(seg, arma::fill::zeros);
    arma::uword count = 0;
    for (arma::uword start = 0; start + seg <= x.n_elem; start += seg / 2)
    {
        arma::cx_vec spec = arma::fft(arma::cx_vec(w % x.rows(start, start + seg - 1),
                                                   arma::vec(seg, arma::fill::zeros)));
        acc += arma::square(arma::abs(spec));
        ++count;
    }
    return acc / (static_cast<double>(count) * fs * u);
}

} // namespace

TEST_CASE("zero apo table reproduces the plain path composition exactly", "[impairments]")
{
    SystemConfig sys;
    PathSet set = bs_array_pathset(sys);
    CarrierConfig carrier = test_carrier();
    arma::vec idx = arma::regspace(-96.0, 95.0);

    ApoTable table = constant_table(4, arma::vec(4, arma::fill::zeros), idx);
    Cfr cfr = apply_apo(set, table, idx, carrier.subcarrier_spacing_hz,
                        SystemConfig::Direction::uplink);
    arma::cx_mat ref = reference_cfr(set, idx, carrier.subcarrier_spacing_hz);

    REQUIRE(cfr.values.n_rows == 4);
    bool identical = true;
    for (arma::uword l = 0; l < ref.n_rows; ++l)
        for (arma::uword j = 0; j < ref.n_cols; ++j)
            identical = identical && cfr.values(l, j) == ref(l, j);
    CHECK(identical);
}

TEST_CASE("constant phase offset rotates a single antenna", "[impairments]")
{
    SystemConfig sys;
    PathSet set = bs_array_pathset(sys);
    CarrierConfig carrier = test_carrier();
    arma::vec idx = arma::regspace(-96.0, 95.0);

    arma::vec phases(4, arma::fill::zeros);
    phases[2] = 0.3;
    ApoTable table = constant_table(4, phases, idx);
    Cfr cfr = apply_apo(set, table, idx, carrier.subcarrier_spacing_hz,
                        SystemConfig::Direction::uplink);
    arma::cx_mat ref = reference_cfr(set, idx, carrier.subcarrier_spacing_hz);

    cxd rot = std::polar(1.0, 0.3);
    for (arma::uword j = 0; j < idx.n_elem; ++j)
    {
        CHECK(std::abs(cfr.values(0, j) - ref(0, j)) < 1e-15);
        CHECK(std::abs(cfr.values(2, j) - rot * ref(2, j)) < 1e-12);
    }
}

TEST_CASE("apo interpolation matches hand-computed trilinear weights", "[impairments]")
{
    ApoTable table;
    table.subcarrier_axis = {0.0, 1.0};
    table.az_axis_deg = {0.0, 1.0};
    table.el_axis_deg = {0.0, 1.0};
    arma::cube c(2, 2, 2);
    for (arma::uword k = 0; k < 2; ++k)
        for (arma::uword a = 0; a < 2; ++a)
            for (arma::uword e = 0; e < 2; ++e)
                c(k, a, e) = static_cast<double>(k) + 2.0 * static_cast<double>(a) +
                             4.0 * static_cast<double>(e) + 0.1;
    table.phase_rad.push_back(c);

    double wk = 0.25, wa = 0.5, we = 0.75;
    double expect = 0.0;
    for (arma::uword k = 0; k < 2; ++k)
        for (arma::uword a = 0; a < 2; ++a)
            for (arma::uword e = 0; e < 2; ++e)
                expect += (k ? wk : 1.0 - wk) * (a ? wa : 1.0 - wa) * (e ? we : 1.0 - we) *
                          c(k, a, e);
    CHECK(table.interpolate(0, wk, wa, we) == Catch::Approx(expect).epsilon(1e-14));
    CHECK(table.interpolate(0, 1.0, 1.0, 1.0) == Catch::Approx(c(1, 1, 1)));
    CHECK(table.interpolate(0, 0.0, 0.0, 0.0) == Catch::Approx(c(0, 0, 0)));

    CHECK(!table.covers(1.5, 0.5, 0.5));
    CHECK(!table.covers(0.5, -0.5, 0.5));
    CHECK_THROWS_WITH(table.interpolate(0, 0.5, 0.5, 2.0),
                      Catch::Matchers::ContainsSubstring("extrapolation refused"));
}

TEST_CASE("apo tables round-trip through the file format", "[impairments]")
{
    ApoTable table = synthesize_apo_table(3, arma::regspace(-50.0, 49.0), 0.25, 3, 7);
    std::string path = "/tmp/posim_test_apo.tsv";
    save_apo_table(path, table);
    ApoTable loaded = load_apo_table(path);

    REQUIRE(loaded.n_antennas() == 3);
    CHECK(arma::approx_equal(loaded.subcarrier_axis, table.subcarrier_axis, "absdiff", 0.0));
    CHECK(arma::approx_equal(loaded.az_axis_deg, table.az_axis_deg, "absdiff", 0.0));
    CHECK(arma::approx_equal(loaded.el_axis_deg, table.el_axis_deg, "absdiff", 0.0));
    bool identical = true;
    for (arma::uword l = 0; l < 3; ++l)
        identical = identical &&
                    arma::approx_equal(loaded.phase_rad[l], table.phase_rad[l], "absdiff", 0.0);
    CHECK(identical);
}

TEST_CASE("apo loader rejects malformed tables", "[impairments]")
{
    {
        std::ofstream out("/tmp/posim_test_apo_badcol.tsv");
        out << "antenna\tsubcarrier\taz_deg\tphase_rad\n0\t0\t0\t0.1\n";
    }
    CHECK_THROWS_WITH(load_apo_table("/tmp/posim_test_apo_badcol.tsv"),
                      Catch::Matchers::ContainsSubstring("el_deg"));

    {
        std::ofstream out("/tmp/posim_test_apo_sparse.tsv");
        out << "antenna\tsubcarrier\taz_deg\tel_deg\tphase_rad\n"
            << "0\t0\t0\t90\t0.1\n"
            << "0\t1\t10\t90\t0.2\n";
    }
    CHECK_THROWS_WITH(load_apo_table("/tmp/posim_test_apo_sparse.tsv"),
                      Catch::Matchers::ContainsSubstring("complete lattice"));

    {
        std::ofstream out("/tmp/posim_test_apo_dup.tsv");
        out << "antenna\tsubcarrier\taz_deg\tel_deg\tphase_rad\n"
            << "0\t0\t0\t90\t0.1\n"
            << "0\t0\t0\t90\t0.2\n";
    }
    CHECK_THROWS_WITH(load_apo_table("/tmp/posim_test_apo_dup.tsv"),
                      Catch::Matchers::ContainsSubstring("duplicate"));
}

TEST_CASE("synthetic apo tables are deterministic and amplitude-bounded", "[impairments]")
{
    arma::vec span = arma::regspace(-100.0, 99.0);
    ApoTable a = synthesize_apo_table(2, span, 0.4, 3, 11);
    ApoTable b = synthesize_apo_table(2, span, 0.4, 3, 11);
    ApoTable c = synthesize_apo_table(2, span, 0.4, 3, 12);

    bool same = true, differs = false;
    double peak = 0.0;
    for (arma::uword l = 0; l < 2; ++l)
    {
        same = same && arma::approx_equal(a.phase_rad[l], b.phase_rad[l], "absdiff", 0.0);
        differs = differs || arma::abs(a.phase_rad[l] - c.phase_rad[l]).max() > 1e-6;
        peak = std::max(peak, arma::abs(a.phase_rad[l]).max());
    }
    CHECK(same);
    CHECK(differs);
    CHECK(peak == Catch::Approx(0.4).epsilon(1e-12));
    CHECK(a.covers(-100.0, -90.0, 0.0));
    CHECK(a.covers(99.0, 90.0, 180.0));
}

TEST_CASE("zero timing offset is the exact identity", "[impairments]")
{
    Stream stream(3);
    Cfr cfr;
    cfr.subcarrier_indices = arma::regspace(-10.0, 9.0);
    cfr.values = arma::cx_mat(2, 20);
    cfr.values.col(0) = stream.cnormal_vec(2);
    for (arma::uword j = 0; j < 20; ++j)
        cfr.values.col(j) = stream.cnormal_vec(2);
    Cfr before = cfr;
    apply_to(cfr, 30e3, arma::vec(2, arma::fill::zeros));
    bool identical = true;
    for (arma::uword l = 0; l < 2; ++l)
        for (arma::uword j = 0; j < 20; ++j)
            identical = identical && cfr.values(l, j) == before.values(l, j);
    CHECK(identical);
}

TEST_CASE("one-sample timing offset shifts the impulse response one tap", "[impairments]")
{
    arma::uword k = 256;
    double df = 30e3, fs = df * static_cast<double>(k);
    Cfr cfr;
    cfr.subcarrier_indices = arma::regspace(-(static_cast<double>(k) / 2.0),
                                            static_cast<double>(k) / 2.0 - 1.0);
    cfr.values = arma::cx_mat(1, k, arma::fill::ones);
    apply_to(cfr, df, arma::vec{5.0 / fs});

    // Inverse-DFT oracle over the full bin set.
    arma::cx_vec cir(k, arma::fill::zeros);
    for (arma::uword n = 0; n < k; ++n)
    {
        cxd acc = 0.0;
        for (arma::uword j = 0; j < k; ++j)
            acc += cfr.values(0, j) *
                   std::polar(1.0, 2.0 * pi * cfr.subcarrier_indices[j] *
                                       static_cast<double>(n) / static_cast<double>(k));
        cir[n] = acc / static_cast<double>(k);
    }
    CHECK(arma::abs(cir).index_max() == 5);
    CHECK(std::abs(cir[5]) == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(cir[4]) < 1e-12);
}

TEST_CASE("timing offsets stay inside the truncation bound", "[impairments]")
{
    ToParams params;
    params.sigma_s = 10e-9;
    params.bound_sigmas = 2.0;
    Stream stream(9);
    arma::vec draws = draw_timing_offsets(2000, params, stream);
    CHECK(arma::abs(draws).max() <= 20e-9);
    double sd = arma::stddev(draws);
    CHECK(sd > 5e-9);
    CHECK(sd < 10e-9);
}

TEST_CASE("timing offset commutes with input scaling", "[impairments]")
{
    Stream stream(5);
    CarrierConfig carrier = test_carrier();
    SignalConfig signal;
    signal.start_symbol = 0;
    signal.num_symbols = 4;
    ResourceGrid a = generate_signal_grid(signal, carrier);
    ResourceGrid b = a;
    b.symbols *= cxd(3.7, -0.2);

    arma::vec offsets{13e-9};
    apply_to(a, carrier, offsets);
    apply_to(b, carrier, offsets);
    double err = arma::abs(b.symbols.slice(0) - cxd(3.7, -0.2) * a.symbols.slice(0)).max();
    CHECK(err < 1e-12);
}

TEST_CASE("weight perturbation quantizes to the phase lattice", "[impairments]")
{
    SteeringErrParams params;
    params.bits = 6;
    Stream stream(7);

    CHECK(perturb_weight(0.0, params, stream) == cxd(1.0, 0.0));
    CHECK(std::arg(perturb_weight(pi, params, stream)) == Catch::Approx(pi));

    params.bits = 1;
    for (double phase : {0.1, 1.5, 3.0, -2.0, 6.0})
    {
        double q = std::arg(perturb_weight(phase, params, stream));
        CHECK((std::abs(q) < 1e-12 || std::abs(std::abs(q) - pi) < 1e-12));
    }

    params.bits = 4;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i)
    {
        double phase = -10.0 + 0.02 * static_cast<double>(i);
        cxd w = perturb_weight(phase, params, stream);
        worst = std::max(worst, std::abs(wrap_pi(std::arg(w) - phase)));
    }
    CHECK(worst <= pi / 16.0 + 1e-9);

    params.bits = 0;
    CHECK_THROWS(perturb_weight(0.0, params, stream));
}

TEST_CASE("weight perturbation draws respect their sigmas", "[impairments]")
{
    SteeringErrParams params;
    params.bits = 6;
    params.sigma_phase_rad = 0.05;
    params.sigma_amp_db = 0.5;
    params.bound_sigmas = 2.0;
    Stream stream(8);
    double worst_phase = 0.0, worst_amp = 0.0;
    for (int i = 0; i < 500; ++i)
    {
        cxd w = perturb_weight(0.0, params, stream);
        worst_phase = std::max(worst_phase, std::abs(std::arg(w)));
        worst_amp = std::max(worst_amp, std::abs(20.0 * std::log10(std::abs(w))));
    }
    CHECK(worst_phase <= 0.1 + 1e-12);
    CHECK(worst_amp <= 1.0 + 1e-9);
    CHECK(worst_phase > 0.05);
    CHECK(worst_amp > 0.5);
}

TEST_CASE("zero cfo is the exact identity", "[impairments]")
{
    Stream stream(10);
    BasebandWaveform w = noise_waveform(512, 2, stream);
    BasebandWaveform before = w;
    apply_cfo(w, 0.0);
    bool identical = true;
    for (arma::uword n = 0; n < w.samples.n_rows; ++n)
        for (arma::uword p = 0; p < 2; ++p)
            identical = identical && w.samples(n, p) == before.samples(n, p);
    CHECK(identical);
}

TEST_CASE("cfo advances the phase linearly across the burst", "[impairments]")
{
    BasebandWaveform w;
    w.samples = arma::cx_mat(300, 1, arma::fill::ones);
    w.fft_length = 256;
    apply_cfo(w, 0.1);
    for (arma::uword n : {arma::uword(1), arma::uword(37), arma::uword(299)})
        CHECK(std::abs(w.samples(n, 0) -
                       std::polar(1.0, 2.0 * pi * 0.1 * static_cast<double>(n) / 256.0)) <
              1e-14);
}

TEST_CASE("cfo is recovered by the inter-symbol phase slope", "[impairments]")
{
    CarrierConfig carrier = test_carrier();
    SignalConfig signal;
    signal.type = SignalConfig::Type::srs;
    signal.comb = 2;
    signal.start_symbol = 0;
    signal.num_symbols = 12;
    ResourceGrid tx = generate_signal_grid(signal, carrier);

    BasebandWaveform wave = ofdm_modulate(tx, carrier);
    apply_cfo(wave, 0.1);
    ResourceGrid rx = ofdm_demodulate(wave, carrier);

    arma::vec phases(signal.num_symbols);
    for (arma::uword s = 0; s < signal.num_symbols; ++s)
    {
        cxd acc = 0.0;
        for (arma::uword k = 0; k < tx.n_subcarriers(); ++k)
            if (tx.occupied(k, s, 0))
                acc += rx.symbols(k, s, 0) * std::conj(tx.symbols(k, s, 0));
        phases[s] = std::arg(acc);
    }
    double mean_step = 0.0;
    for (arma::uword s = 0; s + 1 < signal.num_symbols; ++s)
        mean_step += wrap_pi(phases[s + 1] - phases[s]);
    mean_step /= static_cast<double>(signal.num_symbols - 1);

    double samples_per_symbol = static_cast<double>(carrier.fft_length + carrier.cp_length());
    double estimate = mean_step * static_cast<double>(carrier.fft_length) /
                      (2.0 * pi * samples_per_symbol);
    CHECK(estimate == Catch::Approx(0.1).margin(1e-3));
}

TEST_CASE("iq imbalance with zero mismatch is the exact identity", "[impairments]")
{
    Stream stream(11);
    BasebandWaveform w = noise_waveform(256, 1, stream);
    BasebandWaveform before = w;
    IqParams params;
    apply_iq(w, params);
    bool identical = true;
    for (arma::uword n = 0; n < w.samples.n_rows; ++n)
        identical = identical && w.samples(n, 0) == before.samples(n, 0);
    CHECK(identical);

    params.filter_i = {1.0, 0.0};
    CHECK_THROWS(apply_iq(w, params));
    params.filter_i.reset();
    params.filter_q.reset();
    CHECK_THROWS(apply_iq(w, params));
}

TEST_CASE("iq imbalance creates a mirror image at the analytic level", "[impairments]")
{
    arma::uword n = 512, bin = 20;
    BasebandWaveform w;
    w.samples.set_size(n, 1);
    for (arma::uword i = 0; i < n; ++i)
        w.samples(i, 0) = std::polar(
            1.0, 2.0 * pi * static_cast<double>(bin) * static_cast<double>(i) /
                     static_cast<double>(n));

    IqParams params;
    params.amplitude_mismatch = 0.1;
    params.phase_mismatch_rad = 0.0;
    apply_iq(w, params);

    arma::cx_vec spec = arma::fft(w.samples.col(0));
    double p_signal = std::norm(spec[bin]);
    double p_image = std::norm(spec[n - bin]);
    double rejection_db = 10.0 * std::log10(p_signal / p_image);

    cxd alpha(std::cos(0.0), 0.1 * std::sin(0.0));
    cxd beta(0.1 * std::cos(0.0), std::sin(0.0));
    double analytic_db = 10.0 * std::log10(std::norm(alpha) / std::norm(beta));
    CHECK(analytic_db == Catch::Approx(20.0));
    CHECK(rejection_db == Catch::Approx(analytic_db).margin(1e-9));
}

TEST_CASE("branch filters shape the image across frequency", "[impairments]")
{
    arma::uword n = 512;
    IqParams params;
    params.filter_i = {0.9, 0.1};
    params.filter_q = {1.0, -0.1};

    for (arma::uword bin : {arma::uword(10), arma::uword(100)})
    {
        BasebandWaveform w;
        w.samples.set_size(n, 1);
        for (arma::uword i = 0; i < n; ++i)
            w.samples(i, 0) = std::polar(
                1.0, 2.0 * pi * static_cast<double>(bin) * static_cast<double>(i) /
                         static_cast<double>(n));
        apply_iq(w, params);
        arma::cx_vec spec = arma::fft(w.samples.col(0));

        double omega = 2.0 * pi * static_cast<double>(bin) / static_cast<double>(n);
        arma::vec gi{0.9, 0.1}, gq{1.0, -0.1};
        cxd mu = 0.0, nu = 0.0;
        for (arma::uword m = 0; m < 2; ++m)
        {
            mu += 0.5 * (gi[m] + gq[m]) * std::polar(1.0, -omega * static_cast<double>(m));
            nu += 0.5 * (gi[m] - gq[m]) * std::polar(1.0, omega * static_cast<double>(m));
        }
        double analytic = std::norm(nu) / std::norm(mu);
        double measured = std::norm(spec[n - bin]) / std::norm(spec[bin]);
        CHECK(measured == Catch::Approx(analytic).epsilon(1e-2));
    }
}

TEST_CASE("flat phase-noise psd reproduces its level", "[impairments]")
{
    PnParams params;
    params.s0_dbc_hz = -80.0;
    double fs = 7.68e6;
    Stream stream(13);
    arma::vec phi = synthesize_pn(params, 1 << 15, fs, stream);
    double expect_var = db2lin(-80.0) * fs;
    CHECK(arma::var(phi) == Catch::Approx(expect_var).epsilon(0.1));
}

TEST_CASE("pole-zero phase-noise psd matches the model over the fit band", "[impairments]")
{
    PnParams params;
    params.s0_dbc_hz = -80.0;
    params.poles_hz = {1e5};
    double fs = 7.68e6;
    arma::uword n = 1 << 17, seg = 8192;
    Stream stream(14);
    arma::vec phi = synthesize_pn(params, n, fs, stream);

    arma::vec psd = welch_psd(phi, seg, fs);
    double worst = 0.0;
    for (arma::uword k = 1; k < seg / 2; ++k)
    {
        double f = fs * static_cast<double>(k) / static_cast<double>(seg);
        if (f < 1e4 || f > 1e6)
            continue;
        double model = db2lin(params.s0_dbc_hz) / (1.0 + (f / 1e5) * (f / 1e5));
        worst = std::max(worst, std::abs(lin2db(psd[k] / model)));
    }
    CHECK(worst < 3.0);
}

TEST_CASE("phase-noise synthesis validates its inputs", "[impairments]")
{
    PnParams params;
    Stream stream(15);
    CHECK_THROWS(synthesize_pn(params, 1, 7.68e6, stream));
    params.poles_hz = {4e6};
    CHECK_THROWS(synthesize_pn(params, 1024, 7.68e6, stream));
    params.poles_hz = {};
    params.zeros_hz = {5e6};
    CHECK_THROWS(synthesize_pn(params, 1024, 7.68e6, stream));

    params.zeros_hz = {};
    Stream s1(16), s2(16);
    arma::vec a = synthesize_pn(params, 1024, 7.68e6, s1);
    arma::vec b = synthesize_pn(params, 1024, 7.68e6, s2);
    CHECK(arma::approx_equal(a, b, "absdiff", 0.0));
}

TEST_CASE("zero phase trajectory is the exact identity", "[impairments]")
{
    Stream stream(17);
    BasebandWaveform w = noise_waveform(128, 2, stream);
    BasebandWaveform before = w;
    apply_pn(w, arma::vec(128, arma::fill::zeros));
    bool identical = true;
    for (arma::uword n = 0; n < 128; ++n)
        for (arma::uword p = 0; p < 2; ++p)
            identical = identical && w.samples(n, p) == before.samples(n, p);
    CHECK(identical);
    CHECK_THROWS(apply_pn(w, arma::vec(64, arma::fill::zeros)));
}

TEST_CASE("amplifier conversion honors its small-signal and saturation limits",
          "[impairments]")
{
    PanParams params;
    params.small_signal_gain = 16.0;
    params.a_sat = 1.9;
    params.smoothness = 1.1;

    double r = 1e-5;
    CHECK(pan_am_am(r, params) / r == Catch::Approx(16.0).epsilon(0.01));
    CHECK(pan_am_am(1e6, params) == Catch::Approx(1.9).epsilon(0.01));

    double last = 0.0;
    bool monotone = true;
    for (double x = 0.0; x < 2.0; x += 0.01)
    {
        double y = pan_am_am(x, params);
        monotone = monotone && y >= last;
        last = y;
    }
    CHECK(monotone);

    params.phase_alpha = -0.456;
    params.phase_beta = 0.3457;
    params.phase_gamma1 = 2.196;
    params.phase_gamma2 = 2.75;
    CHECK(pan_am_pm_deg(0.0, params) == 0.0);
    CHECK(pan_am_pm_deg(1.0, params) ==
          Catch::Approx(-0.456 / (1.0 + std::pow(1.0 / 0.3457, 2.75))));
}

TEST_CASE("amplifier keeps zero samples at zero", "[impairments]")
{
    Stream stream(18);
    BasebandWaveform w = noise_waveform(64, 1, stream);
    w.samples(10, 0) = 0.0;
    PanParams params;
    params.input_backoff_db = 8.0;
    apply_pan(w, params);
    CHECK(w.samples(10, 0) == cxd(0.0, 0.0));
}

TEST_CASE("intermodulation products grow three decibels per drive decibel",
          "[impairments]")
{
    arma::uword n = 4096;
    BasebandWaveform base;
    base.samples.set_size(n, 1);
    for (arma::uword i = 0; i < n; ++i)
    {
        double t = static_cast<double>(i) / static_cast<double>(n);
        base.samples(i, 0) = std::polar(1.0, 2.0 * pi * 100.0 * t) +
                             std::polar(1.0, 2.0 * pi * 110.0 * t);
    }

    PanParams params;
    params.input_backoff_db = 15.0;
    BasebandWaveform w1 = base;
    apply_pan(w1, params);
    params.input_backoff_db = 14.0;
    BasebandWaveform w2 = base;
    apply_pan(w2, params);

    arma::cx_vec s1 = arma::fft(w1.samples.col(0));
    arma::cx_vec s2 = arma::fft(w2.samples.col(0));
    double im3_growth_db = 10.0 * std::log10(std::norm(s2[90]) / std::norm(s1[90]));
    double carrier_growth_db = 10.0 * std::log10(std::norm(s2[100]) / std::norm(s1[100]));
    CHECK(std::norm(s1[90]) > 1e-12 * std::norm(s1[100]));
    CHECK(im3_growth_db == Catch::Approx(3.0).margin(0.5));
    CHECK(carrier_growth_db == Catch::Approx(1.0).margin(0.2));
}

TEST_CASE("amplifier output level is set by back-off, not input scale", "[impairments]")
{
    Stream stream(19);
    BasebandWaveform a = noise_waveform(256, 1, stream);
    BasebandWaveform b = a;
    b.samples *= 3.0;
    PanParams params;
    apply_pan(a, params);
    apply_pan(b, params);

    double mismatch = arma::abs(b.samples - 3.0 * a.samples).max();
    CHECK(mismatch > 0.5 * arma::abs(a.samples).max());
    double agreement = arma::abs(b.samples - a.samples).max();
    CHECK(agreement < 1e-12);
}

TEST_CASE("cfo commutes with input scaling", "[impairments]")
{
    Stream stream(20);
    BasebandWaveform a = noise_waveform(256, 1, stream);
    BasebandWaveform b = a;
    b.samples *= cxd(0.0, 2.0);
    apply_cfo(a, 0.07);
    apply_cfo(b, 0.07);
    CHECK(arma::abs(b.samples - cxd(0.0, 2.0) * a.samples).max() < 1e-13);
}
