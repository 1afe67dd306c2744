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

#include "posim/waveform.hpp"
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace posim
{

namespace
{

bool is_prime(arma::uword n)
{
    if (n < 2)
        return false;
    for (arma::uword d = 2; d * d <= n; ++d)
        if (n % d == 0)
            return false;
    return true;
}

arma::uword largest_prime_not_above(arma::uword n)
{
    while (!is_prime(n))
        --n;
    return n;
}

// Comb offset pattern across consecutive symbols of a staggered (PRS style)
// allocation, per TS 38.211 table 7.4.1.7.3-1.
std::vector<arma::uword> stagger_pattern(arma::uword comb)
{
    switch (comb)
    {
    case 1:
        return {0};
    case 2:
        return {0, 1};
    case 4:
        return {0, 2, 1, 3};
    case 6:
        return {0, 3, 1, 4, 2, 5};
    case 12:
        return {0, 6, 3, 9, 1, 7, 4, 10, 2, 8, 5, 11};
    default:
        throw std::invalid_argument(
            "posim::generate_signal_grid: no stagger pattern for comb " + std::to_string(comb));
    }
}

} // namespace

arma::cx_vec generate_zc_base(arma::uword sequence_id, arma::uword length)
{
    if (length < 3)
        throw std::invalid_argument("posim::generate_zc_base: length must be >= 3");

    arma::uword n_zc = largest_prime_not_above(length);
    arma::uword root = (sequence_id % (n_zc - 1)) + 1;

    arma::cx_vec seq(length);
    for (arma::uword n = 0; n < length; ++n)
    {
        arma::uword m = n % n_zc;
        double phase = -pi * static_cast<double>(root) * static_cast<double>(m) *
                       static_cast<double>(m + 1) / static_cast<double>(n_zc);
        seq[n] = std::polar(1.0, phase);
    }
    return seq;
}

ResourceGrid generate_signal_grid(const SignalConfig &signal, const CarrierConfig &carrier)
{
    constexpr arma::uword slot_symbols = 14;
    if (signal.num_symbols == 0)
        throw std::invalid_argument("posim::generate_signal_grid: empty symbol allocation");
    if (signal.start_symbol + signal.num_symbols > slot_symbols)
        throw std::invalid_argument(
            "posim::generate_signal_grid: allocation exceeds the 14-symbol slot");

    arma::uword k_active = carrier.active_subcarriers();
    if (k_active % signal.comb != 0)
        throw std::invalid_argument(
            "posim::generate_signal_grid: comb does not divide the active grid");

    ResourceGrid grid;
    grid.symbols.zeros(k_active, slot_symbols, 1);
    grid.occupied.zeros(k_active, slot_symbols, 1);
    grid.subcarrier0_offset = (carrier.fft_length - k_active) / 2;

    arma::uword seq_len = k_active / signal.comb;
    arma::cx_vec base = generate_zc_base(signal.sequence_id, seq_len);
    double alpha = 2.0 * pi * static_cast<double>(signal.cyclic_shift) / 12.0;
    arma::cx_vec seq(seq_len);
    for (arma::uword n = 0; n < seq_len; ++n)
        seq[n] = base[n] * std::polar(1.0, alpha * static_cast<double>(n));

    bool staggered = (signal.type == SignalConfig::Type::prs);
    auto pattern = stagger_pattern(signal.comb);

    for (arma::uword i = 0; i < signal.num_symbols; ++i)
    {
        arma::uword s = signal.start_symbol + i;
        arma::uword offset = signal.comb_offset;
        if (staggered)
            offset = (offset + pattern[i % pattern.size()]) % signal.comb;
        for (arma::uword n = 0; n < seq_len; ++n)
        {
            arma::uword k = offset + n * signal.comb;
            grid.symbols(k, s, 0) = seq[n];
            grid.occupied(k, s, 0) = 1;
        }
    }
    return grid;
}

BasebandWaveform ofdm_modulate(const ResourceGrid &grid, const CarrierConfig &carrier)
{
    arma::uword k_fft = carrier.fft_length;
    arma::uword k_active = grid.n_subcarriers();
    if (k_active > k_fft)
        throw std::invalid_argument("posim::ofdm_modulate: grid does not fit the FFT");

    arma::uword cp = carrier.cp_length();
    arma::uword sym_len = cp + k_fft;
    arma::uword n_sym = grid.n_symbols();
    arma::uword n_ports = grid.n_ports();

    BasebandWaveform wf;
    wf.samples.zeros(n_sym * sym_len, n_ports);
    wf.sample_rate_hz = carrier.sample_rate_hz;
    wf.cp_length = cp;
    wf.fft_length = k_fft;
    wf.symbol_start.set_size(n_sym);

    double scale = std::sqrt(static_cast<double>(k_fft));
    for (arma::uword p = 0; p < n_ports; ++p)
    {
        for (arma::uword s = 0; s < n_sym; ++s)
        {
            wf.symbol_start[s] = s * sym_len;
            arma::cx_vec freq(k_fft, arma::fill::zeros);
            for (arma::uword k = 0; k < k_active; ++k)
            {
                arma::uword bin = (k + grid.subcarrier0_offset + k_fft / 2) % k_fft;
                freq[bin] = grid.symbols(k, s, p);
            }
            arma::cx_vec body = arma::ifft(freq) * scale;
            arma::uword base = s * sym_len;
            wf.samples.col(p).subvec(base, base + cp - 1) = body.tail(cp);
            wf.samples.col(p).subvec(base + cp, base + sym_len - 1) = body;
        }
    }
    return wf;
}

ResourceGrid ofdm_demodulate(const BasebandWaveform &waveform, const CarrierConfig &carrier)
{
    arma::uword k_fft = carrier.fft_length;
    arma::uword cp = carrier.cp_length();
    arma::uword sym_len = cp + k_fft;
    arma::uword n_samples = waveform.samples.n_rows;
    if (n_samples == 0 || n_samples % sym_len != 0)
        throw std::invalid_argument(
            "posim::ofdm_demodulate: waveform length is not a whole number of symbols");

    arma::uword n_sym = n_samples / sym_len;
    arma::uword n_ports = waveform.n_ports();
    arma::uword k_active = carrier.active_subcarriers();

    ResourceGrid grid;
    grid.symbols.set_size(k_active, n_sym, n_ports);
    grid.occupied.ones(k_active, n_sym, n_ports);
    grid.subcarrier0_offset = (k_fft - k_active) / 2;

    double scale = 1.0 / std::sqrt(static_cast<double>(k_fft));
    for (arma::uword p = 0; p < n_ports; ++p)
    {
        for (arma::uword s = 0; s < n_sym; ++s)
        {
            arma::uword base = s * sym_len + cp;
            arma::cx_vec body = waveform.samples.col(p).subvec(base, base + k_fft - 1);
            arma::cx_vec freq = arma::fft(body) * scale;
            for (arma::uword k = 0; k < k_active; ++k)
            {
                arma::uword bin = (k + grid.subcarrier0_offset + k_fft / 2) % k_fft;
                grid.symbols(k, s, p) = freq[bin];
            }
        }
    }
    return grid;
}

void write_waveform(const std::string &path, const BasebandWaveform &waveform)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::invalid_argument("posim::write_waveform: cannot open '" + path + "'");
    for (arma::uword p = 0; p < waveform.n_ports(); ++p)
        for (arma::uword n = 0; n < waveform.samples.n_rows; ++n)
        {
            double re = waveform.samples(n, p).real();
            double im = waveform.samples(n, p).imag();
            out.write(reinterpret_cast<const char *>(&re), sizeof(double));
            out.write(reinterpret_cast<const char *>(&im), sizeof(double));
        }

    nlohmann::json meta;
    meta["sample_rate_hz"] = waveform.sample_rate_hz;
    meta["cp_length"] = waveform.cp_length;
    meta["fft_length"] = waveform.fft_length;
    meta["n_ports"] = waveform.n_ports();
    meta["symbol_start"] = std::vector<arma::uword>(waveform.symbol_start.begin(),
                                                    waveform.symbol_start.end());
    std::ofstream side(path + ".json");
    side << meta.dump(2) << "\n";
}

} // namespace posim
