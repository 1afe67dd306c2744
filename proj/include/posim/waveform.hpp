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

#ifndef posim_waveform_H
#define posim_waveform_H

#include "posim/config.hpp"
#include "posim/types.hpp"
#include <string>

namespace posim
{

// One slot of time-frequency resources. symbols(k, s, p) is the modulation
// symbol on active subcarrier k, OFDM symbol s, port p. Active subcarriers
// sit centered in the FFT: in ascending-frequency order, subcarrier 0 maps
// to bin subcarrier0_offset = (fft_length - n_subcarriers) / 2.
struct ResourceGrid
{
    arma::cx_cube symbols;  // n_subcarriers x n_symbols x n_ports
    arma::ucube occupied;   // 1 where a signal symbol was mapped
    arma::uword subcarrier0_offset = 0;

    arma::uword n_subcarriers() const { return symbols.n_rows; }
    arma::uword n_symbols() const { return symbols.n_cols; }
    arma::uword n_ports() const { return symbols.n_slices; }
};

// Sampled baseband signal with cyclic prefix. samples(n, p) is sample n of
// port p. symbol_start lists the first sample (start of CP) of each OFDM
// symbol; every symbol spans cp_length + fft_length samples.
struct BasebandWaveform
{
    arma::cx_mat samples; // n_samples x n_ports
    double sample_rate_hz = 0.0;
    arma::uvec symbol_start;
    arma::uword cp_length = 0;
    arma::uword fft_length = 0;

    arma::uword n_symbols() const { return symbol_start.n_elem; }
    arma::uword n_ports() const { return samples.n_cols; }
};

// Constant-amplitude base sequence built from the largest prime-length
// Zadoff-Chu sequence not exceeding `length`, cyclically extended. The root
// is derived from sequence_id so distinct ids give low cross-correlation.
// Throws std::invalid_argument for length < 3.
arma::cx_vec generate_zc_base(arma::uword sequence_id, arma::uword length);

// Builds the sounding/positioning signal grid for one slot (14 symbols) on a
// single transmit port. SRS occupies a fixed comb offset on every allocated
// symbol; PRS staggers the comb offset across symbols following the
// TS 38.211 comb patterns. Throws std::invalid_argument when the allocation
// is empty or does not fit the slot.
ResourceGrid generate_signal_grid(const SignalConfig &signal, const CarrierConfig &carrier);

// CP-OFDM modulation with unitary transform scaling: the inverse FFT is
// scaled by sqrt(fft_length) so grid energy equals symbol-body energy.
BasebandWaveform ofdm_modulate(const ResourceGrid &grid, const CarrierConfig &carrier);

// Inverse of ofdm_modulate: strips each cyclic prefix, applies the unitary
// forward FFT, and gathers the active subcarriers. The waveform length must
// be an exact multiple of cp_length + fft_length.
ResourceGrid ofdm_demodulate(const BasebandWaveform &waveform, const CarrierConfig &carrier);

// Writes samples as interleaved little-endian float64 (re, im) per port,
// plus a JSON sidecar (path + ".json") with sample rate and symbol
// boundaries.
void write_waveform(const std::string &path, const BasebandWaveform &waveform);

} // namespace posim

#endif
