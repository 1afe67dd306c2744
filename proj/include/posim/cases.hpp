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

#ifndef posim_cases_H
#define posim_cases_H

#include "posim/config.hpp"
#include <string>
#include <vector>

namespace posim
{

// Outcome of a Monte-Carlo case run: drop counters and the files written
// below the output directory. A drop counts as completed when every SNR
// point of the drop produced a result row; a module error at any point is
// recorded in errors.tsv and marks the drop failed without stopping the
// run. Per-SNR completion counts are in rmse.tsv.
struct CaseSummary
{
    arma::uword drops_completed = 0;
    arma::uword drops_failed = 0;
    std::vector<std::string> output_files;
};

// Two-dimensional uplink localization. Every drop places one user uniformly
// in the configured region, realizes the channel towards every BS, and
// measures the uplink pilot at each BS array. The two BSs with the highest
// RSRP contribute conventional-beamformer azimuth bearings to a
// Gauss-Newton position fix seeded at the bearing-line intersection;
// near-parallel bearings are recorded as a failed point. Hardware-impairment
// flags act on the measurement: the antenna phase offset distorts the
// composite CFR, per-receive-chain timing offsets are applied to the
// channel estimate of every selected BS, and waveform-domain impairments
// run through the modulated pilot burst. Throws std::invalid_argument for
// fewer than two BSs, a missing template user position, a degenerate drop
// region, or the antenna-phase-offset model combined with waveform-domain
// impairments.
CaseSummary run_localization_case(const SimConfig &cfg, const CaseSpec &spec);

// Analog beam sweep at BS 0. The configured beam grid rides consecutive
// pilot symbols, one beam per symbol; every drop draws the true user
// azimuth uniformly over the sweep range, places the user at the template
// distance, and reports the centre of the highest-RSRP beam as the azimuth
// estimate. Throws std::invalid_argument when analog beamforming is
// disabled or the pilot carries fewer symbols than there are beams.
CaseSummary run_beamsweep_case(const SimConfig &cfg, const CaseSpec &spec);

// Beamforming-based angle estimation at BS 0. The user sits at the centre
// of the configured initial-beam ranges; every drop draws the initial beam
// from a truncated Gaussian over those ranges, transmits the probe beams of
// the selected estimator (sum/difference, or an auxiliary beam pair per
// axis), and refines zenith first, then azimuth with the refined zenith.
// Throws std::invalid_argument when analog beamforming is disabled, the
// estimator is max_rsrp, the array axes do not support the probe beams, or
// the pilot carries fewer symbols than the estimator needs.
CaseSummary run_bfangle_case(const SimConfig &cfg, const CaseSpec &spec);

// Dispatches on spec.kind.
CaseSummary run_case(const SimConfig &cfg, const CaseSpec &spec);

} // namespace posim

#endif
