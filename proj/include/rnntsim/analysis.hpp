/*
 * Copyright (c) 2026, the rnnt-sim authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rnntsim/decoders.hpp"
#include "rnntsim/engine.hpp"

namespace rnntsim {

/// Share of a span during which the device executes nothing.
double idle_fraction(const TimingReport& report);

/// Expected decoder speedup from launching everything as one graph:
/// average inter-launch gap over average kernel runtime.
double predicted_graph_speedup(double avg_gap_us, double avg_kernel_us);

/// Overall speedup when a fraction f of the runtime is sped up by s.
double amdahl_overall(double fraction_optimized, double speedup);
/// Limit of amdahl_overall as the optimized part becomes free.
double amdahl_max(double fraction_optimized);

/// Probability that a batch of k inputs contains at least one adversarial
/// input when each is adversarial with probability p: 1 - (1-p)^k.
double adversarial_prob(double p, int64_t k);

/// Hours of audio transcribed per hour of wall clock.
double rtfx(double audio_seconds, double wall_seconds);

/// Edit distance with unit costs for substitution, insertion and deletion.
int64_t levenshtein(const std::vector<int32_t>& a,
                    const std::vector<int32_t>& b);

/// Sum of edit distances over the sum of reference lengths, on token ids.
double wer(const Hypotheses& refs, const Hypotheses& hyps);

struct SpeedupReport {
  double decoder_speedup = 1.0;
  double overall_speedup = 1.0;
  double decoder_fraction_before = 0.0;
  double decoder_fraction_after = 0.0;
  double rtfx_before = 0.0;
  double rtfx_after = 0.0;
  double wer_between = 0.0;
};

std::string speedup_report_json(const SpeedupReport& r);

/// Compares a baseline decode against an optimized decode of the same
/// inputs. Decoder times come from the simulated reports; the encoder time
/// is injected, as is the amount of audio behind the batch. Throws if the
/// two hypothesis sets differ (the optimized decoders are exact).
SpeedupReport compare_runs(const TimingReport& baseline_report,
                           const Hypotheses& baseline_hyps,
                           const TimingReport& optimized_report,
                           const Hypotheses& optimized_hyps,
                           double encoder_time_us, double audio_seconds);

/// One row of the results table.
struct SpeedupTableRow {
  std::string decoder;
  double rtfx = 0.0;
  double pct_time_in_decoder = 0.0;
  double wer = 0.0;
  double overall_speedup = 1.0;
  double decoder_speedup = 1.0;
};

/// CSV with columns Decoder, RTFx, %Time in Decoder, WER,
/// Overall Speed-up, Decoder Speed-up.
std::string speedup_table_csv(const std::vector<SpeedupTableRow>& rows);

}  // namespace rnntsim
