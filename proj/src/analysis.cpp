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
#include "rnntsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace rnntsim {

double idle_fraction(const TimingReport& report) {
  if (report.span_us <= 0.0) return 0.0;
  return std::clamp(1.0 - report.device_busy_us / report.span_us, 0.0, 1.0);
}

double predicted_graph_speedup(double avg_gap_us, double avg_kernel_us) {
  if (avg_gap_us <= 0.0 || avg_kernel_us <= 0.0) {
    throw ValueError("gap and kernel time must be positive");
  }
  return avg_gap_us / avg_kernel_us;
}

double amdahl_overall(double fraction_optimized, double speedup) {
  if (fraction_optimized < 0.0 || fraction_optimized > 1.0) {
    throw ValueError("fraction must lie in [0, 1]");
  }
  if (speedup <= 0.0) throw ValueError("speedup must be positive");
  return 1.0 / ((1.0 - fraction_optimized) + fraction_optimized / speedup);
}

double amdahl_max(double fraction_optimized) {
  if (fraction_optimized < 0.0 || fraction_optimized > 1.0) {
    throw ValueError("fraction must lie in [0, 1]");
  }
  if (fraction_optimized == 1.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 1.0 / (1.0 - fraction_optimized);
}

double adversarial_prob(double p, int64_t k) {
  if (p < 0.0 || p > 1.0) throw ValueError("probability outside [0, 1]");
  if (k < 0) throw ValueError("batch size must be >= 0");
  return 1.0 - std::pow(1.0 - p, static_cast<double>(k));
}

double rtfx(double audio_seconds, double wall_seconds) {
  if (wall_seconds <= 0.0) throw ValueError("wall time must be positive");
  return audio_seconds / wall_seconds;
}

int64_t levenshtein(const std::vector<int32_t>& a,
                    const std::vector<int32_t>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int64_t> row(m + 1);
  for (size_t j = 0; j <= m; ++j) row[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    int64_t diag = row[0];
    row[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t up = row[j];
      const int64_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      row[j] = std::min({diag + cost, up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[m];
}

double wer(const Hypotheses& refs, const Hypotheses& hyps) {
  if (refs.size() != hyps.size()) {
    throw DimensionError("reference/hypothesis count mismatch");
  }
  int64_t total_dist = 0, total_ref = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    total_dist += levenshtein(refs[i].tokens, hyps[i].tokens);
    total_ref += static_cast<int64_t>(refs[i].tokens.size());
  }
  if (total_ref == 0) {
    return total_dist == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return static_cast<double>(total_dist) / static_cast<double>(total_ref);
}

std::string speedup_report_json(const SpeedupReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"decoder_speedup\": %.6f, \"overall_speedup\": %.6f, "
                "\"decoder_fraction_before\": %.6f, "
                "\"decoder_fraction_after\": %.6f, \"rtfx_before\": %.6f, "
                "\"rtfx_after\": %.6f, \"wer_between\": %.6f}",
                r.decoder_speedup, r.overall_speedup,
                r.decoder_fraction_before, r.decoder_fraction_after,
                r.rtfx_before, r.rtfx_after, r.wer_between);
  return buf;
}

SpeedupReport compare_runs(const TimingReport& baseline_report,
                           const Hypotheses& baseline_hyps,
                           const TimingReport& optimized_report,
                           const Hypotheses& optimized_hyps,
                           double encoder_time_us, double audio_seconds) {
  if (encoder_time_us < 0.0) throw ValueError("encoder time must be >= 0");
  if (baseline_report.span_us <= 0.0 || optimized_report.span_us <= 0.0) {
    throw ValueError("decode spans must be positive");
  }
  SpeedupReport r;
  r.wer_between = wer(baseline_hyps, optimized_hyps);
  if (r.wer_between != 0.0) {
    throw Error("optimized decode differs from baseline (nonzero error rate)");
  }
  const double base_total = encoder_time_us + baseline_report.span_us;
  const double opt_total = encoder_time_us + optimized_report.span_us;
  r.decoder_speedup = baseline_report.span_us / optimized_report.span_us;
  r.overall_speedup = base_total / opt_total;
  r.decoder_fraction_before = baseline_report.span_us / base_total;
  r.decoder_fraction_after = optimized_report.span_us / opt_total;
  if (audio_seconds > 0.0) {
    r.rtfx_before = rtfx(audio_seconds, base_total * 1e-6);
    r.rtfx_after = rtfx(audio_seconds, opt_total * 1e-6);
  }
  return r;
}

std::string speedup_table_csv(const std::vector<SpeedupTableRow>& rows) {
  std::string out =
      "Decoder,RTFx,%Time in Decoder,WER,Overall Speed-up,Decoder Speed-up\n";
  char buf[256];
  for (const auto& row : rows) {
    std::string name = row.decoder;
    for (char& c : name) {
      if (c == ',' || c == '\n') c = ' ';
    }
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f,%.4f,%.2f,%.2f\n",
                  name.c_str(), row.rtfx, row.pct_time_in_decoder, row.wer,
                  row.overall_speedup, row.decoder_speedup);
    out += buf;
  }
  return out;
}

}  // namespace rnntsim
