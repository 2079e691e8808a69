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
#include <functional>
#include <string>
#include <vector>

#include "rnntsim/engine.hpp"
#include "rnntsim/model.hpp"
#include "rnntsim/tensor.hpp"

namespace rnntsim {

/// Per-utterance decode result: emitted labels, the encoder frame each label
/// was emitted at, and the label's log-probability under the joint.
struct Hypothesis {
  std::vector<int32_t> tokens;
  std::vector<int32_t> frames;
  std::vector<float> scores;
  double total_score = 0.0;

  bool operator==(const Hypothesis& other) const = default;
};

using Hypotheses = std::vector<Hypothesis>;

/// Line-delimited records {id, tokens, frames, scores, total_score}.
void write_hypotheses_jsonl(const std::string& path,
                            const std::vector<std::string>& ids,
                            const Hypotheses& hyps);
std::vector<std::pair<std::string, Hypothesis>> read_hypotheses_jsonl(
    const std::string& path);

/// Features of one batch element: x[b] viewed as [frames, feature_dim].
Tensor slice_element(const Tensor& x, int b);

/// Reference decoder: plain nested host loops over one utterance, no virtual
/// device involved. For each frame below out_len, emits argmax labels until
/// blank or the per-frame cap, committing state only on non-blank labels.
/// This is the oracle every batched decoder must match bit for bit.
Hypothesis scalar_reference_decode(const DecoderModel& model,
                                   const Tensor& features, int out_len,
                                   int max_symbols);

/// Reference decoder for duration-head models: each decision advances the
/// frame cursor by the predicted duration (blanks by at least one frame).
Hypothesis scalar_reference_decode_tdt(const DecoderModel& model,
                                       const Tensor& features, int out_len,
                                       int max_symbols);

/// Frame-synchronous batched decoding, sync-requiring form: the inner loop
/// condition is read back with scalar_item every iteration, per-element
/// state updates go through sized masked assignment, and saving the winning
/// label touches the host once per step. Eager mode only; attempting to
/// capture it fails at its first host sync.
Hypotheses greedy_decode_baseline(Engine& engine, const DecoderModel& model,
                                  const Tensor& x, const Tensor& out_len,
                                  int max_symbols);

/// Frame-synchronous batched decoding with every host sync removed: masked
/// updates become selects into preallocated outputs, label saves use
/// index-copy writes, and loop conditions live in device-resident booleans.
/// Runs eagerly (loop flags are polled, flagged as permitted syncs) or under
/// capture unchanged.
Hypotheses greedy_decode_sync_free(Engine& engine, const DecoderModel& model,
                                   const Tensor& x, const Tensor& out_len,
                                   int max_symbols);

/// Label-looping batched decoding: elements progress asynchronously, one
/// label decision per element per iteration, with the prediction network
/// evaluated only after acceptances and cached across blank steps.
Hypotheses label_looping_decode(Engine& engine, const DecoderModel& model,
                                const Tensor& x, const Tensor& out_len,
                                int max_symbols);

/// Label-looping decoding for duration-head models. Non-blank decisions
/// advance an element by the predicted duration; blanks advance by at least
/// one frame; max_symbols bounds emissions per frame index.
Hypotheses tdt_label_looping_decode(Engine& engine, const DecoderModel& model,
                                    const Tensor& x, const Tensor& out_len,
                                    int max_symbols);

enum class DecodeAlgo { FrameSync, LabelLoop, TdtLabelLoop };

/// A decode program captured into a device graph, with its input buffers
/// exposed so fresh batches of identical shape can be bound and replayed.
/// The engine and model must outlive the captured decoder.
struct CapturedDecoder {
  Engine* engine = nullptr;
  DecodeAlgo algo = DecodeAlgo::FrameSync;
  int batch = 0;
  int max_frames = 0;
  int feature_dim = 0;
  int max_symbols = 0;
  Graph graph;
  std::function<void(const Tensor& x, const Tensor& out_len)> bind_inputs;
  std::function<Hypotheses()> read_hypotheses;
};

/// Captures the sync-free program for the chosen schedule into a graph whose
/// loops are while conditionals (time steps outside, symbol emission inside
/// for the frame-synchronous schedule; one loop over active elements for the
/// label-looping schedules).
CapturedDecoder build_decode_graph(Engine& engine, const DecoderModel& model,
                                   DecodeAlgo algo, int batch, int max_frames,
                                   int max_symbols);

/// Binds inputs, launches the captured graph once and reads the results.
/// Host work inside the decode region is exactly one graph launch.
Hypotheses replay_decode(CapturedDecoder& captured, const Tensor& x,
                         const Tensor& out_len);

/// Joint evaluations recorded on an engine's timeline (one per argmax step,
/// across every decode path).
int64_t decode_joint_evals(const Engine& engine);

}  // namespace rnntsim
