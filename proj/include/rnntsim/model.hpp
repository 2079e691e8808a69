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
#include <utility>
#include <vector>

#include "rnntsim/engine.hpp"
#include "rnntsim/tensor.hpp"

namespace rnntsim {

/// Transducer dimensions. The blank label always sits at index vocab (the
/// last class of the joint output). A non-empty durations list adds a
/// duration head with one class per listed duration value.
struct RnntDims {
  int vocab = 8;
  int embed = 8;
  int hidden = 8;
  int joint = 8;
  int feature = 8;
  std::vector<int32_t> durations;  // sorted ascending, first element 0 or 1

  void validate() const;
};

/// Weights for the tiny transducer: a one-layer tanh RNN prediction network,
/// an additive joint, and an optional duration head sharing the joint trunk.
struct RnntParams {
  RnntDims dims;
  uint64_t seed = 0;

  Tensor embedding;  // [vocab+1, embed]
  Tensor w_ih;       // [embed, hidden]
  Tensor w_hh;       // [hidden, hidden]
  Tensor bias;       // [hidden]
  Tensor enc_proj;   // [feature, joint]
  Tensor pred_proj;  // [hidden, joint]
  Tensor out_proj;   // [joint, vocab+1]
  Tensor dur_proj;   // [joint, D] when durations is non-empty

  int blank_index() const { return dims.vocab; }
  bool has_duration_head() const { return !dims.durations.empty(); }
};

/// Weights drawn uniform in [-0.08, 0.08] from Rng(seed); a fixed fill order
/// makes the same seed reproduce bit-identical parameters.
RnntParams init_params(uint64_t seed, const RnntDims& dims);

/// Params persist as a directory of tensor files plus meta.json.
void save_params(const std::string& dir, const RnntParams& p);
RnntParams load_params(const std::string& dir);

/// hidden_prime = tanh(w_ih * embed(last_label) + w_hh * hidden + bias);
/// g is the same vector. The caller decides whether to commit hidden_prime.
std::pair<Tensor, Tensor> prediction(const RnntParams& p,
                                     const Tensor& last_label,
                                     const Tensor& hidden);

/// log_softmax(out_proj^T relu(enc_proj^T f + pred_proj^T g)) per row.
Tensor joint(const RnntParams& p, const Tensor& f, const Tensor& g);

/// Token head exactly as joint(); the duration head is an independent
/// log_softmax over the duration classes, sharing the relu trunk.
std::pair<Tensor, Tensor> joint_tdt(const RnntParams& p, const Tensor& f,
                                    const Tensor& g);

/// Preallocated intermediate buffers for one decode step; contents are owned
/// by the model implementation that created them.
struct StepScratch {
  std::vector<Buffer> bufs;
};

/// What the decoders need from a model. Batched calls are row independent:
/// row b of every output depends only on row b of the inputs, which keeps
/// batched decoding bit-identical to the per-utterance reference.
class DecoderModel {
 public:
  virtual ~DecoderModel() = default;

  virtual int vocab_size() const = 0;
  int blank_index() const { return vocab_size(); }
  /// Width of the per-element recurrent state vector.
  virtual int state_width() const = 0;
  virtual int feature_dim() const = 0;
  virtual const std::vector<int32_t>& durations() const;
  bool has_duration_head() const { return !durations().empty(); }

  virtual void run_prediction(const Tensor& last_label, const Tensor& hidden,
                              Tensor& hidden_prime) const = 0;
  virtual void run_joint(const Tensor& f, const Tensor& g,
                         Tensor& logp) const = 0;
  virtual void run_joint_tdt(const Tensor& f, const Tensor& g,
                             Tensor& token_logp, Tensor& dur_logp) const;

  /// Kernel-granular variants used by the virtual-device decoders. Defaults
  /// wrap the batched math in a single kernel each; implementations may
  /// split the work into more kernels, with identical numerics.
  virtual StepScratch make_scratch(int batch) const;
  virtual void launch_prediction(Engine& engine, StepScratch& scratch,
                                 const Buffer& last_label,
                                 const Buffer& hidden,
                                 const Buffer& hidden_prime) const;
  virtual void launch_joint(Engine& engine, StepScratch& scratch,
                            const Buffer& f, const Buffer& g,
                            const Buffer& logp) const;
  virtual void launch_joint_tdt(Engine& engine, StepScratch& scratch,
                                const Buffer& f, const Buffer& g,
                                const Buffer& token_logp,
                                const Buffer& dur_logp) const;
};

/// DecoderModel view over RnntParams. Prediction and joint run as the same
/// kernel decomposition in eager and captured execution.
class NeuralModel : public DecoderModel {
 public:
  explicit NeuralModel(RnntParams params);

  const RnntParams& params() const { return params_; }

  int vocab_size() const override { return params_.dims.vocab; }
  int state_width() const override { return params_.dims.hidden; }
  int feature_dim() const override { return params_.dims.feature; }
  const std::vector<int32_t>& durations() const override {
    return params_.dims.durations;
  }

  void run_prediction(const Tensor& last_label, const Tensor& hidden,
                      Tensor& hidden_prime) const override;
  void run_joint(const Tensor& f, const Tensor& g, Tensor& logp) const override;
  void run_joint_tdt(const Tensor& f, const Tensor& g, Tensor& token_logp,
                     Tensor& dur_logp) const override;

  StepScratch make_scratch(int batch) const override;
  void launch_prediction(Engine& engine, StepScratch& scratch,
                         const Buffer& last_label, const Buffer& hidden,
                         const Buffer& hidden_prime) const override;
  void launch_joint(Engine& engine, StepScratch& scratch, const Buffer& f,
                    const Buffer& g, const Buffer& logp) const override;
  void launch_joint_tdt(Engine& engine, StepScratch& scratch, const Buffer& f,
                        const Buffer& g, const Buffer& token_logp,
                        const Buffer& dur_logp) const override;

 private:
  RnntParams params_;
};

/// Scripted-emission model: a table assigns each (utterance, frame) the
/// ordered labels to emit at that frame before going blank, so decode traces
/// are planted exactly. Features encode (utterance, frame) so the batched
/// decoders can route each row to its table entry; the recurrent state is a
/// running emission count.
class ScriptedModel : public DecoderModel {
 public:
  using LabelTable = std::vector<std::vector<std::vector<int32_t>>>;

  /// labels[b][t] lists the labels planted at frame t of utterance b.
  /// max_symbols must match the decode configuration; it fixes how many of a
  /// frame's labels survive the per-frame emission cap.
  /// For duration-head use, durations lists the duration classes and
  /// emit_durations[b][t] gives per-emission durations (entry len(labels)+1
  /// is the blank's duration; missing entries default to 0 for labels, 1 for
  /// blank).
  ScriptedModel(int vocab, int max_symbols, LabelTable labels,
                std::vector<int32_t> durations = {},
                LabelTable emit_durations = {});

  int batch() const { return batch_; }
  int frames() const { return frames_; }
  int max_symbols() const { return cap_; }
  const LabelTable& labels() const { return labels_; }

  /// Features [batch, frames, 2] holding (utterance, frame) per row.
  Tensor make_features() const;

  void save_json(const std::string& path) const;
  static ScriptedModel load_json(const std::string& path);

  int vocab_size() const override { return vocab_; }
  int state_width() const override { return 1; }
  int feature_dim() const override { return 2; }
  const std::vector<int32_t>& durations() const override { return durations_; }

  void run_prediction(const Tensor& last_label, const Tensor& hidden,
                      Tensor& hidden_prime) const override;
  void run_joint(const Tensor& f, const Tensor& g, Tensor& logp) const override;
  void run_joint_tdt(const Tensor& f, const Tensor& g, Tensor& token_logp,
                     Tensor& dur_logp) const override;

  /// Raw logits for the decision at (utterance b, frame t, emission u):
  /// +10 on the planted label while u is within the frame's list, otherwise
  /// +10 on blank.
  Tensor logits_at(int b, int t, int u) const;
  /// Duration value for the decision at (b, t, u).
  int32_t duration_at(int b, int t, int u) const;

 private:
  int planted_label(int b, int t, int u) const;
  int32_t frame_sync_arrival(int b, int t) const;
  int64_t duration_arrival(int b, int t) const;  // -1 if never reached
  void build_arrivals();

  int vocab_ = 0;
  int cap_ = 1;
  int batch_ = 0;
  int frames_ = 0;
  LabelTable labels_;
  LabelTable emit_durations_;
  std::vector<int32_t> durations_;
  // Emission counts observed on arrival at each frame, per schedule kind.
  std::vector<std::vector<int32_t>> prefix_frame_sync_;  // [b][t]
  std::vector<std::vector<int64_t>> arrival_duration_;   // [b][t], -1 unreached
};

/// Convenience wrapper matching the table-lookup contract directly.
Tensor scripted_logits(const ScriptedModel& model, int b, int t, int u);

}  // namespace rnntsim
