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
#include "rnntsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace rnntsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr float kInitRange = 0.08f;

void fill_uniform(Tensor& t, Rng& rng) {
  for (float& v : t.f32()) v = rng.uniform(-kInitRange, kInitRange);
}

// out[b,h] = tanh(ih[b,h] + hh[b,h] + bias[h])
void rnn_cell_into(const Tensor& ih, const Tensor& hh, const Tensor& bias,
                   Tensor& out) {
  const int64_t rows = ih.dim(0), width = ih.dim(1);
  auto pi = ih.f32();
  auto ph = hh.f32();
  auto pb = bias.f32();
  auto po = out.f32();
  for (int64_t b = 0; b < rows; ++b) {
    for (int64_t h = 0; h < width; ++h) {
      po[b * width + h] = std::tanh(pi[b * width + h] + ph[b * width + h] + pb[h]);
    }
  }
}

// out[i] = max(a[i] + b[i], 0)
void relu_add_into(const Tensor& a, const Tensor& b, Tensor& out) {
  auto pa = a.f32();
  auto pb = b.f32();
  auto po = out.f32();
  for (int64_t i = 0; i < a.numel(); ++i) {
    po[i] = std::max(pa[i] + pb[i], 0.0f);
  }
}

}  // namespace

void RnntDims::validate() const {
  if (vocab < 1 || embed < 1 || hidden < 1 || joint < 1 || feature < 1) {
    throw ValueError("all transducer dimensions must be >= 1");
  }
  if (!durations.empty()) {
    if (durations.front() != 0 && durations.front() != 1) {
      throw ValueError("first duration must be 0 or 1");
    }
    for (size_t i = 1; i < durations.size(); ++i) {
      if (durations[i] <= durations[i - 1]) {
        throw ValueError("durations must be strictly ascending");
      }
    }
  }
}

RnntParams init_params(uint64_t seed, const RnntDims& dims) {
  dims.validate();
  RnntParams p;
  p.dims = dims;
  p.seed = seed;
  const int64_t v1 = dims.vocab + 1;
  p.embedding = Tensor(Dtype::Float32, {v1, dims.embed});
  p.w_ih = Tensor(Dtype::Float32, {dims.embed, dims.hidden});
  p.w_hh = Tensor(Dtype::Float32, {dims.hidden, dims.hidden});
  p.bias = Tensor(Dtype::Float32, {dims.hidden});
  p.enc_proj = Tensor(Dtype::Float32, {dims.feature, dims.joint});
  p.pred_proj = Tensor(Dtype::Float32, {dims.hidden, dims.joint});
  p.out_proj = Tensor(Dtype::Float32, {dims.joint, v1});
  Rng rng(seed);
  fill_uniform(p.embedding, rng);
  fill_uniform(p.w_ih, rng);
  fill_uniform(p.w_hh, rng);
  fill_uniform(p.bias, rng);
  fill_uniform(p.enc_proj, rng);
  fill_uniform(p.pred_proj, rng);
  fill_uniform(p.out_proj, rng);
  if (!dims.durations.empty()) {
    p.dur_proj = Tensor(
        Dtype::Float32, {dims.joint, static_cast<int64_t>(dims.durations.size())});
    fill_uniform(p.dur_proj, rng);
  }
  return p;
}

void save_params(const std::string& dir, const RnntParams& p) {
  fs::create_directories(dir);
  json meta;
  meta["vocab"] = p.dims.vocab;
  meta["embed"] = p.dims.embed;
  meta["hidden"] = p.dims.hidden;
  meta["joint"] = p.dims.joint;
  meta["feature"] = p.dims.feature;
  meta["durations"] = p.dims.durations;
  meta["seed"] = p.seed;
  meta["blank_index"] = p.blank_index();
  std::ofstream meta_os(dir + "/meta.json");
  if (!meta_os) throw IoError("cannot write " + dir + "/meta.json");
  meta_os << meta.dump(2) << "\n";
  write_tensor_file(dir + "/embedding.tnsr", p.embedding);
  write_tensor_file(dir + "/w_ih.tnsr", p.w_ih);
  write_tensor_file(dir + "/w_hh.tnsr", p.w_hh);
  write_tensor_file(dir + "/bias.tnsr", p.bias);
  write_tensor_file(dir + "/enc_proj.tnsr", p.enc_proj);
  write_tensor_file(dir + "/pred_proj.tnsr", p.pred_proj);
  write_tensor_file(dir + "/out_proj.tnsr", p.out_proj);
  if (p.has_duration_head()) {
    write_tensor_file(dir + "/dur_proj.tnsr", p.dur_proj);
  }
}

RnntParams load_params(const std::string& dir) {
  std::ifstream meta_is(dir + "/meta.json");
  if (!meta_is) throw IoError("cannot read " + dir + "/meta.json");
  json meta = json::parse(meta_is, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded()) throw IoError("invalid meta.json in " + dir);
  RnntParams p;
  p.dims.vocab = meta.at("vocab").get<int>();
  p.dims.embed = meta.at("embed").get<int>();
  p.dims.hidden = meta.at("hidden").get<int>();
  p.dims.joint = meta.at("joint").get<int>();
  p.dims.feature = meta.at("feature").get<int>();
  p.dims.durations = meta.at("durations").get<std::vector<int32_t>>();
  p.seed = meta.at("seed").get<uint64_t>();
  p.dims.validate();
  p.embedding = read_tensor_file(dir + "/embedding.tnsr");
  p.w_ih = read_tensor_file(dir + "/w_ih.tnsr");
  p.w_hh = read_tensor_file(dir + "/w_hh.tnsr");
  p.bias = read_tensor_file(dir + "/bias.tnsr");
  p.enc_proj = read_tensor_file(dir + "/enc_proj.tnsr");
  p.pred_proj = read_tensor_file(dir + "/pred_proj.tnsr");
  p.out_proj = read_tensor_file(dir + "/out_proj.tnsr");
  if (p.has_duration_head()) {
    p.dur_proj = read_tensor_file(dir + "/dur_proj.tnsr");
  }
  return p;
}

std::pair<Tensor, Tensor> prediction(const RnntParams& p,
                                     const Tensor& last_label,
                                     const Tensor& hidden) {
  const int64_t batch = last_label.numel();
  Tensor emb(Dtype::Float32, {batch, p.dims.embed});
  Tensor ih(Dtype::Float32, {batch, p.dims.hidden});
  Tensor hh(Dtype::Float32, {batch, p.dims.hidden});
  Tensor h_prime(Dtype::Float32, {batch, p.dims.hidden});
  embedding_lookup_into(p.embedding, last_label, emb);
  matmul_into(emb, p.w_ih, ih);
  matmul_into(hidden, p.w_hh, hh);
  rnn_cell_into(ih, hh, p.bias, h_prime);
  return {h_prime, h_prime};
}

Tensor joint(const RnntParams& p, const Tensor& f, const Tensor& g) {
  const int64_t batch = f.dim(0);
  Tensor fp(Dtype::Float32, {batch, p.dims.joint});
  Tensor gp(Dtype::Float32, {batch, p.dims.joint});
  Tensor trunk(Dtype::Float32, {batch, p.dims.joint});
  Tensor logits(Dtype::Float32, {batch, p.dims.vocab + 1});
  Tensor logp(Dtype::Float32, {batch, p.dims.vocab + 1});
  matmul_into(f, p.enc_proj, fp);
  matmul_into(g, p.pred_proj, gp);
  relu_add_into(fp, gp, trunk);
  matmul_into(trunk, p.out_proj, logits);
  log_softmax_into(logits, logp);
  return logp;
}

std::pair<Tensor, Tensor> joint_tdt(const RnntParams& p, const Tensor& f,
                                    const Tensor& g) {
  if (!p.has_duration_head()) {
    throw StateError("joint_tdt requires a duration head");
  }
  const int64_t batch = f.dim(0);
  Tensor token_logp = joint(p, f, g);
  // The duration head shares the trunk; recompute it the same way.
  Tensor fp(Dtype::Float32, {batch, p.dims.joint});
  Tensor gp(Dtype::Float32, {batch, p.dims.joint});
  Tensor trunk(Dtype::Float32, {batch, p.dims.joint});
  matmul_into(f, p.enc_proj, fp);
  matmul_into(g, p.pred_proj, gp);
  relu_add_into(fp, gp, trunk);
  Tensor dur_logits(Dtype::Float32,
                    {batch, static_cast<int64_t>(p.dims.durations.size())});
  Tensor dur_logp(Dtype::Float32, dur_logits.shape());
  matmul_into(trunk, p.dur_proj, dur_logits);
  log_softmax_into(dur_logits, dur_logp);
  return {std::move(token_logp), std::move(dur_logp)};
}

// ---------------------------------------------------------------------------
// DecoderModel defaults
// ---------------------------------------------------------------------------

const std::vector<int32_t>& DecoderModel::durations() const {
  static const std::vector<int32_t> none;
  return none;
}

void DecoderModel::run_joint_tdt(const Tensor&, const Tensor&, Tensor&,
                                 Tensor&) const {
  throw StateError("model has no duration head");
}

StepScratch DecoderModel::make_scratch(int) const { return {}; }

void DecoderModel::launch_prediction(Engine& engine, StepScratch&,
                                     const Buffer& last_label,
                                     const Buffer& hidden,
                                     const Buffer& hidden_prime) const {
  engine.launch_kernel({"prediction",
                        [this](const std::vector<Buffer>& a) {
                          run_prediction(*a[0], *a[1], *a[2]);
                        }},
                       {last_label, hidden, hidden_prime});
}

void DecoderModel::launch_joint(Engine& engine, StepScratch&, const Buffer& f,
                                const Buffer& g, const Buffer& logp) const {
  engine.launch_kernel({"joint",
                        [this](const std::vector<Buffer>& a) {
                          run_joint(*a[0], *a[1], *a[2]);
                        }},
                       {f, g, logp});
}

void DecoderModel::launch_joint_tdt(Engine& engine, StepScratch&,
                                    const Buffer& f, const Buffer& g,
                                    const Buffer& token_logp,
                                    const Buffer& dur_logp) const {
  engine.launch_kernel({"joint_tdt",
                        [this](const std::vector<Buffer>& a) {
                          run_joint_tdt(*a[0], *a[1], *a[2], *a[3]);
                        }},
                       {f, g, token_logp, dur_logp});
}

// ---------------------------------------------------------------------------
// NeuralModel
// ---------------------------------------------------------------------------

namespace {
// Scratch layout for the neural kernel decomposition.
enum ScratchSlot : size_t {
  kEmb = 0,
  kIh,
  kHh,
  kFProj,
  kGProj,
  kTrunk,
  kLogits,
  kDurLogits,
  kScratchSlots,
};
}  // namespace

NeuralModel::NeuralModel(RnntParams params) : params_(std::move(params)) {
  params_.dims.validate();
}

void NeuralModel::run_prediction(const Tensor& last_label, const Tensor& hidden,
                                 Tensor& hidden_prime) const {
  auto [g, h_prime] = prediction(params_, last_label, hidden);
  hidden_prime.assign(h_prime);
}

void NeuralModel::run_joint(const Tensor& f, const Tensor& g,
                            Tensor& logp) const {
  logp.assign(joint(params_, f, g));
}

void NeuralModel::run_joint_tdt(const Tensor& f, const Tensor& g,
                                Tensor& token_logp, Tensor& dur_logp) const {
  auto [tok, dur] = joint_tdt(params_, f, g);
  token_logp.assign(tok);
  dur_logp.assign(dur);
}

StepScratch NeuralModel::make_scratch(int batch) const {
  const auto& d = params_.dims;
  StepScratch s;
  s.bufs.resize(kScratchSlots);
  s.bufs[kEmb] = make_buffer(Tensor(Dtype::Float32, {batch, d.embed}));
  s.bufs[kIh] = make_buffer(Tensor(Dtype::Float32, {batch, d.hidden}));
  s.bufs[kHh] = make_buffer(Tensor(Dtype::Float32, {batch, d.hidden}));
  s.bufs[kFProj] = make_buffer(Tensor(Dtype::Float32, {batch, d.joint}));
  s.bufs[kGProj] = make_buffer(Tensor(Dtype::Float32, {batch, d.joint}));
  s.bufs[kTrunk] = make_buffer(Tensor(Dtype::Float32, {batch, d.joint}));
  s.bufs[kLogits] = make_buffer(Tensor(Dtype::Float32, {batch, d.vocab + 1}));
  s.bufs[kDurLogits] = make_buffer(
      has_duration_head()
          ? Tensor(Dtype::Float32,
                   {batch, static_cast<int64_t>(d.durations.size())})
          : Tensor());
  return s;
}

void NeuralModel::launch_prediction(Engine& engine, StepScratch& scratch,
                                    const Buffer& last_label,
                                    const Buffer& hidden,
                                    const Buffer& hidden_prime) const {
  const Tensor* table = &params_.embedding;
  const Tensor* w_ih = &params_.w_ih;
  const Tensor* w_hh = &params_.w_hh;
  const Tensor* bias = &params_.bias;
  Buffer emb = scratch.bufs.at(kEmb);
  Buffer ih = scratch.bufs.at(kIh);
  Buffer hh = scratch.bufs.at(kHh);
  engine.launch_kernel({"pred.embed",
                        [table](const std::vector<Buffer>& a) {
                          embedding_lookup_into(*table, *a[0], *a[1]);
                        }},
                       {last_label, emb});
  engine.launch_kernel({"pred.matmul_ih",
                        [w_ih](const std::vector<Buffer>& a) {
                          matmul_into(*a[0], *w_ih, *a[1]);
                        }},
                       {emb, ih});
  engine.launch_kernel({"pred.matmul_hh",
                        [w_hh](const std::vector<Buffer>& a) {
                          matmul_into(*a[0], *w_hh, *a[1]);
                        }},
                       {hidden, hh});
  engine.launch_kernel({"pred.cell",
                        [bias](const std::vector<Buffer>& a) {
                          rnn_cell_into(*a[0], *a[1], *bias, *a[2]);
                        }},
                       {ih, hh, hidden_prime});
}

void NeuralModel::launch_joint(Engine& engine, StepScratch& scratch,
                               const Buffer& f, const Buffer& g,
                               const Buffer& logp) const {
  const Tensor* enc_proj = &params_.enc_proj;
  const Tensor* pred_proj = &params_.pred_proj;
  const Tensor* out_proj = &params_.out_proj;
  Buffer fp = scratch.bufs.at(kFProj);
  Buffer gp = scratch.bufs.at(kGProj);
  Buffer trunk = scratch.bufs.at(kTrunk);
  Buffer logits = scratch.bufs.at(kLogits);
  engine.launch_kernel({"joint.enc_proj",
                        [enc_proj](const std::vector<Buffer>& a) {
                          matmul_into(*a[0], *enc_proj, *a[1]);
                        }},
                       {f, fp});
  engine.launch_kernel({"joint.pred_proj",
                        [pred_proj](const std::vector<Buffer>& a) {
                          matmul_into(*a[0], *pred_proj, *a[1]);
                        }},
                       {g, gp});
  engine.launch_kernel({"joint.combine",
                        [](const std::vector<Buffer>& a) {
                          relu_add_into(*a[0], *a[1], *a[2]);
                        }},
                       {fp, gp, trunk});
  engine.launch_kernel({"joint.out_proj",
                        [out_proj](const std::vector<Buffer>& a) {
                          matmul_into(*a[0], *out_proj, *a[1]);
                        }},
                       {trunk, logits});
  engine.launch_kernel({"joint.log_softmax",
                        [](const std::vector<Buffer>& a) {
                          log_softmax_into(*a[0], *a[1]);
                        }},
                       {logits, logp});
}

void NeuralModel::launch_joint_tdt(Engine& engine, StepScratch& scratch,
                                   const Buffer& f, const Buffer& g,
                                   const Buffer& token_logp,
                                   const Buffer& dur_logp) const {
  if (!has_duration_head()) throw StateError("model has no duration head");
  launch_joint(engine, scratch, f, g, token_logp);
  const Tensor* dur_proj = &params_.dur_proj;
  Buffer trunk = scratch.bufs.at(kTrunk);
  Buffer dur_logits = scratch.bufs.at(kDurLogits);
  engine.launch_kernel({"joint.dur_proj",
                        [dur_proj](const std::vector<Buffer>& a) {
                          matmul_into(*a[0], *dur_proj, *a[1]);
                        }},
                       {trunk, dur_logits});
  engine.launch_kernel({"joint.dur_log_softmax",
                        [](const std::vector<Buffer>& a) {
                          log_softmax_into(*a[0], *a[1]);
                        }},
                       {dur_logits, dur_logp});
}

// ---------------------------------------------------------------------------
// ScriptedModel
// ---------------------------------------------------------------------------

ScriptedModel::ScriptedModel(int vocab, int max_symbols, LabelTable labels,
                             std::vector<int32_t> durations,
                             LabelTable emit_durations)
    : vocab_(vocab),
      cap_(max_symbols),
      labels_(std::move(labels)),
      emit_durations_(std::move(emit_durations)),
      durations_(std::move(durations)) {
  if (vocab_ < 1) throw ValueError("scripted vocab must be >= 1");
  if (cap_ < 1) throw ValueError("scripted max_symbols must be >= 1");
  batch_ = static_cast<int>(labels_.size());
  frames_ = batch_ > 0 ? static_cast<int>(labels_[0].size()) : 0;
  for (const auto& per_frame : labels_) {
    if (static_cast<int>(per_frame.size()) != frames_) {
      throw DimensionError("scripted table rows must share a frame count");
    }
    for (const auto& entry : per_frame) {
      for (int32_t label : entry) {
        if (label < 0 || label >= vocab_) {
          throw IndexError("scripted label " + std::to_string(label) +
                           " outside vocab");
        }
      }
    }
  }
  if (!durations_.empty()) {
    RnntDims probe;
    probe.durations = durations_;
    probe.validate();
  }
  if (!emit_durations_.empty()) {
    if (durations_.empty()) {
      throw ValueError("emission durations require a duration class list");
    }
    if (emit_durations_.size() != labels_.size()) {
      throw DimensionError("emission duration table shape mismatch");
    }
    for (int b = 0; b < batch_; ++b) {
      if (emit_durations_[b].size() != labels_[b].size()) {
        throw DimensionError("emission duration table shape mismatch");
      }
      for (int t = 0; t < frames_; ++t) {
        for (int32_t d : emit_durations_[b][t]) {
          if (!std::ranges::count(durations_, d)) {
            throw ValueError("planted duration " + std::to_string(d) +
                             " not in duration class list");
          }
        }
      }
    }
  }
  build_arrivals();
}

int ScriptedModel::planted_label(int b, int t, int u) const {
  if (b < 0 || b >= batch_ || t < 0 || t >= frames_) return vocab_;
  const auto& entry = labels_[b][t];
  if (u < 0 || u >= static_cast<int>(entry.size())) return vocab_;
  return entry[u];
}

int32_t ScriptedModel::duration_at(int b, int t, int u) const {
  const bool is_blank = planted_label(b, t, u) == vocab_;
  if (b >= 0 && b < batch_ && t >= 0 && t < frames_ && !emit_durations_.empty()) {
    const auto& entry = emit_durations_[b][t];
    const int len = static_cast<int>(labels_[b][t].size());
    const int idx = std::min(u, len);
    if (idx >= 0 && idx < static_cast<int>(entry.size())) return entry[idx];
  }
  return is_blank ? 1 : 0;
}

Tensor ScriptedModel::logits_at(int b, int t, int u) const {
  Tensor logits(Dtype::Float32, {vocab_ + 1});
  logits.f32()[planted_label(b, t, u)] = 10.0f;
  return logits;
}

Tensor scripted_logits(const ScriptedModel& model, int b, int t, int u) {
  return model.logits_at(b, t, u);
}

int32_t ScriptedModel::frame_sync_arrival(int b, int t) const {
  if (b < 0 || b >= batch_ || t <= 0) return 0;
  t = std::min(t, frames_);
  return prefix_frame_sync_[b][t];
}

int64_t ScriptedModel::duration_arrival(int b, int t) const {
  if (b < 0 || b >= batch_ || t < 0 || t >= frames_) return -1;
  return arrival_duration_[b][t];
}

void ScriptedModel::build_arrivals() {
  prefix_frame_sync_.assign(batch_, std::vector<int32_t>(frames_ + 1, 0));
  arrival_duration_.assign(batch_, std::vector<int64_t>(frames_, -1));
  for (int b = 0; b < batch_; ++b) {
    // Frame-synchronous schedules visit every frame in order and emit up to
    // max_symbols of its planted labels.
    for (int t = 0; t < frames_; ++t) {
      const int emitted =
          std::min<int>(static_cast<int>(labels_[b][t].size()), cap_);
      prefix_frame_sync_[b][t + 1] = prefix_frame_sync_[b][t] + emitted;
    }
    // Duration-driven schedules skip frames; walk the planted decisions with
    // the decoder's advance rules to learn the emission count on arrival.
    int64_t t = 0, emitted = 0;
    while (t < frames_) {
      arrival_duration_[b][t] = emitted;
      const int len = static_cast<int>(labels_[b][t].size());
      int u = 0;
      bool advanced = false;
      while (!advanced) {
        if (u < len) {
          const int32_t d = duration_at(b, static_cast<int>(t), u);
          ++emitted;
          ++u;
          if (d > 0) {
            t += d;
            advanced = true;
          } else if (u == cap_) {
            t += 1;
            advanced = true;
          }
        } else {
          const int32_t d = duration_at(b, static_cast<int>(t), len);
          t += std::max<int32_t>(d, 1);
          advanced = true;
        }
      }
    }
  }
}

Tensor ScriptedModel::make_features() const {
  Tensor x(Dtype::Float32, {batch_, frames_, 2});
  auto px = x.f32();
  for (int b = 0; b < batch_; ++b) {
    for (int t = 0; t < frames_; ++t) {
      px[(static_cast<int64_t>(b) * frames_ + t) * 2 + 0] = static_cast<float>(b);
      px[(static_cast<int64_t>(b) * frames_ + t) * 2 + 1] = static_cast<float>(t);
    }
  }
  return x;
}

void ScriptedModel::run_prediction(const Tensor& last_label,
                                   const Tensor& hidden,
                                   Tensor& hidden_prime) const {
  // The recurrent state is a running emission count; it advances by one each
  // time the decoder accepts a label.
  const int64_t batch = last_label.numel();
  auto ph = hidden.f32();
  auto po = hidden_prime.f32();
  for (int64_t b = 0; b < batch; ++b) po[b] = ph[b] + 1.0f;
}

void ScriptedModel::run_joint(const Tensor& f, const Tensor& g,
                              Tensor& logp) const {
  const int64_t batch = f.dim(0);
  Tensor logits(Dtype::Float32, {batch, vocab_ + 1});
  auto pf = f.f32();
  auto pg = g.f32();
  auto pl = logits.f32();
  for (int64_t r = 0; r < batch; ++r) {
    const int b = static_cast<int>(pf[r * 2 + 0]);
    const int t = static_cast<int>(pf[r * 2 + 1]);
    const int emitted = static_cast<int>(pg[r]) - 1;
    const int u = emitted - frame_sync_arrival(b, t);
    pl[r * (vocab_ + 1) + planted_label(b, t, u)] = 10.0f;
  }
  log_softmax_into(logits, logp);
}

void ScriptedModel::run_joint_tdt(const Tensor& f, const Tensor& g,
                                  Tensor& token_logp, Tensor& dur_logp) const {
  if (durations_.empty()) throw StateError("model has no duration head");
  const int64_t batch = f.dim(0);
  const int64_t classes = static_cast<int64_t>(durations_.size());
  Tensor logits(Dtype::Float32, {batch, vocab_ + 1});
  Tensor dur_logits(Dtype::Float32, {batch, classes});
  auto pf = f.f32();
  auto pg = g.f32();
  auto pl = logits.f32();
  auto pd = dur_logits.f32();
  for (int64_t r = 0; r < batch; ++r) {
    const int b = static_cast<int>(pf[r * 2 + 0]);
    const int t = static_cast<int>(pf[r * 2 + 1]);
    const int emitted = static_cast<int>(pg[r]) - 1;
    const int64_t arrival = duration_arrival(b, t);
    const int u = arrival < 0 ? -1 : emitted - static_cast<int>(arrival);
    pl[r * (vocab_ + 1) + planted_label(b, t, u)] = 10.0f;
    const int32_t d = duration_at(b, t, u < 0 ? 1 << 20 : u);
    const auto cls = std::ranges::find(durations_, d) - durations_.begin();
    pd[r * classes + cls] = 10.0f;
  }
  log_softmax_into(logits, token_logp);
  log_softmax_into(dur_logits, dur_logp);
}

void ScriptedModel::save_json(const std::string& path) const {
  json j;
  j["vocab_size"] = vocab_;
  j["max_symbols"] = cap_;
  j["labels"] = labels_;
  if (!durations_.empty()) j["durations"] = durations_;
  if (!emit_durations_.empty()) j["emit_durations"] = emit_durations_;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  os << j.dump(2) << "\n";
}

ScriptedModel ScriptedModel::load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  json j = json::parse(is, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw IoError("invalid scripted model file: " + path);
  try {
    return ScriptedModel(
        j.at("vocab_size").get<int>(), j.at("max_symbols").get<int>(),
        j.at("labels").get<LabelTable>(),
        j.value("durations", std::vector<int32_t>{}),
        j.value("emit_durations", LabelTable{}));
  } catch (const json::exception& e) {
    throw IoError("invalid scripted model file: " + std::string(e.what()));
  }
}

}  // namespace rnntsim
