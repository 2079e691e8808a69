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
#include "rnntsim/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>

#include <json.hpp>

namespace rnntsim {

namespace {

using nlohmann::json;

void launch(Engine& eng, std::string name, std::vector<Buffer> args,
            std::function<void()> fn) {
  eng.launch_kernel(
      {std::move(name),
       [fn = std::move(fn)](const std::vector<Buffer>&) { fn(); }},
      std::move(args));
}

struct EmissionBuffers {
  Buffer tokens, frames, scores, counts;
  int64_t capacity = 0;
};

EmissionBuffers make_emissions(int batch, int64_t capacity) {
  EmissionBuffers em;
  em.capacity = std::max<int64_t>(capacity, 1);
  em.tokens = make_buffer(Tensor(Dtype::Int32, {batch, em.capacity}));
  em.frames = make_buffer(Tensor(Dtype::Int32, {batch, em.capacity}));
  em.scores = make_buffer(Tensor(Dtype::Float32, {batch, em.capacity}));
  em.counts = make_buffer(Tensor(Dtype::Int32, {batch}));
  return em;
}

void zero_emissions(const EmissionBuffers& em) {
  em.tokens->fill_with(0);
  em.frames->fill_with(0);
  em.scores->fill_with(0);
  em.counts->fill_with(0);
}

// Appends (k[b], frame, v[b]) for every element with emit_mask set. The
// frame index comes from a host constant, a device scalar, or a per-element
// device vector, depending on the schedule.
void append_emissions(const EmissionBuffers& em, const Tensor& k,
                      const Tensor& v, const Tensor& emit_mask,
                      std::optional<int32_t> host_frame,
                      const Tensor* frame_src) {
  auto pk = k.i32();
  auto pv = v.f32();
  auto pm = emit_mask.b8();
  auto pt = em.tokens->i32();
  auto pf = em.frames->i32();
  auto ps = em.scores->f32();
  auto pc = em.counts->i32();
  const int64_t batch = pc.size();
  const int64_t cap = em.capacity;
  for (int64_t b = 0; b < batch; ++b) {
    if (!pm[b]) continue;
    const int32_t n = pc[b];
    if (n >= cap) continue;  // unreachable within frames * max_symbols
    int32_t frame = 0;
    if (host_frame) {
      frame = *host_frame;
    } else if (frame_src->numel() == 1) {
      frame = frame_src->i32()[0];
    } else {
      frame = frame_src->i32()[b];
    }
    pt[b * cap + n] = pk[b];
    pf[b * cap + n] = frame;
    ps[b * cap + n] = pv[b];
    pc[b] = n + 1;
  }
}

Hypotheses read_emissions(Engine& eng, const EmissionBuffers& em, int batch) {
  // Deliberate result transfer after the decode region; exempt from the sync
  // debug policy the way one drops the debug mode around a final fetch.
  const SyncPolicy saved = eng.sync_policy();
  eng.set_sync_policy(SyncPolicy::Allow);
  const Tensor counts = eng.copy_to_host(em.counts);
  const Tensor tokens = eng.copy_to_host(em.tokens);
  const Tensor frames = eng.copy_to_host(em.frames);
  const Tensor scores = eng.copy_to_host(em.scores);
  eng.set_sync_policy(saved);
  const int64_t cap = em.capacity;
  Hypotheses out(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    const int32_t n = counts.i32()[b];
    Hypothesis& h = out[static_cast<size_t>(b)];
    h.tokens.reserve(n);
    for (int32_t i = 0; i < n; ++i) {
      h.tokens.push_back(tokens.i32()[b * cap + i]);
      h.frames.push_back(frames.i32()[b * cap + i]);
      h.scores.push_back(scores.f32()[b * cap + i]);
    }
    h.total_score = 0.0;
    for (float sc : h.scores) h.total_score += static_cast<double>(sc);
  }
  return out;
}

void validate_decode_inputs(const Tensor& x, const Tensor& out_len, int batch,
                            int frames, int feature_dim, int max_symbols) {
  if (max_symbols < 1) throw ValueError("max_symbols must be >= 1");
  if (x.rank() != 3 || x.dtype() != Dtype::Float32) {
    throw DimensionError("features must be float32 [batch, frames, features]");
  }
  if (x.dim(0) != batch || x.dim(1) != frames || x.dim(2) != feature_dim) {
    throw DimensionError("feature shape does not match the decode program");
  }
  if (out_len.rank() != 1 || out_len.dtype() != Dtype::Int32 ||
      out_len.dim(0) != batch) {
    throw DimensionError("out_len must be int32 [batch]");
  }
  for (int32_t v : out_len.i32()) {
    if (v < 0 || v > frames) {
      throw DimensionError("out_len entries must lie in [0, frames]");
    }
  }
}

// ---------------------------------------------------------------------------
// Frame-synchronous schedule (shared by the baseline and sync-free decoders)
// ---------------------------------------------------------------------------

// All per-batch decoding variables as device buffers: hidden state,
// last_label, blank_mask, the loop scalars and the emission store.
struct DecodeState {
  int batch = 0;
  int max_frames = 0;
  int feature_dim = 0;
  int max_symbols = 0;
  const DecoderModel* model = nullptr;

  Buffer x, out_len;
  Buffer hidden, last_label, h_prime;
  Buffer f, logp, k, v;
  Buffer blank_mask, nb_mask, not_blank;
  Buffer symbols_added, time_idx, max_out_len;
  Buffer inner_cond, outer_cond;
  EmissionBuffers em;
  StepScratch scratch;
};

std::shared_ptr<DecodeState> make_frame_sync_state(const DecoderModel& m,
                                                   int batch, int frames,
                                                   int max_symbols) {
  if (batch < 1 || frames < 1) throw ValueError("batch and frames must be >= 1");
  if (max_symbols < 1) throw ValueError("max_symbols must be >= 1");
  auto s = std::make_shared<DecodeState>();
  s->batch = batch;
  s->max_frames = frames;
  s->feature_dim = m.feature_dim();
  s->max_symbols = max_symbols;
  s->model = &m;
  const int width = m.state_width();
  const int64_t classes = m.vocab_size() + 1;
  s->x = make_buffer(Tensor(Dtype::Float32, {batch, frames, s->feature_dim}));
  s->out_len = make_buffer(Tensor(Dtype::Int32, {batch}));
  s->hidden = make_buffer(Tensor(Dtype::Float32, {batch, width}));
  s->last_label = make_buffer(Tensor(Dtype::Int32, {batch}));
  s->h_prime = make_buffer(Tensor(Dtype::Float32, {batch, width}));
  s->f = make_buffer(Tensor(Dtype::Float32, {batch, s->feature_dim}));
  s->logp = make_buffer(Tensor(Dtype::Float32, {batch, classes}));
  s->k = make_buffer(Tensor(Dtype::Int32, {batch}));
  s->v = make_buffer(Tensor(Dtype::Float32, {batch}));
  s->blank_mask = make_buffer(Tensor(Dtype::Bool, {batch}));
  s->nb_mask = make_buffer(Tensor(Dtype::Bool, {batch}));
  s->not_blank = make_buffer(Tensor(Dtype::Bool, {}));
  s->symbols_added = make_buffer(Tensor(Dtype::Int32, {}));
  s->time_idx = make_buffer(Tensor(Dtype::Int32, {}));
  s->max_out_len = make_buffer(Tensor(Dtype::Int32, {}));
  s->inner_cond = make_buffer(Tensor(Dtype::Bool, {}));
  s->outer_cond = make_buffer(Tensor(Dtype::Bool, {}));
  s->em = make_emissions(batch, static_cast<int64_t>(frames) * max_symbols);
  s->scratch = m.make_scratch(batch);
  return s;
}

void bind_decode_inputs(DecodeState& s, const Tensor& x, const Tensor& out_len) {
  validate_decode_inputs(x, out_len, s.batch, s.max_frames, s.feature_dim,
                         s.max_symbols);
  s.x->assign(x);
  s.out_len->assign(out_len);
}

void launch_fs_outer_cond(Engine& eng, const std::shared_ptr<DecodeState>& s) {
  launch(eng, "outer_cond", {s->time_idx, s->max_out_len, s->outer_cond}, [s] {
    s->outer_cond->b8()[0] =
        s->time_idx->i32()[0] < s->max_out_len->i32()[0] ? 1 : 0;
  });
}

void launch_fs_prologue(Engine& eng, const std::shared_ptr<DecodeState>& s,
                        bool device_outer_loop) {
  const int32_t blank = s->model->blank_index();
  launch(eng, "init_state", {s->hidden, s->last_label, s->time_idx},
         [s, blank] {
           s->hidden->fill_with(0.0);
           s->last_label->fill_with(blank);
           s->time_idx->i32()[0] = 0;
         });
  launch(eng, "init_emissions", {s->em.tokens, s->em.counts},
         [s] { zero_emissions(s->em); });
  launch(eng, "max_out_len", {s->out_len, s->max_out_len}, [s] {
    int32_t m = 0;
    for (int32_t v : s->out_len->i32()) m = std::max(m, v);
    s->max_out_len->i32()[0] = m;
  });
  if (device_outer_loop) launch_fs_outer_cond(eng, s);
}

void launch_fs_frame_head(Engine& eng, const std::shared_ptr<DecodeState>& s,
                          std::optional<int32_t> host_time) {
  launch(eng, "frame_slice", {s->x, s->time_idx, s->f}, [s, host_time] {
    const int64_t t = host_time ? *host_time : s->time_idx->i32()[0];
    const int64_t frames = s->max_frames, width = s->feature_dim;
    const int64_t tc = std::clamp<int64_t>(t, 0, frames - 1);
    auto px = s->x->f32();
    auto pf = s->f->f32();
    for (int64_t b = 0; b < s->batch; ++b) {
      std::copy_n(&px[(b * frames + tc) * width], width, &pf[b * width]);
    }
  });
  launch(eng, "frame_init",
         {s->out_len, s->blank_mask, s->symbols_added, s->not_blank,
          s->inner_cond},
         [s, host_time] {
           const int32_t t = host_time ? *host_time : s->time_idx->i32()[0];
           auto pol = s->out_len->i32();
           auto pb = s->blank_mask->b8();
           for (int64_t b = 0; b < s->batch; ++b) pb[b] = t >= pol[b] ? 1 : 0;
           s->not_blank->b8()[0] = 1;
           s->symbols_added->i32()[0] = 0;
           s->inner_cond->b8()[0] = 1;
         });
}

void launch_fs_inner_body(Engine& eng, const std::shared_ptr<DecodeState>& s,
                          bool baseline, std::optional<int32_t> host_time) {
  const DecoderModel& m = *s->model;
  m.launch_prediction(eng, s->scratch, s->last_label, s->hidden, s->h_prime);
  m.launch_joint(eng, s->scratch, s->f, s->h_prime, s->logp);
  launch(eng, "argmax_kv", {s->logp, s->k, s->v},
         [s] { argmax_last_into(*s->logp, *s->k, *s->v); });
  const int32_t blank = m.blank_index();
  launch(eng, "blank_update", {s->k, s->blank_mask, s->nb_mask}, [s, blank] {
    auto pk = s->k->i32();
    auto pb = s->blank_mask->b8();
    auto pn = s->nb_mask->b8();
    for (int64_t b = 0; b < s->batch; ++b) {
      pb[b] = (pb[b] || pk[b] == blank) ? 1 : 0;
      pn[b] = pb[b] ? 0 : 1;
    }
  });
  if (baseline) {
    // Indexing the emission cursor with a device scalar forces a host round
    // trip before the save can be issued (legacy indexing behavior).
    eng.host_sync("save_index_readback");
  }
  launch(eng, "save_kv", {s->k, s->v, s->nb_mask, s->em.counts},
         [s, host_time] {
           append_emissions(s->em, *s->k, *s->v, *s->nb_mask, host_time,
                            s->time_idx.get());
         });
  if (baseline) {
    eng.masked_assign_sizeful_launched(s->last_label, s->nb_mask, s->k);
    eng.masked_assign_sizeful_launched(s->hidden, s->nb_mask, s->h_prime);
  } else {
    launch(eng, "update_last_label", {s->nb_mask, s->k, s->last_label},
           [s] { where_select(*s->nb_mask, *s->k, *s->last_label, *s->last_label); });
    launch(eng, "update_hidden", {s->nb_mask, s->h_prime, s->hidden},
           [s] { where_select_rows(*s->nb_mask, *s->h_prime, *s->hidden, *s->hidden); });
  }
  launch(eng, "any_not_blank", {s->nb_mask, s->not_blank},
         [s] { any_true_into(*s->nb_mask, *s->not_blank); });
  const int32_t cap = s->max_symbols;
  launch(eng, "loop_tail", {s->symbols_added, s->not_blank, s->inner_cond},
         [s, cap] {
           int32_t& sym = s->symbols_added->i32()[0];
           sym += 1;
           s->inner_cond->b8()[0] =
               (s->not_blank->b8()[0] && sym < cap) ? 1 : 0;
         });
}

void launch_fs_outer_tail(Engine& eng, const std::shared_ptr<DecodeState>& s) {
  launch(eng, "advance_time", {s->time_idx},
         [s] { s->time_idx->i32()[0] += 1; });
  launch_fs_outer_cond(eng, s);
}

void launch_sync_free_program(Engine& eng,
                              const std::shared_ptr<DecodeState>& s) {
  launch_fs_prologue(eng, s, /*device_outer_loop=*/true);
  run_while(eng, s->outer_cond, [&eng, s] {
    launch_fs_frame_head(eng, s, std::nullopt);
    run_while(eng, s->inner_cond,
              [&eng, s] { launch_fs_inner_body(eng, s, false, std::nullopt); });
    launch_fs_outer_tail(eng, s);
  });
}

// ---------------------------------------------------------------------------
// Label-looping schedule (token-only and token-and-duration variants)
// ---------------------------------------------------------------------------

struct LabelLoopState {
  int batch = 0;
  int max_frames = 0;
  int feature_dim = 0;
  int max_symbols = 0;
  bool with_durations = false;
  std::vector<int32_t> duration_values;
  const DecoderModel* model = nullptr;

  Buffer x, out_len;
  Buffer hidden, last_label, g_cache, h_prime;
  Buffer t_per, u_frame, active, any_active, accept;
  Buffer f, logp, k, v;
  Buffer dur_logp, dur_idx, dur_score, dur_val;
  EmissionBuffers em;
  StepScratch scratch;
};

std::shared_ptr<LabelLoopState> make_label_loop_state(const DecoderModel& m,
                                                      int batch, int frames,
                                                      int max_symbols,
                                                      bool with_durations) {
  if (batch < 1 || frames < 1) throw ValueError("batch and frames must be >= 1");
  if (max_symbols < 1) throw ValueError("max_symbols must be >= 1");
  if (with_durations && !m.has_duration_head()) {
    throw StateError("duration-head decoding needs a model with a duration head");
  }
  auto s = std::make_shared<LabelLoopState>();
  s->batch = batch;
  s->max_frames = frames;
  s->feature_dim = m.feature_dim();
  s->max_symbols = max_symbols;
  s->with_durations = with_durations;
  s->duration_values = m.durations();
  s->model = &m;
  const int width = m.state_width();
  const int64_t classes = m.vocab_size() + 1;
  s->x = make_buffer(Tensor(Dtype::Float32, {batch, frames, s->feature_dim}));
  s->out_len = make_buffer(Tensor(Dtype::Int32, {batch}));
  s->hidden = make_buffer(Tensor(Dtype::Float32, {batch, width}));
  s->last_label = make_buffer(Tensor(Dtype::Int32, {batch}));
  s->g_cache = make_buffer(Tensor(Dtype::Float32, {batch, width}));
  s->h_prime = make_buffer(Tensor(Dtype::Float32, {batch, width}));
  s->t_per = make_buffer(Tensor(Dtype::Int32, {batch}));
  s->u_frame = make_buffer(Tensor(Dtype::Int32, {batch}));
  s->active = make_buffer(Tensor(Dtype::Bool, {batch}));
  s->any_active = make_buffer(Tensor(Dtype::Bool, {}));
  s->accept = make_buffer(Tensor(Dtype::Bool, {batch}));
  s->f = make_buffer(Tensor(Dtype::Float32, {batch, s->feature_dim}));
  s->logp = make_buffer(Tensor(Dtype::Float32, {batch, classes}));
  s->k = make_buffer(Tensor(Dtype::Int32, {batch}));
  s->v = make_buffer(Tensor(Dtype::Float32, {batch}));
  if (with_durations) {
    const int64_t d = static_cast<int64_t>(s->duration_values.size());
    s->dur_logp = make_buffer(Tensor(Dtype::Float32, {batch, d}));
    s->dur_idx = make_buffer(Tensor(Dtype::Int32, {batch}));
    s->dur_score = make_buffer(Tensor(Dtype::Float32, {batch}));
    s->dur_val = make_buffer(Tensor(Dtype::Int32, {batch}));
  }
  s->em = make_emissions(batch, static_cast<int64_t>(frames) * max_symbols);
  s->scratch = m.make_scratch(batch);
  return s;
}

void bind_decode_inputs(LabelLoopState& s, const Tensor& x,
                        const Tensor& out_len) {
  validate_decode_inputs(x, out_len, s.batch, s.max_frames, s.feature_dim,
                         s.max_symbols);
  s.x->assign(x);
  s.out_len->assign(out_len);
}

void launch_ll_active_update(Engine& eng,
                             const std::shared_ptr<LabelLoopState>& s) {
  launch(eng, "active_update", {s->t_per, s->out_len, s->active, s->any_active},
         [s] {
           auto pt = s->t_per->i32();
           auto pol = s->out_len->i32();
           auto pa = s->active->b8();
           for (int64_t b = 0; b < s->batch; ++b) pa[b] = pt[b] < pol[b] ? 1 : 0;
           any_true_into(*s->active, *s->any_active);
         });
}

void launch_ll_prologue(Engine& eng, const std::shared_ptr<LabelLoopState>& s) {
  const int32_t blank = s->model->blank_index();
  launch(eng, "init_state",
         {s->hidden, s->last_label, s->t_per, s->u_frame}, [s, blank] {
           s->hidden->fill_with(0.0);
           s->last_label->fill_with(blank);
           s->t_per->fill_with(0);
           s->u_frame->fill_with(0);
         });
  launch(eng, "init_emissions", {s->em.tokens, s->em.counts},
         [s] { zero_emissions(s->em); });
  s->model->launch_prediction(eng, s->scratch, s->last_label, s->hidden,
                              s->h_prime);
  launch(eng, "init_g_cache", {s->h_prime, s->g_cache},
         [s] { s->g_cache->assign(*s->h_prime); });
  launch_ll_active_update(eng, s);
}

void launch_ll_body(Engine& eng, const std::shared_ptr<LabelLoopState>& s) {
  const DecoderModel& m = *s->model;
  launch(eng, "gather_frames", {s->x, s->t_per, s->f}, [s] {
    const int64_t frames = s->max_frames, width = s->feature_dim;
    auto px = s->x->f32();
    auto pt = s->t_per->i32();
    auto pf = s->f->f32();
    for (int64_t b = 0; b < s->batch; ++b) {
      const int64_t tc = std::clamp<int64_t>(pt[b], 0, frames - 1);
      std::copy_n(&px[(b * frames + tc) * width], width, &pf[b * width]);
    }
  });
  if (s->with_durations) {
    m.launch_joint_tdt(eng, s->scratch, s->f, s->g_cache, s->logp, s->dur_logp);
  } else {
    m.launch_joint(eng, s->scratch, s->f, s->g_cache, s->logp);
  }
  launch(eng, "argmax_kv", {s->logp, s->k, s->v},
         [s] { argmax_last_into(*s->logp, *s->k, *s->v); });
  if (s->with_durations) {
    launch(eng, "argmax_dur", {s->dur_logp, s->dur_val}, [s] {
      argmax_last_into(*s->dur_logp, *s->dur_idx, *s->dur_score);
      auto pi = s->dur_idx->i32();
      auto pd = s->dur_val->i32();
      for (int64_t b = 0; b < s->batch; ++b) {
        pd[b] = s->duration_values[static_cast<size_t>(pi[b])];
      }
    });
  }
  const int32_t blank = m.blank_index();
  launch(eng, "accept_mask", {s->active, s->k, s->accept}, [s, blank] {
    auto pa = s->active->b8();
    auto pk = s->k->i32();
    auto pc = s->accept->b8();
    for (int64_t b = 0; b < s->batch; ++b) {
      pc[b] = (pa[b] && pk[b] != blank) ? 1 : 0;
    }
  });
  launch(eng, "save_kv", {s->k, s->v, s->accept, s->em.counts}, [s] {
    append_emissions(s->em, *s->k, *s->v, *s->accept, std::nullopt,
                     s->t_per.get());
  });
  launch(eng, "commit_last_label", {s->accept, s->k, s->last_label},
         [s] { where_select(*s->accept, *s->k, *s->last_label, *s->last_label); });
  // The hidden state committed on acceptance is the prediction output that
  // produced the accepted label, which is exactly the cached g.
  launch(eng, "commit_hidden", {s->accept, s->g_cache, s->hidden},
         [s] { where_select_rows(*s->accept, *s->g_cache, *s->hidden, *s->hidden); });
  m.launch_prediction(eng, s->scratch, s->last_label, s->hidden, s->h_prime);
  launch(eng, "commit_g_cache", {s->accept, s->h_prime, s->g_cache},
         [s] { where_select_rows(*s->accept, *s->h_prime, *s->g_cache, *s->g_cache); });
  const int32_t cap = s->max_symbols;
  const bool with_durations = s->with_durations;
  launch(eng, "step_advance", {s->t_per, s->u_frame, s->active, s->accept},
         [s, cap, with_durations] {
           auto pt = s->t_per->i32();
           auto pu = s->u_frame->i32();
           auto pa = s->active->b8();
           auto pc = s->accept->b8();
           for (int64_t b = 0; b < s->batch; ++b) {
             if (!pa[b]) continue;
             if (pc[b]) {
               pu[b] += 1;
               const int32_t d =
                   with_durations ? s->dur_val->i32()[b] : 0;
               if (d > 0) {
                 pt[b] += d;
                 pu[b] = 0;
               } else if (pu[b] == cap) {
                 pt[b] += 1;
                 pu[b] = 0;
               }
             } else {
               const int32_t d =
                   with_durations ? s->dur_val->i32()[b] : 1;
               pt[b] += std::max<int32_t>(d, 1);
               pu[b] = 0;
             }
           }
         });
  launch_ll_active_update(eng, s);
}

void launch_label_loop_program(Engine& eng,
                               const std::shared_ptr<LabelLoopState>& s) {
  launch_ll_prologue(eng, s);
  run_while(eng, s->any_active, [&eng, s] { launch_ll_body(eng, s); });
}

std::pair<int, int> batch_frames_of(const Tensor& x) {
  if (x.rank() != 3) {
    throw DimensionError("features must be rank 3 [batch, frames, features]");
  }
  return {static_cast<int>(x.dim(0)), static_cast<int>(x.dim(1))};
}

Hypotheses run_label_loop(Engine& eng, const DecoderModel& m, const Tensor& x,
                          const Tensor& out_len, int max_symbols,
                          bool with_durations) {
  const auto [batch, frames] = batch_frames_of(x);
  auto s = make_label_loop_state(m, batch, frames, max_symbols, with_durations);
  bind_decode_inputs(*s, x, out_len);
  eng.begin_region("decode");
  launch_label_loop_program(eng, s);
  eng.end_region("decode");
  return read_emissions(eng, s->em, s->batch);
}

}  // namespace

// ---------------------------------------------------------------------------
// Public decoders
// ---------------------------------------------------------------------------

Hypotheses greedy_decode_baseline(Engine& engine, const DecoderModel& model,
                                  const Tensor& x, const Tensor& out_len,
                                  int max_symbols) {
  const auto [batch, frames] = batch_frames_of(x);
  auto s = make_frame_sync_state(model, batch, frames, max_symbols);
  bind_decode_inputs(*s, x, out_len);
  engine.begin_region("decode");
  launch_fs_prologue(engine, s, /*device_outer_loop=*/false);
  const int32_t steps = scalar_item<int32_t>(*s->max_out_len, engine);
  for (int32_t t = 0; t < steps; ++t) {
    launch_fs_frame_head(engine, s, t);
    while (scalar_item<bool>(*s->inner_cond, engine)) {
      launch_fs_inner_body(engine, s, /*baseline=*/true, t);
    }
  }
  engine.end_region("decode");
  return read_emissions(engine, s->em, s->batch);
}

Hypotheses greedy_decode_sync_free(Engine& engine, const DecoderModel& model,
                                   const Tensor& x, const Tensor& out_len,
                                   int max_symbols) {
  const auto [batch, frames] = batch_frames_of(x);
  auto s = make_frame_sync_state(model, batch, frames, max_symbols);
  bind_decode_inputs(*s, x, out_len);
  engine.begin_region("decode");
  launch_sync_free_program(engine, s);
  engine.end_region("decode");
  return read_emissions(engine, s->em, s->batch);
}

Hypotheses label_looping_decode(Engine& engine, const DecoderModel& model,
                                const Tensor& x, const Tensor& out_len,
                                int max_symbols) {
  return run_label_loop(engine, model, x, out_len, max_symbols, false);
}

Hypotheses tdt_label_looping_decode(Engine& engine, const DecoderModel& model,
                                    const Tensor& x, const Tensor& out_len,
                                    int max_symbols) {
  return run_label_loop(engine, model, x, out_len, max_symbols, true);
}

CapturedDecoder build_decode_graph(Engine& engine, const DecoderModel& model,
                                   DecodeAlgo algo, int batch, int max_frames,
                                   int max_symbols) {
  CapturedDecoder cap;
  cap.engine = &engine;
  cap.algo = algo;
  cap.batch = batch;
  cap.max_frames = max_frames;
  cap.feature_dim = model.feature_dim();
  cap.max_symbols = max_symbols;
  Engine* eng = &engine;
  if (algo == DecodeAlgo::FrameSync) {
    auto s = make_frame_sync_state(model, batch, max_frames, max_symbols);
    engine.begin_capture();
    launch_sync_free_program(engine, s);
    cap.graph = engine.end_capture();
    cap.bind_inputs = [s](const Tensor& x, const Tensor& out_len) {
      bind_decode_inputs(*s, x, out_len);
    };
    cap.read_hypotheses = [s, eng] {
      return read_emissions(*eng, s->em, s->batch);
    };
  } else {
    const bool with_durations = algo == DecodeAlgo::TdtLabelLoop;
    auto s = make_label_loop_state(model, batch, max_frames, max_symbols,
                                   with_durations);
    engine.begin_capture();
    launch_label_loop_program(engine, s);
    cap.graph = engine.end_capture();
    cap.bind_inputs = [s](const Tensor& x, const Tensor& out_len) {
      bind_decode_inputs(*s, x, out_len);
    };
    cap.read_hypotheses = [s, eng] {
      return read_emissions(*eng, s->em, s->batch);
    };
  }
  validate_graph(cap.graph);
  return cap;
}

Hypotheses replay_decode(CapturedDecoder& captured, const Tensor& x,
                         const Tensor& out_len) {
  if (!captured.engine || !captured.bind_inputs) {
    throw StateError("captured decoder is not initialized");
  }
  captured.bind_inputs(x, out_len);
  captured.engine->begin_region("decode");
  captured.engine->replay(captured.graph, "decode_graph");
  captured.engine->end_region("decode");
  return captured.read_hypotheses();
}

int64_t decode_joint_evals(const Engine& engine) {
  return engine.device_exec_count("argmax_kv");
}

// ---------------------------------------------------------------------------
// Reference decoders
// ---------------------------------------------------------------------------

namespace {

void check_reference_inputs(const DecoderModel& model, const Tensor& features,
                            int out_len, int max_symbols) {
  if (features.rank() != 2 || features.dim(1) != model.feature_dim()) {
    throw DimensionError("reference decode expects [frames, feature_dim]");
  }
  if (out_len < 0 || out_len > features.dim(0)) {
    throw DimensionError("out_len outside [0, frames]");
  }
  if (max_symbols < 1) throw ValueError("max_symbols must be >= 1");
}

void copy_feature_row(const Tensor& features, int t, Tensor& f) {
  const int64_t width = features.dim(1);
  std::copy_n(&features.f32()[static_cast<int64_t>(t) * width], width,
              f.f32().data());
}

}  // namespace

Hypothesis scalar_reference_decode(const DecoderModel& model,
                                   const Tensor& features, int out_len,
                                   int max_symbols) {
  check_reference_inputs(model, features, out_len, max_symbols);
  const int width = model.state_width();
  const int32_t blank = model.blank_index();
  Tensor hidden(Dtype::Float32, {1, width});
  Tensor h_prime(Dtype::Float32, {1, width});
  Tensor last_label = Tensor::from_ints({blank}, {1});
  Tensor f(Dtype::Float32, {1, features.dim(1)});
  Tensor logp(Dtype::Float32, {1, model.vocab_size() + 1});
  Tensor ki(Dtype::Int32, {1});
  Tensor vi(Dtype::Float32, {1});
  Hypothesis hyp;
  for (int t = 0; t < out_len; ++t) {
    copy_feature_row(features, t, f);
    for (int sym = 0; sym < max_symbols; ++sym) {
      model.run_prediction(last_label, hidden, h_prime);
      model.run_joint(f, h_prime, logp);
      argmax_last_into(logp, ki, vi);
      const int32_t k = ki.i32()[0];
      if (k == blank) break;
      hyp.tokens.push_back(k);
      hyp.frames.push_back(t);
      hyp.scores.push_back(vi.f32()[0]);
      last_label.i32()[0] = k;
      hidden.assign(h_prime);
    }
  }
  for (float sc : hyp.scores) hyp.total_score += static_cast<double>(sc);
  return hyp;
}

Hypothesis scalar_reference_decode_tdt(const DecoderModel& model,
                                       const Tensor& features, int out_len,
                                       int max_symbols) {
  check_reference_inputs(model, features, out_len, max_symbols);
  if (!model.has_duration_head()) {
    throw StateError("duration-head reference decode needs a duration head");
  }
  const auto& durations = model.durations();
  const int width = model.state_width();
  const int32_t blank = model.blank_index();
  Tensor hidden(Dtype::Float32, {1, width});
  Tensor h_prime(Dtype::Float32, {1, width});
  Tensor last_label = Tensor::from_ints({blank}, {1});
  Tensor f(Dtype::Float32, {1, features.dim(1)});
  Tensor logp(Dtype::Float32, {1, model.vocab_size() + 1});
  Tensor dur_logp(Dtype::Float32, {1, static_cast<int64_t>(durations.size())});
  Tensor ki(Dtype::Int32, {1});
  Tensor vi(Dtype::Float32, {1});
  Tensor di(Dtype::Int32, {1});
  Tensor dv(Dtype::Float32, {1});
  Hypothesis hyp;
  int t = 0;
  int u = 0;
  while (t < out_len) {
    copy_feature_row(features, t, f);
    model.run_prediction(last_label, hidden, h_prime);
    model.run_joint_tdt(f, h_prime, logp, dur_logp);
    argmax_last_into(logp, ki, vi);
    argmax_last_into(dur_logp, di, dv);
    const int32_t k = ki.i32()[0];
    const int32_t d = durations[static_cast<size_t>(di.i32()[0])];
    if (k != blank) {
      hyp.tokens.push_back(k);
      hyp.frames.push_back(t);
      hyp.scores.push_back(vi.f32()[0]);
      last_label.i32()[0] = k;
      hidden.assign(h_prime);
      u += 1;
      if (d > 0) {
        t += d;
        u = 0;
      } else if (u == max_symbols) {
        t += 1;
        u = 0;
      }
    } else {
      t += std::max<int32_t>(d, 1);
      u = 0;
    }
  }
  for (float sc : hyp.scores) hyp.total_score += static_cast<double>(sc);
  return hyp;
}

Tensor slice_element(const Tensor& x, int b) {
  if (x.rank() != 3) throw DimensionError("slice_element expects rank 3");
  const int64_t frames = x.dim(1), width = x.dim(2);
  Tensor out(Dtype::Float32, {frames, width});
  std::copy_n(&x.f32()[static_cast<int64_t>(b) * frames * width],
              frames * width, out.f32().data());
  return out;
}

// ---------------------------------------------------------------------------
// Hypothesis files
// ---------------------------------------------------------------------------

void write_hypotheses_jsonl(const std::string& path,
                            const std::vector<std::string>& ids,
                            const Hypotheses& hyps) {
  if (ids.size() != hyps.size()) {
    throw ValueError("hypothesis id/record count mismatch");
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  for (size_t i = 0; i < hyps.size(); ++i) {
    json j;
    j["id"] = ids[i];
    j["tokens"] = hyps[i].tokens;
    j["frames"] = hyps[i].frames;
    j["scores"] = hyps[i].scores;
    j["total_score"] = hyps[i].total_score;
    os << j.dump() << "\n";
  }
}

std::vector<std::pair<std::string, Hypothesis>> read_hypotheses_jsonl(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::vector<std::pair<std::string, Hypothesis>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw IoError("invalid hypothesis record in " + path);
    try {
      Hypothesis h;
      h.tokens = j.at("tokens").get<std::vector<int32_t>>();
      h.frames = j.at("frames").get<std::vector<int32_t>>();
      h.scores = j.at("scores").get<std::vector<float>>();
      h.total_score = j.at("total_score").get<double>();
      out.emplace_back(j.at("id").get<std::string>(), std::move(h));
    } catch (const json::exception& e) {
      throw IoError("invalid hypothesis record: " + std::string(e.what()));
    }
  }
  return out;
}

}  // namespace rnntsim
