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
#include "rnntsim/engine.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <sstream>

namespace rnntsim {

void LatencyConfig::validate() const {
  const double vals[] = {launch_latency_us,       host_overhead_per_launch_us,
                         d2h_sync_latency_us,     default_kernel_runtime_us,
                         graph_launch_latency_us, per_node_device_overhead_us};
  for (double v : vals) {
    if (!(v >= 0.0)) throw ValueError("latency values must be >= 0");
  }
}

SyncPolicy sync_policy_from_env() {
  const char* v = std::getenv("RNNT_SIM_SYNC_DEBUG");
  if (!v) return SyncPolicy::Allow;
  if (v[0] == '1' && v[1] == '\0') return SyncPolicy::Warn;
  if (v[0] == '2' && v[1] == '\0') return SyncPolicy::Error;
  return SyncPolicy::Allow;
}

std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::host_launch: return "host_launch";
    case EventKind::host_overhead: return "host_overhead";
    case EventKind::host_sync: return "host_sync";
    case EventKind::graph_launch: return "graph_launch";
    case EventKind::device_exec: return "device_exec";
  }
  return "?";
}

std::string timing_report_json(const TimingReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"span_us\": %.6f, \"host_busy_us\": %.6f, "
                "\"device_busy_us\": %.6f, \"idle_fraction\": %.6f, "
                "\"num_kernels\": %lld, \"num_syncs\": %lld, "
                "\"num_permitted_syncs\": %lld, \"num_graph_launches\": %lld}",
                r.span_us, r.host_busy_us, r.device_busy_us, r.idle_fraction,
                static_cast<long long>(r.num_kernels),
                static_cast<long long>(r.num_syncs),
                static_cast<long long>(r.num_permitted_syncs),
                static_cast<long long>(r.num_graph_launches));
  return buf;
}

// ---------------------------------------------------------------------------
// Graph validation
// ---------------------------------------------------------------------------

namespace {

bool is_set_conditional_for(const Node& n, CondId handle) {
  const auto* k = std::get_if<KernelNode>(&n);
  return k && k->sets_conditional && *k->sets_conditional == handle;
}

void validate_rec(const Graph& g, int depth) {
  if (depth > 64) throw StructureError("graph nesting too deep");
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    const auto* w = std::get_if<WhileNode>(&g.nodes[i]);
    if (!w) continue;
    if (i == 0 || !is_set_conditional_for(g.nodes[i - 1], w->handle)) {
      throw StructureError(
          "while node is not immediately preceded by a set-conditional kernel "
          "for its handle");
    }
    if (!w->body || w->body->nodes.empty() ||
        !is_set_conditional_for(w->body->nodes.back(), w->handle)) {
      throw StructureError(
          "while body does not end with a set-conditional kernel for its "
          "handle");
    }
    validate_rec(*w->body, depth + 1);
  }
}

uint8_t read_bool_scalar(const Buffer& b) {
  if (!b || b->numel() != 1) {
    throw DimensionError("conditional buffer must be a one-element tensor");
  }
  return b->b8()[0];
}

}  // namespace

void validate_graph(const Graph& g) { validate_rec(g, 0); }

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

Engine::Engine(LatencyConfig cfg, SyncPolicy policy)
    : cfg_(cfg), policy_(policy) {
  cfg_.validate();
}

void Engine::set_max_while_iterations(int64_t cap) {
  if (cap < 1) throw ValueError("while iteration cap must be >= 1");
  max_while_iterations_ = cap;
}

void Engine::launch_kernel(const KernelSpec& spec, std::vector<Buffer> args) {
  if (mode_ == Mode::Capturing) {
    capture_stack_.back().target->nodes.push_back(
        KernelNode{spec, std::move(args), std::nullopt});
    return;
  }
  const double t = host_time_;
  const double launch_end = t + cfg_.launch_latency_us;
  events_.push_back({EventKind::host_launch, spec.name, t, launch_end});
  host_time_ = launch_end + cfg_.host_overhead_per_launch_us;
  if (cfg_.host_overhead_per_launch_us > 0.0) {
    events_.push_back(
        {EventKind::host_overhead, spec.name, launch_end, host_time_});
  }
  spec.body(args);
  const double start = std::max(launch_end, device_free_);
  const double runtime = spec.runtime_us.value_or(cfg_.default_kernel_runtime_us);
  events_.push_back({EventKind::device_exec, spec.name, start, start + runtime});
  device_free_ = start + runtime;
  ++kernel_launch_count_;
}

double Engine::sync_until(std::string_view what, bool permitted) {
  if (mode_ == Mode::Capturing) {
    throw CaptureViolationError(
        "host synchronization is disallowed during stream capture: " +
        std::string(what));
  }
  if (!permitted) {
    if (policy_ == SyncPolicy::Error) {
      throw SyncPolicyError("host sync under sync debug policy 'error': " +
                            std::string(what));
    }
    if (policy_ == SyncPolicy::Warn) {
      ++warned_sync_count_;
      std::fprintf(stderr, "[rnntsim] warning: host sync: %.*s\n",
                   static_cast<int>(what.size()), what.data());
    }
  }
  const double start = host_time_;
  const double end = std::max(host_time_, device_free_) + cfg_.d2h_sync_latency_us;
  events_.push_back({EventKind::host_sync, std::string(what), start, end,
                     permitted});
  host_time_ = end;
  if (permitted) {
    ++permitted_sync_count_;
  } else {
    ++sync_count_;
  }
  return end;
}

void Engine::host_sync(std::string_view what) { sync_until(what, false); }

Tensor Engine::copy_to_host(const Buffer& buf) {
  if (!buf) throw ValueError("copy_to_host on null buffer");
  sync_until("copy_to_host", false);
  return *buf;
}

bool Engine::poll_condition(const Buffer& cond) {
  sync_until("poll_condition", true);
  return read_bool_scalar(cond) != 0;
}

void Engine::masked_assign_sizeful_launched(Buffer dest, Buffer mask,
                                            Buffer src) {
  const bool elementwise = dest->same_shape(*mask);
  const bool rowwise = !elementwise && mask->rank() == 1 &&
                       dest->rank() >= 2 && dest->dim(0) == mask->numel();
  if ((!elementwise && !rowwise) || !dest->same_shape(*src)) {
    throw DimensionError("masked_assign_sizeful shape mismatch");
  }
  host_sync("masked_assign_sizeful");
  launch_kernel({"masked_assign",
                 [elementwise](const std::vector<Buffer>& a) {
                   if (elementwise) {
                     where_select(*a[1], *a[2], *a[0], *a[0]);
                   } else {
                     where_select_rows(*a[1], *a[2], *a[0], *a[0]);
                   }
                 }},
                {std::move(dest), std::move(mask), std::move(src)});
}

// -- capture -----------------------------------------------------------------

void Engine::begin_capture() {
  if (mode_ != Mode::Eager) throw StateError("capture already in progress");
  mode_ = Mode::Capturing;
  capture_root_ = Graph{};
  capture_stack_ = {{&capture_root_, -1, nullptr}};
}

Graph Engine::end_capture() {
  if (mode_ != Mode::Capturing) throw StateError("no capture in progress");
  if (capture_stack_.size() != 1) {
    throw StructureError("end_capture with an open while context");
  }
  mode_ = Mode::Eager;
  capture_stack_.clear();
  return std::move(capture_root_);
}

KernelSpec Engine::set_conditional_spec() const {
  return {"set_conditional", [](const std::vector<Buffer>&) {}, std::nullopt};
}

void Engine::while_enter(Buffer cond) {
  if (mode_ != Mode::Capturing) {
    throw StateError("while context requires capture mode");
  }
  if (!cond || cond->numel() != 1 || cond->dtype() != Dtype::Bool) {
    throw DimensionError("while condition must be a bool scalar buffer");
  }
  const CondId handle = static_cast<CondId>(cond_values_.size());
  cond_values_.push_back(0);
  Graph* parent = capture_stack_.back().target;
  parent->nodes.push_back(KernelNode{set_conditional_spec(), {cond}, handle});
  parent->nodes.push_back(WhileNode{handle, std::make_unique<Graph>()});
  Graph* body = std::get<WhileNode>(parent->nodes.back()).body.get();
  capture_stack_.push_back({body, handle, std::move(cond)});
}

void Engine::while_exit() {
  if (mode_ != Mode::Capturing) {
    throw StateError("while context requires capture mode");
  }
  if (capture_stack_.size() < 2) {
    throw StructureError("while_exit without a matching while_enter");
  }
  auto& level = capture_stack_.back();
  level.target->nodes.push_back(
      KernelNode{set_conditional_spec(), {level.cond}, level.handle});
  capture_stack_.pop_back();
}

// -- replay ------------------------------------------------------------------

void Engine::exec_node_device(const KernelNode& node, double& device_cursor) {
  node.spec.body(node.args);
  if (node.sets_conditional) {
    cond_values_[static_cast<size_t>(*node.sets_conditional)] =
        read_bool_scalar(node.args.at(0));
  }
  const double runtime =
      node.spec.runtime_us.value_or(cfg_.default_kernel_runtime_us);
  events_.push_back({EventKind::device_exec, node.spec.name, device_cursor,
                     device_cursor + runtime});
  device_cursor += runtime + cfg_.per_node_device_overhead_us;
}

void Engine::exec_graph_device(const Graph& g, double& device_cursor) {
  for (const Node& n : g.nodes) {
    if (const auto* k = std::get_if<KernelNode>(&n)) {
      exec_node_device(*k, device_cursor);
      continue;
    }
    const auto& w = std::get<WhileNode>(n);
    int64_t iters = 0;
    while (cond_values_[static_cast<size_t>(w.handle)]) {
      if (++iters > max_while_iterations_) {
        throw RunawayLoopError("while node exceeded " +
                               std::to_string(max_while_iterations_) +
                               " iterations");
      }
      exec_graph_device(*w.body, device_cursor);
    }
  }
}

void Engine::replay(const Graph& g, std::string_view name) {
  if (mode_ != Mode::Eager) throw StateError("replay requires eager mode");
  validate_graph(g);
  const double t = host_time_;
  host_time_ = t + cfg_.graph_launch_latency_us;
  events_.push_back(
      {EventKind::graph_launch, std::string(name), t, host_time_});
  double cursor = std::max(host_time_, device_free_);
  exec_graph_device(g, cursor);
  device_free_ = cursor;
  ++graph_launch_count_;
}

// -- timeline ----------------------------------------------------------------

void Engine::begin_region(const std::string& name) {
  regions_.push_back({name, host_time_, 0.0, true});
}

void Engine::end_region(const std::string& name) {
  for (auto it = regions_.rbegin(); it != regions_.rend(); ++it) {
    if (it->open && it->name == name) {
      it->end_us = std::max(host_time_, device_free_);
      it->open = false;
      // Later host work starts after the region's device work has drained,
      // so readbacks do not bleed into the measured span.
      host_time_ = it->end_us;
      return;
    }
  }
  throw StateError("end_region without open region: " + name);
}

TimingReport Engine::stats_for_span(double start, double end) const {
  TimingReport r;
  r.span_us = std::max(0.0, end - start);
  for (const auto& e : events_) {
    const double overlap =
        std::max(0.0, std::min(end, e.end_us) - std::max(start, e.start_us));
    const bool starts_inside = e.start_us >= start && e.start_us < end;
    switch (e.kind) {
      case EventKind::device_exec:
        r.device_busy_us += overlap;
        if (starts_inside) ++r.num_kernels;
        break;
      case EventKind::host_sync:
        r.host_busy_us += overlap;
        if (starts_inside) {
          if (e.permitted) {
            ++r.num_permitted_syncs;
          } else {
            ++r.num_syncs;
          }
        }
        break;
      case EventKind::graph_launch:
        r.host_busy_us += overlap;
        if (starts_inside) ++r.num_graph_launches;
        break;
      case EventKind::host_launch:
      case EventKind::host_overhead:
        r.host_busy_us += overlap;
        break;
    }
  }
  r.idle_fraction =
      r.span_us > 0.0
          ? std::clamp(1.0 - r.device_busy_us / r.span_us, 0.0, 1.0)
          : 0.0;
  return r;
}

TimingReport Engine::timeline_stats(const std::string& region) const {
  for (auto it = regions_.rbegin(); it != regions_.rend(); ++it) {
    if (!it->open && it->name == region) {
      return stats_for_span(it->start_us, it->end_us);
    }
  }
  throw StateError("no closed region named " + region);
}

std::vector<TimingReport> Engine::timeline_stats_all(
    const std::string& region) const {
  std::vector<TimingReport> out;
  for (const auto& span : regions_) {
    if (!span.open && span.name == region) {
      out.push_back(stats_for_span(span.start_us, span.end_us));
    }
  }
  return out;
}

void Engine::export_timeline_csv(std::ostream& os) const {
  os << "kind,name,start_us,end_us\n";
  char buf[64];
  for (const auto& e : events_) {
    std::string name = e.name;
    for (char& c : name) {
      if (c == ',' || c == '\n') c = ' ';
    }
    os << event_kind_name(e.kind) << ',' << name << ',';
    std::snprintf(buf, sizeof(buf), "%.6f", e.start_us);
    os << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.6f", e.end_us);
    os << buf << '\n';
  }
}

int64_t Engine::device_exec_count(std::string_view kernel_name) const {
  int64_t n = 0;
  for (const auto& e : events_) {
    if (e.kind == EventKind::device_exec && e.name == kernel_name) ++n;
  }
  return n;
}

}  // namespace rnntsim
