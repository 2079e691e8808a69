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
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rnntsim/tensor.hpp"

namespace rnntsim {

/// Simulated host/device costs, all in microseconds.
/// Defaults reproduce a 5us average inter-launch gap against 1us kernels.
struct LatencyConfig {
  double launch_latency_us = 3.0;
  double host_overhead_per_launch_us = 2.0;
  double d2h_sync_latency_us = 1.0;
  double default_kernel_runtime_us = 1.0;
  double graph_launch_latency_us = 3.0;
  double per_node_device_overhead_us = 0.0;

  void validate() const;
};

/// Debug policy for host synchronizations outside capture:
/// allow them, count them as warnings, or fail fast.
enum class SyncPolicy { Allow = 0, Warn = 1, Error = 2 };

/// Reads RNNT_SIM_SYNC_DEBUG (0/1/2); unset or invalid means Allow.
SyncPolicy sync_policy_from_env();

using Buffer = std::shared_ptr<Tensor>;
inline Buffer make_buffer(Tensor t) { return std::make_shared<Tensor>(std::move(t)); }

/// Kernel payload: a pure function of its argument buffers. Bodies must not
/// touch host state; they run when the kernel executes, in eager order or
/// during graph replay.
using KernelBody = std::function<void(const std::vector<Buffer>&)>;

struct KernelSpec {
  std::string name;
  KernelBody body;
  std::optional<double> runtime_us;  // unset: default_kernel_runtime_us
};

/// Identifies one device-resident boolean written by set-conditional kernels.
using CondId = int32_t;

struct Graph;

struct KernelNode {
  KernelSpec spec;
  std::vector<Buffer> args;
  /// Set-conditional kernels copy args[0] (a bool scalar) into this flag.
  std::optional<CondId> sets_conditional;
};

struct WhileNode {
  CondId handle = -1;
  std::unique_ptr<Graph> body;
};

using Node = std::variant<KernelNode, WhileNode>;

/// Executable device program: a chain of kernels and while-conditionals, each
/// while owning a body subgraph. Structural rules:
///   - every while node is immediately preceded by a set-conditional kernel
///     for its handle;
///   - every while body ends with a set-conditional kernel for the same
///     handle, so the condition is refreshed before each re-check.
struct Graph {
  std::vector<Node> nodes;

  size_t size() const { return nodes.size(); }
};

/// Throws StructureError if the graph breaks the conditional-node rules.
void validate_graph(const Graph& g);

enum class EventKind {
  host_launch,
  host_overhead,
  host_sync,
  graph_launch,
  device_exec,
};

std::string_view event_kind_name(EventKind k);

struct TimelineEvent {
  EventKind kind;
  std::string name;
  double start_us = 0.0;
  double end_us = 0.0;
  /// Loop-condition polls in eager mode; excluded from strict sync counts.
  bool permitted = false;
};

struct TimingReport {
  double span_us = 0.0;
  double host_busy_us = 0.0;
  double device_busy_us = 0.0;
  double idle_fraction = 0.0;
  int64_t num_kernels = 0;
  int64_t num_syncs = 0;
  int64_t num_permitted_syncs = 0;
  int64_t num_graph_launches = 0;
};

/// Flat key/value JSON rendering.
std::string timing_report_json(const TimingReport& r);

/// One simulated machine: a host issuing work and a device executing it.
///
/// Modes: eager (launches execute, clocks advance) and capturing (launches
/// are recorded into a graph at zero simulated cost). Host synchronization is
/// disallowed during capture. Not safe to share across threads; independent
/// engines may run concurrently.
class Engine : public SyncTracker {
 public:
  explicit Engine(LatencyConfig cfg = {}, SyncPolicy policy = SyncPolicy::Allow);

  const LatencyConfig& config() const { return cfg_; }
  SyncPolicy sync_policy() const { return policy_; }
  void set_sync_policy(SyncPolicy p) { policy_ = p; }
  void set_max_while_iterations(int64_t cap);

  // -- issuing work --------------------------------------------------------

  /// Eager: host pays launch latency plus per-launch overhead, device runs
  /// the body at max(launch end, device free). Capture: appends a node.
  void launch_kernel(const KernelSpec& spec, std::vector<Buffer> args);

  /// Blocks the host until the device drains, then charges d2h latency and
  /// returns a host copy. One strict host sync. Fails during capture.
  Tensor copy_to_host(const Buffer& buf);

  /// Reads a device-resident bool scalar for loop control in eager mode.
  /// Costs the same as a d2h sync but counts as a permitted sync only.
  bool poll_condition(const Buffer& cond);

  /// Sized masked assignment: one strict host sync, then the select runs as a
  /// regular kernel. Same final dest as where_select(mask, src, dest, dest).
  void masked_assign_sizeful_launched(Buffer dest, Buffer mask, Buffer src);

  /// SyncTracker hook used by the sync-requiring tensor operations.
  void host_sync(std::string_view what) override;

  // -- capture -------------------------------------------------------------

  void begin_capture();
  Graph end_capture();
  bool capturing() const { return mode_ == Mode::Capturing; }

  /// Opens a while conditional during capture: appends a set-conditional
  /// kernel reading `cond`, then a while node, and redirects capture into the
  /// node's body until the matching while_exit.
  void while_enter(Buffer cond);
  /// Appends the trailing set-conditional kernel and restores the parent
  /// capture target.
  void while_exit();

  // -- replay --------------------------------------------------------------

  /// Launches a whole graph: the host is busy for graph_launch_latency_us
  /// once; the device executes nodes back to back, handling while nodes
  /// autonomously. Kernel bodies run with the exact eager numerics.
  void replay(const Graph& g, std::string_view name = "graph");

  // -- timeline ------------------------------------------------------------

  void begin_region(const std::string& name);
  /// Closes the region at max(host time, device drain) and moves the host
  /// clock there, so following host work lies outside the measured span.
  void end_region(const std::string& name);
  /// Stats over the most recent closed region with this name.
  TimingReport timeline_stats(const std::string& region) const;
  std::vector<TimingReport> timeline_stats_all(const std::string& region) const;

  const std::vector<TimelineEvent>& events() const { return events_; }
  /// CSV rows: kind,name,start_us,end_us.
  void export_timeline_csv(std::ostream& os) const;

  double host_time_us() const { return host_time_; }
  double device_free_us() const { return device_free_; }

  int64_t sync_count() const { return sync_count_; }
  int64_t permitted_sync_count() const { return permitted_sync_count_; }
  int64_t warned_sync_count() const { return warned_sync_count_; }
  int64_t kernel_launch_count() const { return kernel_launch_count_; }
  int64_t graph_launch_count() const { return graph_launch_count_; }

  /// Count of device_exec events whose kernel name matches exactly.
  int64_t device_exec_count(std::string_view kernel_name) const;

 private:
  enum class Mode { Eager, Capturing };

  struct RegionSpan {
    std::string name;
    double start_us = 0.0;
    double end_us = 0.0;
    bool open = true;
  };

  struct CaptureLevel {
    Graph* target;
    CondId handle;  // -1 at the root
    Buffer cond;
  };

  KernelSpec set_conditional_spec() const;
  double sync_until(std::string_view what, bool permitted);
  void exec_node_device(const KernelNode& node, double& device_cursor);
  void exec_graph_device(const Graph& g, double& device_cursor);
  TimingReport stats_for_span(double start, double end) const;

  LatencyConfig cfg_;
  SyncPolicy policy_;
  Mode mode_ = Mode::Eager;

  double host_time_ = 0.0;
  double device_free_ = 0.0;

  Graph capture_root_;
  std::vector<CaptureLevel> capture_stack_;

  std::vector<uint8_t> cond_values_;
  int64_t max_while_iterations_ = 1'000'000;

  std::vector<TimelineEvent> events_;
  std::vector<RegionSpan> regions_;

  int64_t sync_count_ = 0;
  int64_t permitted_sync_count_ = 0;
  int64_t warned_sync_count_ = 0;
  int64_t kernel_launch_count_ = 0;
  int64_t graph_launch_count_ = 0;
};

/// Loop helper shared by decode programs: under capture this opens a while
/// conditional around one recording pass of `body`; in eager mode it drives
/// the loop from the host by polling the condition buffer.
inline void run_while(Engine& engine, const Buffer& cond,
                      const std::function<void()>& body) {
  if (engine.capturing()) {
    engine.while_enter(cond);
    body();
    engine.while_exit();
  } else {
    while (engine.poll_condition(cond)) body();
  }
}

}  // namespace rnntsim
