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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rnntsim/errors.hpp"

namespace rnntsim {

enum class Dtype : uint8_t { Float32 = 0, Int32 = 1, Bool = 2 };

std::string_view dtype_name(Dtype d);
size_t dtype_size(Dtype d);

/// Dense row-major array. The only value type that flows through kernels.
/// Scalars are rank 0 (one element); an extent of 0 makes the tensor empty.
class Tensor {
 public:
  Tensor() : Tensor(Dtype::Float32, {}) {}
  Tensor(Dtype dtype, std::vector<int64_t> shape);

  static Tensor zeros(Dtype dtype, std::vector<int64_t> shape);
  static Tensor full(Dtype dtype, std::vector<int64_t> shape, double value);
  /// Checked constructors reject non-finite float payloads.
  static Tensor from_floats(std::vector<float> data, std::vector<int64_t> shape,
                            bool checked = true);
  static Tensor from_ints(std::vector<int32_t> data, std::vector<int64_t> shape);
  static Tensor from_bools(std::vector<uint8_t> data, std::vector<int64_t> shape);
  static Tensor scalar_f32(float v);
  static Tensor scalar_i32(int32_t v);
  static Tensor scalar_bool(bool v);

  Dtype dtype() const { return dtype_; }
  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const;
  int64_t numel() const { return numel_; }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::span<float> f32();
  std::span<const float> f32() const;
  std::span<int32_t> i32();
  std::span<const int32_t> i32() const;
  std::span<uint8_t> b8();
  std::span<const uint8_t> b8() const;

  void fill_with(double value);
  /// Overwrites data and shape from another tensor of the same dtype.
  void assign(const Tensor& src);

  bool bit_equal(const Tensor& other) const;

 private:
  Dtype dtype_;
  std::vector<int64_t> shape_;
  int64_t numel_ = 0;
  std::variant<std::vector<float>, std::vector<int32_t>, std::vector<uint8_t>> data_;

  void check_dtype(Dtype want) const;
};

/// Host-synchronization hook used by the sync-requiring operations.
/// The virtual device implements this to charge latency, count the sync and
/// enforce the capture and debug-policy rules; tests can use a plain counter.
class SyncTracker {
 public:
  virtual ~SyncTracker() = default;
  virtual void host_sync(std::string_view what) = 0;
};

// ---------------------------------------------------------------------------
// Operations. All reductions run in a fixed order so results are reproducible
// across eager, captured and reference execution paths.
// ---------------------------------------------------------------------------

/// [m,k] x [k,n] float32 product, accumulated in float32, k innermost.
Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out);

/// Per row of the last dimension: index of the maximum and its value.
/// Ties break toward the lowest index.
struct ArgmaxResult {
  Tensor indices;  // int32, shape = input shape minus last dim
  Tensor values;   // same dtype as input
};
ArgmaxResult argmax_last(const Tensor& a);
void argmax_last_into(const Tensor& a, Tensor& indices, Tensor& values);

/// dest[i] = mask[i] ? a[i] : b[i]. a and b may be one-element scalars.
/// No host interaction; callable inside capture.
void where_select(const Tensor& mask, const Tensor& a, const Tensor& b,
                  Tensor& dest);

/// Row-masked variant: dest[i, ...] = mask[i] ? a[i, ...] : b[i, ...], with
/// mask of shape [rows] selecting whole rows of rank >= 2 operands.
void where_select_rows(const Tensor& mask, const Tensor& a, const Tensor& b,
                       Tensor& dest);

/// Emulates gather-by-mask assignment semantics: the true-entry count must be
/// sized on the host, so every call records one host sync on the tracker.
/// Final dest matches where_select(mask, src, dest, dest).
void masked_assign_sizeful(Tensor& dest, const Tensor& mask, const Tensor& src,
                           SyncTracker& sync);

/// Reads a one-element tensor back to the host. Records one host sync.
template <typename T>
T scalar_item(const Tensor& a, SyncTracker& sync);

/// Device-resident reduction: true iff any element is true. Empty input is
/// false. Never syncs.
Tensor any_true(const Tensor& mask);
void any_true_into(const Tensor& mask, Tensor& out);

/// v - logsumexp(v) per row, max-subtracted for stability.
Tensor log_softmax(const Tensor& v);
void log_softmax_into(const Tensor& v, Tensor& out);

/// Row gather: out[i] = table[ids[i]]. ids must lie in [0, rows).
Tensor embedding_lookup(const Tensor& table, const Tensor& ids);
void embedding_lookup_into(const Tensor& table, const Tensor& ids, Tensor& out);

// ---------------------------------------------------------------------------
// Tensor file format, used repo-wide:
//   magic "TNSR", u16 version = 1, u8 dtype (0=float32, 1=int32, 2=bool),
//   u8 rank, rank x u64 little-endian extents, row-major little-endian payload.
// ---------------------------------------------------------------------------
void write_tensor(std::ostream& os, const Tensor& t);
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor(std::istream& is);
Tensor read_tensor_file(const std::string& path);

/// Deterministic PRNG with 64-bit state (splitmix64). The float mapping is
/// fixed: the top 24 bits of each draw select a point of [0, 1).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64();
  /// Uniform float in [lo, hi).
  float uniform(float lo, float hi);
  double uniform01();
  /// Uniform integer in [0, n).
  int32_t uniform_int(int32_t n);

 private:
  uint64_t state_;
};

}  // namespace rnntsim
