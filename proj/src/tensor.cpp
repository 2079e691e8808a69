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
#include "rnntsim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace rnntsim {

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw DimensionError("negative extent");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void check_finite(std::span<const float> data) {
  for (float v : data) {
    if (!std::isfinite(v)) throw ValueError("non-finite float payload");
  }
}

}  // namespace

std::string_view dtype_name(Dtype d) {
  switch (d) {
    case Dtype::Float32: return "float32";
    case Dtype::Int32: return "int32";
    case Dtype::Bool: return "bool";
  }
  return "?";
}

size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::Float32: return 4;
    case Dtype::Int32: return 4;
    case Dtype::Bool: return 1;
  }
  return 0;
}

Tensor::Tensor(Dtype dtype, std::vector<int64_t> shape)
    : dtype_(dtype), shape_(std::move(shape)) {
  numel_ = shape_numel(shape_);
  switch (dtype_) {
    case Dtype::Float32: data_ = std::vector<float>(numel_, 0.0f); break;
    case Dtype::Int32: data_ = std::vector<int32_t>(numel_, 0); break;
    case Dtype::Bool: data_ = std::vector<uint8_t>(numel_, 0); break;
  }
}

Tensor Tensor::zeros(Dtype dtype, std::vector<int64_t> shape) {
  return Tensor(dtype, std::move(shape));
}

Tensor Tensor::full(Dtype dtype, std::vector<int64_t> shape, double value) {
  Tensor t(dtype, std::move(shape));
  t.fill_with(value);
  return t;
}

Tensor Tensor::from_floats(std::vector<float> data, std::vector<int64_t> shape,
                           bool checked) {
  if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
    throw DimensionError("payload length does not match extents " +
                         shape_str(shape));
  }
  if (checked) check_finite(data);
  Tensor t;
  t.dtype_ = Dtype::Float32;
  t.shape_ = std::move(shape);
  t.numel_ = static_cast<int64_t>(data.size());
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::from_ints(std::vector<int32_t> data, std::vector<int64_t> shape) {
  if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
    throw DimensionError("payload length does not match extents " +
                         shape_str(shape));
  }
  Tensor t;
  t.dtype_ = Dtype::Int32;
  t.shape_ = std::move(shape);
  t.numel_ = static_cast<int64_t>(data.size());
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::from_bools(std::vector<uint8_t> data, std::vector<int64_t> shape) {
  if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
    throw DimensionError("payload length does not match extents " +
                         shape_str(shape));
  }
  for (uint8_t& b : data) b = b ? 1 : 0;
  Tensor t;
  t.dtype_ = Dtype::Bool;
  t.shape_ = std::move(shape);
  t.numel_ = static_cast<int64_t>(data.size());
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::scalar_f32(float v) { return from_floats({v}, {}); }
Tensor Tensor::scalar_i32(int32_t v) { return from_ints({v}, {}); }
Tensor Tensor::scalar_bool(bool v) {
  return from_bools({static_cast<uint8_t>(v ? 1 : 0)}, {});
}

int64_t Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) throw DimensionError("dim index out of range");
  return shape_[static_cast<size_t>(i)];
}

void Tensor::check_dtype(Dtype want) const {
  if (dtype_ != want) {
    throw DtypeError(std::string("expected ") + std::string(dtype_name(want)) +
                     ", got " + std::string(dtype_name(dtype_)));
  }
}

std::span<float> Tensor::f32() {
  check_dtype(Dtype::Float32);
  return std::get<std::vector<float>>(data_);
}
std::span<const float> Tensor::f32() const {
  check_dtype(Dtype::Float32);
  return std::get<std::vector<float>>(data_);
}
std::span<int32_t> Tensor::i32() {
  check_dtype(Dtype::Int32);
  return std::get<std::vector<int32_t>>(data_);
}
std::span<const int32_t> Tensor::i32() const {
  check_dtype(Dtype::Int32);
  return std::get<std::vector<int32_t>>(data_);
}
std::span<uint8_t> Tensor::b8() {
  check_dtype(Dtype::Bool);
  return std::get<std::vector<uint8_t>>(data_);
}
std::span<const uint8_t> Tensor::b8() const {
  check_dtype(Dtype::Bool);
  return std::get<std::vector<uint8_t>>(data_);
}

void Tensor::fill_with(double value) {
  switch (dtype_) {
    case Dtype::Float32:
      std::ranges::fill(std::get<std::vector<float>>(data_),
                        static_cast<float>(value));
      break;
    case Dtype::Int32:
      std::ranges::fill(std::get<std::vector<int32_t>>(data_),
                        static_cast<int32_t>(value));
      break;
    case Dtype::Bool:
      std::ranges::fill(std::get<std::vector<uint8_t>>(data_),
                        static_cast<uint8_t>(value != 0.0 ? 1 : 0));
      break;
  }
}

void Tensor::assign(const Tensor& src) {
  if (src.dtype_ != dtype_) throw DtypeError("assign across dtypes");
  shape_ = src.shape_;
  numel_ = src.numel_;
  data_ = src.data_;
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
  switch (dtype_) {
    case Dtype::Float32: {
      auto a = f32();
      auto b = other.f32();
      return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
    }
    case Dtype::Int32: {
      auto a = i32();
      auto b = other.i32();
      return std::memcmp(a.data(), b.data(), a.size() * sizeof(int32_t)) == 0;
    }
    case Dtype::Bool: {
      auto a = b8();
      auto b = other.b8();
      return std::memcmp(a.data(), b.data(), a.size()) == 0;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands");
  }
  Tensor out(Dtype::Float32, {a.dim(0), b.dim(1)});
  matmul_into(a, b, out);
  return out;
}

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands");
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw DimensionError("matmul inner extents differ");
  if (out.rank() != 2 || out.dim(0) != m || out.dim(1) != n) {
    throw DimensionError("matmul output shape mismatch");
  }
  auto pa = a.f32();
  auto pb = b.f32();
  auto po = out.f32();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t kk = 0; kk < k; ++kk) {
        acc += pa[i * k + kk] * pb[kk * n + j];
      }
      po[i * n + j] = acc;
    }
  }
}

ArgmaxResult argmax_last(const Tensor& a) {
  if (a.rank() < 1) throw DimensionError("argmax_last needs rank >= 1");
  std::vector<int64_t> out_shape(a.shape().begin(), a.shape().end() - 1);
  ArgmaxResult r{Tensor(Dtype::Int32, out_shape), Tensor(a.dtype(), out_shape)};
  argmax_last_into(a, r.indices, r.values);
  return r;
}

void argmax_last_into(const Tensor& a, Tensor& indices, Tensor& values) {
  if (a.rank() < 1) throw DimensionError("argmax_last needs rank >= 1");
  const int64_t n = a.shape().back();
  if (n < 1) throw DimensionError("argmax_last over empty last dimension");
  const int64_t rows = a.numel() / n;
  if (indices.numel() != rows || values.numel() != rows) {
    throw DimensionError("argmax_last output size mismatch");
  }
  auto pi = indices.i32();
  if (a.dtype() == Dtype::Float32) {
    auto pa = a.f32();
    auto pv = values.f32();
    for (int64_t r = 0; r < rows; ++r) {
      int64_t best = 0;
      float best_v = pa[r * n];
      for (int64_t j = 1; j < n; ++j) {
        float v = pa[r * n + j];
        if (v > best_v) {
          best_v = v;
          best = j;
        }
      }
      pi[r] = static_cast<int32_t>(best);
      pv[r] = best_v;
    }
  } else if (a.dtype() == Dtype::Int32) {
    auto pa = a.i32();
    auto pv = values.i32();
    for (int64_t r = 0; r < rows; ++r) {
      int64_t best = 0;
      int32_t best_v = pa[r * n];
      for (int64_t j = 1; j < n; ++j) {
        int32_t v = pa[r * n + j];
        if (v > best_v) {
          best_v = v;
          best = j;
        }
      }
      pi[r] = static_cast<int32_t>(best);
      pv[r] = best_v;
    }
  } else {
    throw DtypeError("argmax_last on bool");
  }
}

namespace {

// Element access that treats one-element tensors as broadcast scalars.
template <typename Span>
auto pick(const Span& s, int64_t i, bool scalar) {
  return scalar ? s[0] : s[i];
}

}  // namespace

void where_select(const Tensor& mask, const Tensor& a, const Tensor& b,
                  Tensor& dest) {
  if (mask.dtype() != Dtype::Bool) throw DtypeError("where_select mask must be bool");
  if (!mask.same_shape(dest)) {
    throw DimensionError("where_select mask/dest shape mismatch");
  }
  const bool a_scalar = a.numel() == 1 && !a.same_shape(dest);
  const bool b_scalar = b.numel() == 1 && !b.same_shape(dest);
  if (!a_scalar && !a.same_shape(dest)) {
    throw DimensionError("where_select operand a shape mismatch");
  }
  if (!b_scalar && !b.same_shape(dest)) {
    throw DimensionError("where_select operand b shape mismatch");
  }
  if (a.dtype() != dest.dtype() || b.dtype() != dest.dtype()) {
    throw DtypeError("where_select operand dtype mismatch");
  }
  auto pm = mask.b8();
  const int64_t n = dest.numel();
  switch (dest.dtype()) {
    case Dtype::Float32: {
      auto pa = a.f32(); auto pb = b.f32(); auto pd = dest.f32();
      for (int64_t i = 0; i < n; ++i) {
        pd[i] = pm[i] ? pick(pa, i, a_scalar) : pick(pb, i, b_scalar);
      }
      break;
    }
    case Dtype::Int32: {
      auto pa = a.i32(); auto pb = b.i32(); auto pd = dest.i32();
      for (int64_t i = 0; i < n; ++i) {
        pd[i] = pm[i] ? pick(pa, i, a_scalar) : pick(pb, i, b_scalar);
      }
      break;
    }
    case Dtype::Bool: {
      auto pa = a.b8(); auto pb = b.b8(); auto pd = dest.b8();
      for (int64_t i = 0; i < n; ++i) {
        pd[i] = pm[i] ? pick(pa, i, a_scalar) : pick(pb, i, b_scalar);
      }
      break;
    }
  }
}

void where_select_rows(const Tensor& mask, const Tensor& a, const Tensor& b,
                       Tensor& dest) {
  if (mask.dtype() != Dtype::Bool || mask.rank() != 1) {
    throw DtypeError("where_select_rows mask must be bool [rows]");
  }
  if (!a.same_shape(dest) || !b.same_shape(dest)) {
    throw DimensionError("where_select_rows operand shape mismatch");
  }
  if (dest.rank() < 2 || dest.dim(0) != mask.numel()) {
    throw DimensionError("where_select_rows destination/mask mismatch");
  }
  const int64_t rows = mask.numel();
  const int64_t width = dest.numel() / rows;
  auto pm = mask.b8();
  switch (dest.dtype()) {
    case Dtype::Float32: {
      auto pa = a.f32(); auto pb = b.f32(); auto pd = dest.f32();
      for (int64_t i = 0; i < rows; ++i) {
        const auto* src = pm[i] ? &pa[i * width] : &pb[i * width];
        std::copy_n(src, width, &pd[i * width]);
      }
      break;
    }
    case Dtype::Int32: {
      auto pa = a.i32(); auto pb = b.i32(); auto pd = dest.i32();
      for (int64_t i = 0; i < rows; ++i) {
        const auto* src = pm[i] ? &pa[i * width] : &pb[i * width];
        std::copy_n(src, width, &pd[i * width]);
      }
      break;
    }
    case Dtype::Bool: {
      auto pa = a.b8(); auto pb = b.b8(); auto pd = dest.b8();
      for (int64_t i = 0; i < rows; ++i) {
        const auto* src = pm[i] ? &pa[i * width] : &pb[i * width];
        std::copy_n(src, width, &pd[i * width]);
      }
      break;
    }
  }
}

void masked_assign_sizeful(Tensor& dest, const Tensor& mask, const Tensor& src,
                           SyncTracker& sync) {
  if (!mask.same_shape(dest) || !src.same_shape(dest)) {
    throw DimensionError("masked_assign_sizeful shape mismatch");
  }
  // The host must size the gathered result before the copy can be issued.
  sync.host_sync("masked_assign_sizeful");
  where_select(mask, src, dest, dest);
}

template <typename T>
T scalar_item(const Tensor& a, SyncTracker& sync) {
  if (a.numel() != 1) throw DimensionError("scalar_item on non-scalar tensor");
  sync.host_sync("scalar_item");
  if constexpr (std::is_same_v<T, float>) {
    return a.f32()[0];
  } else if constexpr (std::is_same_v<T, int32_t>) {
    return a.i32()[0];
  } else {
    static_assert(std::is_same_v<T, bool>, "unsupported scalar type");
    return a.b8()[0] != 0;
  }
}

template float scalar_item<float>(const Tensor&, SyncTracker&);
template int32_t scalar_item<int32_t>(const Tensor&, SyncTracker&);
template bool scalar_item<bool>(const Tensor&, SyncTracker&);

Tensor any_true(const Tensor& mask) {
  Tensor out(Dtype::Bool, {});
  any_true_into(mask, out);
  return out;
}

void any_true_into(const Tensor& mask, Tensor& out) {
  if (mask.dtype() != Dtype::Bool) throw DtypeError("any_true on non-bool");
  if (out.numel() != 1) throw DimensionError("any_true output must be scalar");
  uint8_t any = 0;
  for (uint8_t b : mask.b8()) {
    if (b) {
      any = 1;
      break;
    }
  }
  out.b8()[0] = any;
}

Tensor log_softmax(const Tensor& v) {
  Tensor out(Dtype::Float32, v.shape());
  log_softmax_into(v, out);
  return out;
}

void log_softmax_into(const Tensor& v, Tensor& out) {
  if (v.rank() < 1) throw DimensionError("log_softmax needs rank >= 1");
  if (!v.same_shape(out)) throw DimensionError("log_softmax output shape mismatch");
  const int64_t n = v.shape().back();
  if (n < 1) throw DimensionError("log_softmax over empty last dimension");
  const int64_t rows = v.numel() / n;
  auto pv = v.f32();
  auto po = out.f32();
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = &pv[r * n];
    float m = row[0];
    for (int64_t j = 1; j < n; ++j) m = std::max(m, row[j]);
    float sum = 0.0f;
    for (int64_t j = 0; j < n; ++j) sum += std::exp(row[j] - m);
    const float lse = m + std::log(sum);
    for (int64_t j = 0; j < n; ++j) po[r * n + j] = row[j] - lse;
  }
}

Tensor embedding_lookup(const Tensor& table, const Tensor& ids) {
  if (table.rank() != 2) throw DimensionError("embedding table must be rank 2");
  Tensor out(Dtype::Float32, {ids.numel(), table.dim(1)});
  embedding_lookup_into(table, ids, out);
  return out;
}

void embedding_lookup_into(const Tensor& table, const Tensor& ids, Tensor& out) {
  if (table.rank() != 2) throw DimensionError("embedding table must be rank 2");
  const int64_t rows = table.dim(0), width = table.dim(1);
  const int64_t n = ids.numel();
  if (out.numel() != n * width) throw DimensionError("embedding output mismatch");
  auto pt = table.f32();
  auto pi = ids.i32();
  auto po = out.f32();
  for (int64_t i = 0; i < n; ++i) {
    const int32_t id = pi[i];
    if (id < 0 || id >= rows) {
      throw IndexError("embedding id " + std::to_string(id) + " out of range [0," +
                       std::to_string(rows) + ")");
    }
    std::memcpy(&po[i * width], &pt[static_cast<int64_t>(id) * width],
                static_cast<size_t>(width) * sizeof(float));
  }
}

// ---------------------------------------------------------------------------
// Tensor file format
// ---------------------------------------------------------------------------

namespace {

void put_u64le(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_u32le(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint64_t get_u64le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("truncated tensor file");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

uint32_t get_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("truncated tensor file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("TNSR", 4);
  const uint16_t version = 1;
  os.put(static_cast<char>(version & 0xff));
  os.put(static_cast<char>(version >> 8));
  os.put(static_cast<char>(static_cast<uint8_t>(t.dtype())));
  os.put(static_cast<char>(static_cast<uint8_t>(t.rank())));
  for (int64_t d : t.shape()) put_u64le(os, static_cast<uint64_t>(d));
  switch (t.dtype()) {
    case Dtype::Float32:
      for (float v : t.f32()) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        put_u32le(os, u);
      }
      break;
    case Dtype::Int32:
      for (int32_t v : t.i32()) put_u32le(os, static_cast<uint32_t>(v));
      break;
    case Dtype::Bool:
      for (uint8_t v : t.b8()) os.put(static_cast<char>(v));
      break;
  }
  if (!os) throw IoError("tensor write failed");
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  write_tensor(os, t);
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNSR", 4) != 0) {
    throw IoError("bad tensor magic");
  }
  const int v0 = is.get(), v1 = is.get();
  if (v0 < 0 || v1 < 0) throw IoError("truncated tensor file");
  const uint16_t version = static_cast<uint16_t>(v0 | (v1 << 8));
  if (version != 1) throw IoError("unsupported tensor version");
  const int dt = is.get();
  const int rank = is.get();
  if (dt < 0 || dt > 2 || rank < 0) throw IoError("bad tensor header");
  std::vector<int64_t> shape(static_cast<size_t>(rank));
  for (auto& d : shape) d = static_cast<int64_t>(get_u64le(is));
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  switch (static_cast<Dtype>(dt)) {
    case Dtype::Float32: {
      std::vector<float> data(static_cast<size_t>(n));
      for (auto& v : data) {
        uint32_t u = get_u32le(is);
        std::memcpy(&v, &u, 4);
      }
      return Tensor::from_floats(std::move(data), std::move(shape),
                                 /*checked=*/false);
    }
    case Dtype::Int32: {
      std::vector<int32_t> data(static_cast<size_t>(n));
      for (auto& v : data) v = static_cast<int32_t>(get_u32le(is));
      return Tensor::from_ints(std::move(data), std::move(shape));
    }
    case Dtype::Bool: {
      std::vector<uint8_t> data(static_cast<size_t>(n));
      for (auto& v : data) {
        int c = is.get();
        if (c < 0) throw IoError("truncated tensor file");
        v = static_cast<uint8_t>(c);
      }
      return Tensor::from_bools(std::move(data), std::move(shape));
    }
  }
  throw IoError("bad tensor dtype");
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  return read_tensor(is);
}

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

uint64_t Rng::next_u64() {
  // splitmix64 (Steele, Lea, Flood 2014), public-domain reference constants.
  uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

float Rng::uniform(float lo, float hi) {
  const float u = static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
  return lo + (hi - lo) * u;
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int32_t Rng::uniform_int(int32_t n) {
  if (n <= 0) throw ValueError("uniform_int needs n > 0");
  return static_cast<int32_t>(next_u64() % static_cast<uint64_t>(n));
}

}  // namespace rnntsim
