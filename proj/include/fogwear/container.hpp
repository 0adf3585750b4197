/*
 * Copyright 2026 The fogwear Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Binary model container shared by float parameter files and quantized
// models. Layout (all integers little-endian):
//
//   header   16 bytes  magic "FOGW", u16 version, u8 kind, u8 reserved,
//                      u32 meta_len, u32 tensor_count
//   meta     meta_len bytes of UTF-8 JSON (model spec; may be empty)
//   tensors  tensor_count records:
//              u16 key_len, key bytes, u8 dtype, u8 rank, u32 dims[rank]
//              i8 dtypes:  f32 scale, i8 zero_point
//              i32 dtype:  f32 scale
//              dense:      numel values (f32 / i8 / i32)
//              sparse:     u32 nnz, nnz x (uleb128 index delta, value)
//   quantized models only:
//              u32 count, count x (u16 key_len, key, f32 scale, i8 zero_point)
//
// Sparse index deltas: the first entry stores its flat index, later entries
// the distance to the previous nonzero.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fogwear/nn.hpp"

namespace fogwear::container {

inline constexpr char kMagic[4] = {'F', 'O', 'G', 'W'};
inline constexpr std::uint16_t kVersion = 1;
// Size of a container with no metadata and no tensors.
inline constexpr std::size_t kHeaderBytes = 16;

enum class Kind : std::uint8_t { kFloat = 0, kQuantized = 1 };

enum class DType : std::uint8_t {
  kF32 = 0,
  kF32Sparse = 1,
  kI8 = 2,
  kI8Sparse = 3,
  kI32 = 4,
};

// Sparse encoding is used for a tensor when requested and more than half of
// its entries are zero.
inline constexpr double kSparseThreshold = 0.5;
bool use_sparse(std::size_t zeros, std::size_t total, bool sparse_encoding);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void i8(std::int8_t v) { bytes_.push_back(static_cast<std::uint8_t>(v)); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v);
  void uleb128(std::uint64_t v);
  void bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  void str16(std::string_view s);
  void patch_u32(std::size_t offset, std::uint32_t v);

  std::size_t size() const { return bytes_.size(); }
  const std::vector<std::uint8_t>& data() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Bounds-checked reader; throws DataError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::uint8_t u8();
  std::int8_t i8() { return static_cast<std::int8_t>(u8()); }
  std::uint16_t u16();
  std::uint32_t u32();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32();
  std::uint64_t uleb128();
  std::string str16();
  std::span<const std::uint8_t> take(std::size_t n);

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct Header {
  Kind kind = Kind::kFloat;
  std::string meta;
  std::uint32_t tensor_count = 0;
};

void write_header(ByteWriter& w, Kind kind, std::string_view meta, std::uint32_t tensors);
Header read_header(ByteReader& r);

// Float tensor record (dense f32 or sparse f32).
void write_float_tensor(ByteWriter& w, const std::string& key, const nn::Tensor& t,
                        bool sparse_encoding);

struct RawTensor {
  std::string key;
  DType dtype = DType::kF32;
  std::vector<std::size_t> shape;
  float scale = 1.0f;
  std::int8_t zero_point = 0;
  std::vector<double> f;        // kF32 / kF32Sparse
  std::vector<std::int8_t> q8;  // kI8 / kI8Sparse
  std::vector<std::int32_t> q32;
};
RawTensor read_tensor(ByteReader& r);

struct FloatModel {
  std::optional<nn::ModelSpec> spec;
  nn::Parameters params;
};

std::vector<std::uint8_t> encode_parameters(const nn::ModelSpec* spec,
                                            const nn::Parameters& params,
                                            bool sparse_encoding = false);
FloatModel decode_parameters(std::span<const std::uint8_t> bytes);

void save_parameters(const std::filesystem::path& file, const nn::ModelSpec* spec,
                     const nn::Parameters& params, bool sparse_encoding = false);
FloatModel load_parameters(const std::filesystem::path& file);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& file);
void write_file_bytes(const std::filesystem::path& file, std::span<const std::uint8_t> bytes);

}  // namespace fogwear::container
