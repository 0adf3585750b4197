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

#include "fogwear/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fogwear/error.hpp"

namespace fogwear::container {

bool use_sparse(std::size_t zeros, std::size_t total, bool sparse_encoding) {
  return sparse_encoding && total > 0 &&
         static_cast<double>(zeros) > kSparseThreshold * static_cast<double>(total);
}

void ByteWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v));
  u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::uleb128(std::uint64_t v) {
  do {
    std::uint8_t b = v & 0x7f;
    v >>= 7;
    if (v != 0) b |= 0x80;
    u8(b);
  } while (v != 0);
}

void ByteWriter::str16(std::string_view s) {
  if (s.size() > 0xffff) throw ConfigError("key too long for container");
  u16(static_cast<std::uint16_t>(s.size()));
  bytes(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void ByteWriter::patch_u32(std::size_t offset, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.at(offset + i) = static_cast<std::uint8_t>(v >> (8 * i));
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  if (n > remaining()) {
    throw DataError("container truncated at byte " + std::to_string(pos_) + " (need " +
                    std::to_string(n) + ", have " + std::to_string(remaining()) + ")");
  }
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint16_t ByteReader::u16() {
  auto b = take(2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t ByteReader::u32() {
  auto b = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::uint64_t ByteReader::uleb128() {
  std::uint64_t v = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    const std::uint8_t b = u8();
    v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
    if (!(b & 0x80)) return v;
  }
  throw DataError("malformed varint in container");
}

std::string ByteReader::str16() {
  const std::uint16_t n = u16();
  auto b = take(n);
  return std::string(reinterpret_cast<const char*>(b.data()), b.size());
}

void write_header(ByteWriter& w, Kind kind, std::string_view meta, std::uint32_t tensors) {
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.u32(tensors);
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(meta.data()), meta.size()));
}

Header read_header(ByteReader& r) {
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw DataError("not a model container (bad magic)");
  const std::uint16_t version = r.u16();
  if (version != kVersion) {
    throw DataError("unsupported container version " + std::to_string(version));
  }
  Header h;
  const std::uint8_t kind = r.u8();
  if (kind > 1) throw DataError("unknown container kind " + std::to_string(kind));
  h.kind = static_cast<Kind>(kind);
  r.u8();
  const std::uint32_t meta_len = r.u32();
  h.tensor_count = r.u32();
  auto meta = r.take(meta_len);
  h.meta.assign(reinterpret_cast<const char*>(meta.data()), meta.size());
  return h;
}

namespace {

void write_shape(ByteWriter& w, const std::vector<std::size_t>& shape) {
  if (shape.size() > 255) throw ConfigError("tensor rank too large");
  w.u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
}

}  // namespace

void write_float_tensor(ByteWriter& w, const std::string& key, const nn::Tensor& t,
                        bool sparse_encoding) {
  std::size_t zeros = 0;
  for (double v : t.data) zeros += static_cast<float>(v) == 0.0f;
  const bool sparse = use_sparse(zeros, t.size(), sparse_encoding);
  w.str16(key);
  w.u8(static_cast<std::uint8_t>(sparse ? DType::kF32Sparse : DType::kF32));
  write_shape(w, t.shape);
  if (!sparse) {
    for (double v : t.data) w.f32(static_cast<float>(v));
    return;
  }
  w.u32(static_cast<std::uint32_t>(t.size() - zeros));
  std::size_t prev = 0;
  bool first = true;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float v = static_cast<float>(t.data[i]);
    if (v == 0.0f) continue;
    w.uleb128(first ? i : i - prev);
    w.f32(v);
    prev = i;
    first = false;
  }
}

RawTensor read_tensor(ByteReader& r) {
  RawTensor t;
  t.key = r.str16();
  const std::uint8_t dtype = r.u8();
  if (dtype > 4) throw DataError("tensor " + t.key + ": unknown dtype " + std::to_string(dtype));
  t.dtype = static_cast<DType>(dtype);
  const std::uint8_t rank = r.u8();
  for (std::uint8_t i = 0; i < rank; ++i) t.shape.push_back(r.u32());
  const std::size_t n = nn::Tensor::numel(t.shape);
  if (t.dtype == DType::kI8 || t.dtype == DType::kI8Sparse) {
    t.scale = r.f32();
    t.zero_point = r.i8();
  } else if (t.dtype == DType::kI32) {
    t.scale = r.f32();
  }
  auto read_sparse = [&](auto&& read_value) {
    const std::uint32_t nnz = r.u32();
    if (nnz > n) throw DataError("tensor " + t.key + ": more nonzeros than entries");
    std::size_t idx = 0;
    for (std::uint32_t k = 0; k < nnz; ++k) {
      const std::uint64_t delta = r.uleb128();
      idx = k == 0 ? delta : idx + delta;
      if ((k > 0 && delta == 0) || idx >= n) {
        throw DataError("tensor " + t.key + ": sparse index out of range");
      }
      read_value(idx);
    }
  };
  switch (t.dtype) {
    case DType::kF32:
      t.f.resize(n);
      for (double& v : t.f) v = r.f32();
      break;
    case DType::kF32Sparse:
      t.f.assign(n, 0.0);
      read_sparse([&](std::size_t i) { t.f[i] = r.f32(); });
      break;
    case DType::kI8:
      t.q8.resize(n);
      for (std::int8_t& v : t.q8) v = r.i8();
      break;
    case DType::kI8Sparse:
      t.q8.assign(n, 0);
      read_sparse([&](std::size_t i) { t.q8[i] = r.i8(); });
      break;
    case DType::kI32:
      t.q32.resize(n);
      for (std::int32_t& v : t.q32) v = r.i32();
      break;
  }
  return t;
}

std::vector<std::uint8_t> encode_parameters(const nn::ModelSpec* spec,
                                            const nn::Parameters& params,
                                            bool sparse_encoding) {
  ByteWriter w;
  const std::string meta = spec != nullptr ? nn::to_json(*spec).dump() : std::string();
  write_header(w, Kind::kFloat, meta, static_cast<std::uint32_t>(params.size()));
  for (const auto& [key, t] : params) write_float_tensor(w, key, t, sparse_encoding);
  return w.take();
}

FloatModel decode_parameters(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const Header h = read_header(r);
  if (h.kind != Kind::kFloat) throw DataError("container holds a quantized model, not float parameters");
  FloatModel out;
  if (!h.meta.empty()) {
    try {
      out.spec = nn::model_spec_from_json(nlohmann::json::parse(h.meta));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("container metadata: ") + e.what());
    }
  }
  for (std::uint32_t i = 0; i < h.tensor_count; ++i) {
    RawTensor t = read_tensor(r);
    if (t.dtype != DType::kF32 && t.dtype != DType::kF32Sparse) {
      throw DataError("tensor " + t.key + " is not float in a float container");
    }
    out.params.emplace(t.key, nn::Tensor(t.shape, std::move(t.f)));
  }
  if (r.remaining() != 0) throw DataError("trailing bytes after float container");
  if (out.spec) nn::check_parameters(*out.spec, out.params);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("missing file " + file.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& file, std::span<const std::uint8_t> bytes) {
  if (file.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + file.string());
}

void save_parameters(const std::filesystem::path& file, const nn::ModelSpec* spec,
                     const nn::Parameters& params, bool sparse_encoding) {
  write_file_bytes(file, encode_parameters(spec, params, sparse_encoding));
}

FloatModel load_parameters(const std::filesystem::path& file) {
  try {
    return decode_parameters(read_file_bytes(file));
  } catch (const DataError& e) {
    throw DataError(file.string() + ": " + e.what());
  }
}

}  // namespace fogwear::container
