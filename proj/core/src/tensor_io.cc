// Copyright 2026 The FVQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fvq/tensor_io.h"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace fvq {
namespace {

constexpr char kMagic[4] = {'F', 'V', 'Q', '1'};

template <typename U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename U>
U get_le(const unsigned char* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(p[i]) << (8 * i);
  return value;
}

const char* dtype_name(DType t) { return t == DType::kF32 ? "f32" : "f64"; }

std::uint32_t crc_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (size > 0) {
    const std::size_t chunk = std::min<std::size_t>(size, 1u << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(chunk));
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string encode_tensors(const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, kMagic + 4);
  for (const NamedTensor& nt : tensors) {
    if (!nt.tensor.defined()) throw std::invalid_argument("encode_tensors: undefined tensor " + nt.name);
    std::string payload;
    const auto values = nt.tensor.values();
    payload.reserve(values.size() * (nt.dtype == DType::kF32 ? 4 : 8));
    for (double v : values) {
      if (nt.dtype == DType::kF32) {
        put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le(payload, std::bit_cast<std::uint64_t>(v));
      }
    }
    nlohmann::json header;
    header["name"] = nt.name;
    header["dtype"] = dtype_name(nt.dtype);
    header["shape"] = nt.tensor.shape();
    header["crc32"] = crc_of(payload.data(), payload.size());
    if (!nt.attrs.empty()) header["attrs"] = nt.attrs;
    const std::string text = header.dump();
    put_le(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    out += payload;
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 4 || std::memcmp(p, kMagic, 4) != 0) throw FormatError("missing FVQ1 magic");
  std::vector<NamedTensor> out;
  std::size_t pos = 4;
  while (pos < size) {
    if (size - pos < 4) throw FormatError("truncated record length at byte " + std::to_string(pos));
    const std::uint32_t header_len = get_le<std::uint32_t>(p + pos);
    pos += 4;
    if (size - pos < header_len) throw FormatError("truncated header at byte " + std::to_string(pos));
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad tensor header: ") + e.what());
    }
    pos += header_len;
    NamedTensor nt;
    Shape shape;
    std::string dtype;
    try {
      nt.name = header.at("name").get<std::string>();
      dtype = header.at("dtype").get<std::string>();
      shape = header.at("shape").get<Shape>();
      if (header.contains("attrs")) nt.attrs = header["attrs"].get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad tensor header fields: ") + e.what());
    }
    if (dtype != "f32" && dtype != "f64") throw FormatError("unknown dtype '" + dtype + "'");
    nt.dtype = dtype == "f32" ? DType::kF32 : DType::kF64;
    const std::size_t width = nt.dtype == DType::kF32 ? 4 : 8;
    const std::size_t count = shape_numel(shape);
    if (count > (size - pos) / width) {
      throw FormatError("truncated values for tensor '" + nt.name + "'");
    }
    const std::size_t nbytes = count * width;
    if (header.contains("crc32")) {
      const auto expected = header["crc32"].get<std::uint32_t>();
      if (crc_of(bytes.data() + pos, nbytes) != expected) {
        throw FormatError("checksum mismatch for tensor '" + nt.name + "'");
      }
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char* q = p + pos + i * width;
      values[i] = nt.dtype == DType::kF32
                      ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(q)))
                      : std::bit_cast<double>(get_le<std::uint64_t>(q));
    }
    pos += nbytes;
    nt.tensor = Tensor::from(std::move(shape), std::move(values));
    out.push_back(std::move(nt));
  }
  return out;
}

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  const std::string bytes = encode_tensors(tensors);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write_tensors: stream write failed");
}

std::vector<NamedTensor> read_tensors(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  write_file_atomic(path, encode_tensors(tensors));
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  return decode_tensors(read_file(path));
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("tensor '" + name + "' not found");
}

}  // namespace fvq
