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

// The "FVQ1" tensor container.
//
// Layout: the 4 magic bytes "FVQ1", then per tensor a little-endian uint32
// byte length followed by that many bytes of UTF-8 JSON
//   {"attrs": {...}, "crc32": N, "dtype": "f32"|"f64", "name": "...", "shape": [...]}
// followed by numel little-endian IEEE values of the declared dtype. Records
// repeat until end of file. crc32 covers the raw value bytes. attrs is an
// optional string->string map used for checkpoint metadata.

#ifndef FVQ_TENSOR_IO_H_
#define FVQ_TENSOR_IO_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvq/tensor.h"

namespace fvq {

enum class DType { kF32, kF64 };

struct NamedTensor {
  std::string name;
  Tensor tensor;
  DType dtype = DType::kF64;
  std::map<std::string, std::string> attrs;
};

// Malformed, truncated or corrupted container.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& in);

std::string encode_tensors(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tensors(const std::string& bytes);

// Writes to a temporary sibling and renames over `path`.
void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

// Atomic text write (temp + rename), shared by the file-producing commands.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace fvq

#endif  // FVQ_TENSOR_IO_H_
