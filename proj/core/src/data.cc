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

#include "fvq/data.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fvq/random.h"
#include "fvq/tensor_io.h"

namespace fvq {
namespace {

constexpr std::uint64_t kImageStream = 0x1A6E;
constexpr std::uint64_t kBatchStream = 0xBA7C;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

ProceduralImages::ProceduralImages(std::size_t count, ImageShape shape, std::uint64_t seed)
    : count_(count), shape_(shape), seed_(seed) {
  if (shape.pixels() == 0) throw std::invalid_argument("ProceduralImages: empty image shape");
}

void ProceduralImages::fill(std::size_t index, std::span<double> out) const {
  if (index >= count_) throw IndexError("ProceduralImages: index out of range");
  if (out.size() != shape_.pixels()) throw ShapeError("ProceduralImages: output size mismatch");
  Rng rng(derive_seed(seed_, kImageStream, index));
  const std::size_t H = shape_.height, W = shape_.width, C = shape_.channels;

  // Background: linear ramp between two colors along a random direction.
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  const double dx = std::cos(angle), dy = std::sin(angle);
  std::vector<double> c0(C), c1(C);
  for (std::size_t c = 0; c < C; ++c) {
    c0[c] = rng.uniform(0.0, 1.0);
    c1[c] = rng.uniform(0.0, 1.0);
  }
  const double norm = 0.5 * (std::abs(dx) * (W - 1) + std::abs(dy) * (H - 1)) + 1e-9;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double u = (dx * (x - 0.5 * (W - 1)) + dy * (y - 0.5 * (H - 1))) / norm;
      const double t = 0.5 * (u + 1.0);
      for (std::size_t c = 0; c < C; ++c) out[(y * W + x) * C + c] = c0[c] + (c1[c] - c0[c]) * t;
    }
  }

  const std::size_t shapes = 1 + rng.index(2);
  for (std::size_t s = 0; s < shapes; ++s) {
    const bool disc = rng.uniform() < 0.5;
    std::vector<double> color(C);
    for (auto& v : color) v = rng.uniform(0.0, 1.0);
    const double cx = rng.uniform(0.0, static_cast<double>(W));
    const double cy = rng.uniform(0.0, static_cast<double>(H));
    const double rx = rng.uniform(0.15, 0.4) * static_cast<double>(W);
    const double ry = disc ? rx : rng.uniform(0.15, 0.4) * static_cast<double>(H);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double px = x + 0.5 - cx, py = y + 0.5 - cy;
        const bool inside = disc ? (px * px + py * py <= rx * rx)
                                 : (std::abs(px) <= rx && std::abs(py) <= ry);
        if (!inside) continue;
        for (std::size_t c = 0; c < C; ++c) out[(y * W + x) * C + c] = color[c];
      }
    }
  }
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
}

InMemoryImages::InMemoryImages(ImageShape shape, std::vector<std::uint8_t> pixels)
    : shape_(shape), pixels_(std::move(pixels)) {
  if (shape_.pixels() == 0 || pixels_.size() % shape_.pixels() != 0) {
    throw ShapeError("InMemoryImages: pixel buffer is not a whole number of images");
  }
}

void InMemoryImages::fill(std::size_t index, std::span<double> out) const {
  if (index >= size()) throw IndexError("InMemoryImages: index out of range");
  if (out.size() != shape_.pixels()) throw ShapeError("InMemoryImages: output size mismatch");
  const std::uint8_t* p = pixels_.data() + index * shape_.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(p[i]) / 255.0;
}

void write_imgb(const std::filesystem::path& path, ImageShape shape,
                std::span<const std::uint8_t> pixels) {
  if (shape.pixels() == 0 || pixels.size() % shape.pixels() != 0) {
    throw ShapeError("write_imgb: pixel buffer is not a whole number of images");
  }
  std::string out = "IMGB";
  put_u32(out, static_cast<std::uint32_t>(pixels.size() / shape.pixels()));
  put_u32(out, static_cast<std::uint32_t>(shape.height));
  put_u32(out, static_cast<std::uint32_t>(shape.width));
  put_u32(out, static_cast<std::uint32_t>(shape.channels));
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  write_file_atomic(path, out);
}

InMemoryImages read_imgb(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 20 || std::memcmp(p, "IMGB", 4) != 0) {
    throw FormatError(path.string() + ": not an IMGB file");
  }
  const std::uint32_t count = get_u32(p + 4);
  ImageShape shape{get_u32(p + 8), get_u32(p + 12), get_u32(p + 16)};
  if (shape.pixels() == 0) throw FormatError(path.string() + ": zero-sized images");
  const std::size_t expected = static_cast<std::size_t>(count) * shape.pixels();
  if (bytes.size() - 20 != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) +
                      " pixel bytes, found " + std::to_string(bytes.size() - 20));
  }
  return InMemoryImages(shape, std::vector<std::uint8_t>(p + 20, p + 20 + expected));
}

InMemoryImages read_imgb_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("data directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".imgb") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("no .imgb files in " + dir.string());
  std::vector<std::uint8_t> all;
  ImageShape shape{};
  for (std::size_t i = 0; i < files.size(); ++i) {
    InMemoryImages part = read_imgb(files[i]);
    const ImageShape s = part.shape();
    if (i == 0) {
      shape = s;
    } else if (s.height != shape.height || s.width != shape.width || s.channels != shape.channels) {
      throw FormatError(files[i].string() + ": image shape differs from " + files[0].string());
    }
    all.insert(all.end(), part.pixels().begin(), part.pixels().end());
  }
  return InMemoryImages(shape, std::move(all));
}

Tensor make_batch(const ImageSource& source, std::span<const std::size_t> indices) {
  const ImageShape s = source.shape();
  Tensor batch = Tensor::zeros({indices.size(), s.height, s.width, s.channels});
  auto v = batch.mutable_values();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    source.fill(indices[b], v.subspan(b * s.pixels(), s.pixels()));
  }
  for (double x : v) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("image values must lie in [0, 1]");
  }
  return batch;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch,
                                       std::uint64_t seed, std::int64_t step) {
  if (dataset_size == 0) throw std::invalid_argument("batch_indices: empty dataset");
  Rng rng(derive_seed(seed, kBatchStream, static_cast<std::uint64_t>(step)));
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = rng.index(dataset_size);
  return out;
}

}  // namespace fvq
