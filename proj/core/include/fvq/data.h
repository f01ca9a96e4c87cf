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

// Image sources for the small reconstruction task.
//
// IMGB file layout (all integers little-endian uint32):
//   "IMGB" count H W C, then count*H*W*C bytes of 8-bit pixels in
//   image-major, row-major, channel-last order.

#ifndef FVQ_DATA_H_
#define FVQ_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "fvq/tensor.h"

namespace fvq {

struct ImageShape {
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 1;
  std::size_t pixels() const { return height * width * channels; }
};

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual ImageShape shape() const = 0;
  // Writes image `index` (values in [0, 1]) into out[0, shape().pixels()).
  virtual void fill(std::size_t index, std::span<double> out) const = 0;
};

/// Seeded synthetic images: a random linear gradient background with one or
/// two filled rectangles/discs on top. Image i depends only on (seed, i).
class ProceduralImages : public ImageSource {
 public:
  ProceduralImages(std::size_t count, ImageShape shape, std::uint64_t seed);
  std::size_t size() const override { return count_; }
  ImageShape shape() const override { return shape_; }
  void fill(std::size_t index, std::span<double> out) const override;

 private:
  std::size_t count_;
  ImageShape shape_;
  std::uint64_t seed_;
};

class InMemoryImages : public ImageSource {
 public:
  InMemoryImages(ImageShape shape, std::vector<std::uint8_t> pixels);
  std::size_t size() const override { return pixels_.size() / shape_.pixels(); }
  ImageShape shape() const override { return shape_; }
  void fill(std::size_t index, std::span<double> out) const override;
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

 private:
  ImageShape shape_;
  std::vector<std::uint8_t> pixels_;
};

void write_imgb(const std::filesystem::path& path, ImageShape shape,
                std::span<const std::uint8_t> pixels);
InMemoryImages read_imgb(const std::filesystem::path& path);
// Concatenates every *.imgb file in `dir` (sorted by name); all must share
// one image shape.
InMemoryImages read_imgb_dir(const std::filesystem::path& dir);

// Stacks images into a [B x H x W x C] tensor; values range-checked to [0, 1].
Tensor make_batch(const ImageSource& source, std::span<const std::size_t> indices);

// Batch indices for training step `step`, drawn from (seed, step) only, so
// a resumed run sees the same batches as an uninterrupted one.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch,
                                       std::uint64_t seed, std::int64_t step);

}  // namespace fvq

#endif  // FVQ_DATA_H_
