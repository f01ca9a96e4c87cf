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

// Patch-linear transformer encoder/decoder around a vector quantizer.
//
// Images are [B x H x W x C]. Each image is cut into non-overlapping
// P x P patches in raster order, giving T = (H/P)^2 tokens per image and
// B*T encoder vectors of width d.

#ifndef FVQ_MODELS_H_
#define FVQ_MODELS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fvq/bridge.h"
#include "fvq/nn.h"
#include "fvq/quantizer.h"
#include "fvq/tensor.h"

namespace fvq {

enum class ProjectorKind { kNone, kLinear, kMlp5, kBridge };

ProjectorKind parse_projector(const std::string& name);  // throws ConfigError
std::string projector_name(ProjectorKind kind);

/// Maps the base codebook to the effective codebook the quantizer searches.
///   none   identity
///   linear one bias-free d x d map shared by every code
///   mlp5   five d x d layers with GELU between them
///   bridge the compress/process/recover transformer
class CodebookProjector {
 public:
  static constexpr std::size_t kMlpLayers = 5;

  CodebookProjector() = default;
  CodebookProjector(ProjectorKind kind, const BridgeConfig& bridge, Rng& rng);

  ProjectorKind kind() const { return kind_; }
  Tensor forward(const Tensor& codebook) const;
  // Value-only effective codebook.
  Tensor materialize(const Tensor& codebook) const;
  void collect(ParameterList& out) const;

  const Bridge& bridge() const { return bridge_; }
  Bridge& bridge() { return bridge_; }
  std::vector<Linear>& layers() { return layers_; }

 private:
  ProjectorKind kind_ = ProjectorKind::kNone;
  Bridge bridge_;
  std::vector<Linear> layers_;
};

struct VQNConfig {
  std::size_t image_size = 16;
  std::size_t image_patch = 4;
  std::size_t channels = 1;
  std::size_t dim = 16;             // d
  std::size_t codebook_size = 256;  // K
  ProjectorKind projector = ProjectorKind::kNone;
  BridgeConfig bridge;  // K and d are overwritten from the fields above
  std::size_t rq_depth = 1;
  double beta = kDefaultBeta;
  double recon_weight = 1.0;
  std::size_t encoder_depth = 1;
  std::size_t decoder_depth = 1;
  std::size_t heads = 0;  // encoder/decoder heads; 0 means default_heads(d)

  std::size_t grid() const { return image_size / image_patch; }
  std::size_t tokens_per_image() const { return grid() * grid(); }
  std::size_t patch_pixels() const { return image_patch * image_patch * channels; }
  std::size_t resolved_heads() const { return heads == 0 ? default_heads(dim) : heads; }
  BridgeConfig resolved_bridge() const;
  void validate() const;
};

struct VqnOutput {
  Tensor recon;       // [B x H x W x C], unclamped
  Tensor z_e;         // [B*T x d]
  Tensor z_q;         // straight-through quantized vectors
  Tensor selected;    // codebook-differentiable selection (sum of codes for RQ)
  Tensor codebook;    // effective codebook used for the search
  std::vector<std::int32_t> indices;  // [B*T x rq_depth]
  Tensor ste_error;   // detached z_q - z_e
};

struct LossTerms {
  Tensor reconstruction;
  Tensor commitment;
  Tensor total;
};

// recon_weight * mse(recon, images) + commitment(z_e, selected, beta).
// `selected` must carry the codebook gradient (VqnOutput::selected).
LossTerms training_loss(const Tensor& recon, const Tensor& images, const Tensor& z_e,
                        const Tensor& selected, double beta, double recon_weight = 1.0);

class Vqn {
 public:
  // Encoder, decoder, codebook and projector draw from separate streams of
  // `seed`, so two models differing only in projector share the rest.
  Vqn(const VQNConfig& config, std::uint64_t seed);

  const VQNConfig& config() const { return config_; }

  Tensor encode(const Tensor& images) const;
  Tensor decode(const Tensor& z_q, std::size_t batch) const;
  Tensor effective_codebook() const;
  VqnOutput forward(const Tensor& images) const;
  // Runs with an externally supplied effective codebook; the projector is
  // not evaluated.
  VqnOutput forward_with_codebook(const Tensor& images, const Tensor& codebook) const;
  LossTerms loss(const VqnOutput& out, const Tensor& images) const;

  Tensor materialized_codebook() const;

  ParameterList parameters() const;

  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }
  CodebookProjector& projector() { return projector_; }
  const CodebookProjector& projector() const { return projector_; }
  std::vector<TransformerBlock>& encoder_blocks() { return enc_blocks_; }
  std::vector<TransformerBlock>& decoder_blocks() { return dec_blocks_; }
  Linear& embed() { return embed_; }
  Linear& unembed() { return unembed_; }

 private:
  void check_images(const Tensor& images) const;
  // Flat index map from [B*T x P*P*C] token layout to [B x H x W x C].
  std::vector<std::size_t> patch_order(std::size_t batch) const;

  VQNConfig config_;
  Linear embed_;
  Tensor enc_pos_;
  std::vector<TransformerBlock> enc_blocks_;
  Codebook codebook_;
  CodebookProjector projector_;
  Tensor dec_pos_;
  std::vector<TransformerBlock> dec_blocks_;
  LayerNorm dec_ln_;
  Linear unembed_;
};

}  // namespace fvq

#endif  // FVQ_MODELS_H_
