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

#include "fvq/models.h"

#include <cmath>

#include "fvq/random.h"

namespace fvq {
namespace {

enum Stream : std::uint64_t {
  kEncoderStream = 0xE1,
  kDecoderStream = 0xD1,
  kCodebookStream = 0xC1,
  kProjectorStream = 0xB1,
};

Tensor copy_values(const Tensor& t) {
  return Tensor::from(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
}

}  // namespace

ProjectorKind parse_projector(const std::string& name) {
  if (name == "none") return ProjectorKind::kNone;
  if (name == "linear") return ProjectorKind::kLinear;
  if (name == "mlp5") return ProjectorKind::kMlp5;
  if (name == "bridge") return ProjectorKind::kBridge;
  throw ConfigError("unknown projector '" + name + "' (expected none, linear, mlp5 or bridge)");
}

std::string projector_name(ProjectorKind kind) {
  switch (kind) {
    case ProjectorKind::kNone: return "none";
    case ProjectorKind::kLinear: return "linear";
    case ProjectorKind::kMlp5: return "mlp5";
    case ProjectorKind::kBridge: return "bridge";
  }
  return "none";
}

CodebookProjector::CodebookProjector(ProjectorKind kind, const BridgeConfig& bridge, Rng& rng)
    : kind_(kind) {
  const std::size_t d = bridge.dim;
  // Baselines use fan-in scaling so the effective codebook starts at the
  // base codebook's magnitude.
  const double std_fan_in = 1.0 / std::sqrt(static_cast<double>(d));
  switch (kind) {
    case ProjectorKind::kNone:
      break;
    case ProjectorKind::kLinear:
      layers_.emplace_back(d, d, /*bias=*/false, rng, std_fan_in);
      break;
    case ProjectorKind::kMlp5:
      for (std::size_t i = 0; i < kMlpLayers; ++i) layers_.emplace_back(d, d, /*bias=*/true, rng, std_fan_in);
      break;
    case ProjectorKind::kBridge:
      bridge_ = Bridge(bridge, rng);
      break;
  }
}

Tensor CodebookProjector::forward(const Tensor& codebook) const {
  switch (kind_) {
    case ProjectorKind::kNone:
      return codebook;
    case ProjectorKind::kLinear:
      return layers_[0].forward(codebook);
    case ProjectorKind::kMlp5: {
      Tensor h = codebook;
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].forward(h);
        if (i + 1 < layers_.size()) h = gelu(h);
      }
      return h;
    }
    case ProjectorKind::kBridge:
      return bridge_.forward(codebook);
  }
  return codebook;
}

Tensor CodebookProjector::materialize(const Tensor& codebook) const {
  NoGradGuard guard;
  return copy_values(forward(codebook));
}

void CodebookProjector::collect(ParameterList& out) const {
  switch (kind_) {
    case ProjectorKind::kNone:
      break;
    case ProjectorKind::kLinear:
      layers_[0].collect("projector.linear", out);
      break;
    case ProjectorKind::kMlp5:
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i].collect("projector.fc" + std::to_string(i), out);
      }
      break;
    case ProjectorKind::kBridge:
      bridge_.collect("bridge", out);
      break;
  }
}

BridgeConfig VQNConfig::resolved_bridge() const {
  BridgeConfig b = bridge;
  b.codebook_size = codebook_size;
  b.dim = dim;
  return b;
}

void VQNConfig::validate() const {
  if (image_size == 0 || image_patch == 0 || channels == 0) {
    throw ConfigError("model: image_size, image_patch and channels must be positive");
  }
  if (image_size % image_patch != 0) {
    throw ConfigError("model: image_size " + std::to_string(image_size) +
                      " is not divisible by image_patch " + std::to_string(image_patch));
  }
  if (dim == 0 || codebook_size == 0) throw ConfigError("model: d and K must be positive");
  if (rq_depth < 1) throw ConfigError("model: rq_depth must be at least 1");
  if (beta < 0.0) throw ConfigError("model: beta must be non-negative");
  if (recon_weight < 0.0) throw ConfigError("model: recon_weight must be non-negative");
  const std::size_t h = resolved_heads();
  if (h == 0 || dim % h != 0) {
    throw ConfigError("model: d " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(h) + " heads");
  }
  if (projector == ProjectorKind::kBridge) resolved_bridge().validate();
}

LossTerms training_loss(const Tensor& recon, const Tensor& images, const Tensor& z_e,
                        const Tensor& selected, double beta, double recon_weight) {
  if (recon.shape() != images.shape()) {
    throw ShapeError("training_loss: recon " + shape_to_string(recon.shape()) + " vs images " +
                     shape_to_string(images.shape()));
  }
  LossTerms t;
  t.reconstruction = mse(recon, images);
  t.commitment = commitment_loss(z_e, selected, beta);
  Tensor rec = recon_weight == 1.0 ? t.reconstruction : scale(t.reconstruction, recon_weight);
  t.total = add(rec, t.commitment);
  return t;
}

Vqn::Vqn(const VQNConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim, T = config_.tokens_per_image();
  const std::size_t heads = config_.resolved_heads();

  Rng enc(derive_seed(seed, kEncoderStream));
  // Fan-in scale puts encoder outputs at the codebook's magnitude.
  embed_ = Linear(config_.patch_pixels(), d, true, enc,
                  1.0 / std::sqrt(static_cast<double>(config_.patch_pixels())));
  // Zero so that identity blocks make the encoder the bare patch embedding.
  enc_pos_ = Tensor::zeros({T, d}, true);
  for (std::size_t i = 0; i < config_.encoder_depth; ++i) enc_blocks_.emplace_back(d, heads, enc);

  Rng cb(derive_seed(seed, kCodebookStream));
  codebook_ = Codebook(config_.codebook_size, d, cb);

  Rng proj(derive_seed(seed, kProjectorStream));
  projector_ = CodebookProjector(config_.projector, config_.resolved_bridge(), proj);

  Rng dec(derive_seed(seed, kDecoderStream));
  dec_pos_ = Tensor::zeros({T, d}, true);
  for (std::size_t i = 0; i < config_.decoder_depth; ++i) dec_blocks_.emplace_back(d, heads, dec);
  dec_ln_ = LayerNorm(d);
  unembed_ = Linear(d, config_.patch_pixels(), true, dec);
}

void Vqn::check_images(const Tensor& images) const {
  const std::size_t S = config_.image_size, C = config_.channels;
  if (images.rank() != 4 || images.dim(1) != S || images.dim(2) != S || images.dim(3) != C) {
    throw ShapeError("model: expected images [B x " + std::to_string(S) + " x " + std::to_string(S) +
                     " x " + std::to_string(C) + "], got " + shape_to_string(images.shape()));
  }
}

std::vector<std::size_t> Vqn::patch_order(std::size_t batch) const {
  const std::size_t S = config_.image_size, P = config_.image_patch, C = config_.channels;
  const std::size_t G = config_.grid();
  std::vector<std::size_t> order;
  order.reserve(batch * S * S * C);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t gy = 0; gy < G; ++gy) {
      for (std::size_t gx = 0; gx < G; ++gx) {
        for (std::size_t py = 0; py < P; ++py) {
          for (std::size_t px = 0; px < P; ++px) {
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t y = gy * P + py, x = gx * P + px;
              order.push_back(((b * S + y) * S + x) * C + c);
            }
          }
        }
      }
    }
  }
  return order;
}

Tensor Vqn::encode(const Tensor& images) const {
  check_images(images);
  const std::size_t B = images.dim(0), T = config_.tokens_per_image(), d = config_.dim;
  const auto order = patch_order(B);
  Tensor patches = take(images, order, {B * T, config_.patch_pixels()});
  patches = add(scale(patches, 2.0), -1.0);  // [0, 1] -> [-1, 1]
  Tensor h = reshape(embed_.forward(patches), {B, T, d});
  h = reshape(add(h, enc_pos_), {B * T, d});
  for (const auto& block : enc_blocks_) h = block.forward(h, T);
  return h;
}

Tensor Vqn::decode(const Tensor& z_q, std::size_t batch) const {
  const std::size_t T = config_.tokens_per_image(), d = config_.dim, S = config_.image_size;
  if (z_q.shape() != Shape{batch * T, d}) {
    throw ShapeError("decode: expected " + shape_to_string({batch * T, d}) + " vectors, got " +
                     shape_to_string(z_q.shape()));
  }
  Tensor h = reshape(add(reshape(z_q, {batch, T, d}), dec_pos_), {batch * T, d});
  for (const auto& block : dec_blocks_) h = block.forward(h, T);
  Tensor pix = unembed_.forward(dec_ln_.forward(h));  // [B*T x P*P*C]
  // Inverse of the encoder's patch gather: image element order[i] comes from
  // token-layout element i.
  const auto order = patch_order(batch);
  std::vector<std::size_t> inverse(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) inverse[order[i]] = i;
  return take(pix, inverse, {batch, S, S, config_.channels});
}

Tensor Vqn::effective_codebook() const { return projector_.forward(codebook_.entries()); }

Tensor Vqn::materialized_codebook() const { return projector_.materialize(codebook_.entries()); }

VqnOutput Vqn::forward(const Tensor& images) const {
  return forward_with_codebook(images, effective_codebook());
}

VqnOutput Vqn::forward_with_codebook(const Tensor& images, const Tensor& codebook) const {
  if (codebook.shape() != Shape{config_.codebook_size, config_.dim}) {
    throw ShapeError("model: effective codebook must be " +
                     shape_to_string({config_.codebook_size, config_.dim}) + ", got " +
                     shape_to_string(codebook.shape()));
  }
  VqnOutput out;
  out.codebook = codebook;
  out.z_e = encode(images);
  if (config_.rq_depth == 1) {
    QuantizeResult q = quantize_ste(out.z_e, codebook);
    out.z_q = q.z_q;
    out.selected = q.selected;
    out.indices = std::move(q.indices);
    out.ste_error = q.ste_error;
  } else {
    ResidualQuantizeResult q = residual_quantize(out.z_e, codebook, config_.rq_depth);
    out.z_q = q.z_q;
    out.selected = q.selected_sum;
    out.indices = std::move(q.indices);
    out.ste_error = q.ste_error;
  }
  out.recon = decode(out.z_q, images.dim(0));
  return out;
}

LossTerms Vqn::loss(const VqnOutput& out, const Tensor& images) const {
  return training_loss(out.recon, images, out.z_e, out.selected, config_.beta, config_.recon_weight);
}

ParameterList Vqn::parameters() const {
  ParameterList out;
  embed_.collect("encoder.embed", out);
  out.push_back({"encoder.pos_embed", enc_pos_});
  for (std::size_t i = 0; i < enc_blocks_.size(); ++i) {
    enc_blocks_[i].collect("encoder.block" + std::to_string(i), out);
  }
  codebook_.collect("codebook.base", out);
  projector_.collect(out);
  out.push_back({"decoder.pos_embed", dec_pos_});
  for (std::size_t i = 0; i < dec_blocks_.size(); ++i) {
    dec_blocks_[i].collect("decoder.block" + std::to_string(i), out);
  }
  dec_ln_.collect("decoder.ln", out);
  unembed_.collect("decoder.unembed", out);
  return out;
}

}  // namespace fvq
