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

#include "fvq/bridge.h"

#include <cmath>

#include "fvq/tensor_io.h"
#include "json.hpp"

namespace fvq {

void BridgeConfig::validate() const {
  if (codebook_size == 0 || dim == 0) throw ConfigError("bridge: K and d must be positive");
  if (patch == 0 || codebook_size % patch != 0) {
    throw ConfigError("bridge: codebook size " + std::to_string(codebook_size) +
                      " is not divisible by patch size " + std::to_string(patch));
  }
  if (depth < 1) throw ConfigError("bridge: depth must be at least 1");
  const std::size_t latent = resolved_latent();
  const std::size_t h = resolved_heads();
  if (h == 0 || latent % h != 0) {
    throw ConfigError("bridge: latent width " + std::to_string(latent) + " is not divisible by " +
                      std::to_string(h) + " heads");
  }
}

Bridge::Bridge(const BridgeConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const std::size_t latent = config_.resolved_latent();
  const std::size_t flat = config_.patch * config_.dim;
  compress_ = Linear(flat, latent, true, rng);
  pre_ln_ = LayerNorm(latent);
  for (std::size_t i = 0; i < config_.depth; ++i) {
    blocks_.emplace_back(latent, config_.resolved_heads(), rng);
  }
  post_ln_ = LayerNorm(latent);
  expand_ = Linear(latent, flat, true, rng);
  if (config_.use_pos_embed) {
    pos_embed_ = rng.normal_tensor({config_.tokens(), latent}, kInitStd, true);
  }
}

void Bridge::check_codebook(const Tensor& codebook) const {
  if (codebook.shape() != Shape{config_.codebook_size, config_.dim}) {
    throw ShapeError("bridge: expected codebook " +
                     shape_to_string({config_.codebook_size, config_.dim}) + ", got " +
                     shape_to_string(codebook.shape()));
  }
}

void Bridge::check_tokens(const Tensor& tokens) const {
  const Shape want{config_.tokens(), config_.resolved_latent()};
  if (tokens.shape() != want) {
    throw ShapeError("bridge: expected tokens " + shape_to_string(want) + ", got " +
                     shape_to_string(tokens.shape()));
  }
}

Tensor Bridge::patchify(const Tensor& codebook) const {
  check_codebook(codebook);
  // Row-major K x d viewed as (K/p) x (p*d) is exactly "concatenate each
  // group's p consecutive rows".
  Tensor groups = reshape(codebook, {config_.tokens(), config_.patch * config_.dim});
  Tensor tokens = pre_ln_.forward(compress_.forward(groups));
  if (pos_embed_.defined()) tokens = add(tokens, pos_embed_);
  return tokens;
}

Tensor Bridge::process(const Tensor& tokens) const {
  check_tokens(tokens);
  Tensor h = tokens;
  for (const auto& block : blocks_) h = block.forward(h, config_.tokens());
  return h;
}

Tensor Bridge::unpatchify(const Tensor& tokens) const {
  check_tokens(tokens);
  Tensor expanded = expand_.forward(post_ln_.forward(tokens));
  return reshape(expanded, {config_.codebook_size, config_.dim});
}

Tensor Bridge::forward(const Tensor& codebook) const {
  return unpatchify(process(patchify(codebook)));
}

Tensor Bridge::materialize(const Tensor& codebook) const {
  NoGradGuard guard;
  Tensor out = forward(codebook);
  return Tensor::from(out.shape(), std::vector<double>(out.values().begin(), out.values().end()));
}

void Bridge::collect(const std::string& prefix, ParameterList& out) const {
  compress_.collect(join_name(prefix, "compress"), out);
  pre_ln_.collect(join_name(prefix, "pre_ln"), out);
  if (pos_embed_.defined()) out.push_back({join_name(prefix, "pos_embed"), pos_embed_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].collect(join_name(prefix, "block" + std::to_string(i)), out);
  }
  post_ln_.collect(join_name(prefix, "post_ln"), out);
  expand_.collect(join_name(prefix, "expand"), out);
}

std::size_t scale_patch_size(std::size_t k_old, std::size_t k_new, std::size_t p_old) {
  if (k_old == 0 || k_new == 0 || p_old == 0) throw ConfigError("scale_patch_size: sizes must be positive");
  const bool growing = k_new >= k_old;
  const std::size_t big = growing ? k_new : k_old;
  const std::size_t small = growing ? k_old : k_new;
  auto power_of_four = [](std::size_t r) {
    while (r > 1 && r % 4 == 0) r /= 4;
    return r == 1;
  };
  if (big % small != 0 || !power_of_four(big / small)) {
    // Nearest 4^n multiple of k_old, measured on a log scale.
    const double ratio = static_cast<double>(k_new) / static_cast<double>(k_old);
    const double n = std::round(std::log(ratio) / std::log(4.0));
    const double suggestion = static_cast<double>(k_old) * std::pow(4.0, n);
    throw ConfigError("codebook ratio " + std::to_string(k_new) + "/" + std::to_string(k_old) +
                      " is not a power of 4; nearest valid codebook size is " +
                      std::to_string(static_cast<long long>(suggestion)));
  }
  const std::size_t factor = big / small;
  if (growing) return p_old * factor;
  if (p_old % factor != 0) {
    throw ConfigError("patch size " + std::to_string(p_old) + " cannot shrink by factor " +
                      std::to_string(factor));
  }
  return p_old / factor;
}

void export_materialized(const std::filesystem::path& path, const Tensor& codebook,
                         const MaterializedCodebookInfo& info) {
  NamedTensor nt{kEffectiveCodebookName, codebook, DType::kF64, {}};
  save_tensors(path, {nt});
  nlohmann::json sidecar;
  sidecar["K"] = info.codebook_size;
  sidecar["d"] = info.dim;
  sidecar["p"] = info.patch;
  sidecar["d_latent"] = info.latent_dim;
  sidecar["depth"] = info.depth;
  sidecar["source_run_id"] = info.source_run_id;
  std::filesystem::path side = path;
  side += ".json";
  write_file_atomic(side, sidecar.dump(2) + "\n");
}

Tensor load_materialized(const std::filesystem::path& path) {
  return find_tensor(load_tensors(path), kEffectiveCodebookName).tensor;
}

MaterializedCodebookInfo load_materialized_info(const std::filesystem::path& path) {
  std::filesystem::path side = path;
  side += ".json";
  const auto j = nlohmann::json::parse(read_file(side));
  MaterializedCodebookInfo info;
  info.codebook_size = j.at("K").get<std::size_t>();
  info.dim = j.at("d").get<std::size_t>();
  info.patch = j.at("p").get<std::size_t>();
  info.latent_dim = j.at("d_latent").get<std::size_t>();
  info.depth = j.at("depth").get<std::size_t>();
  info.source_run_id = j.at("source_run_id").get<std::string>();
  return info;
}

}  // namespace fvq
