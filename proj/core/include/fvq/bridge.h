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

// VQBridge: a codebook-to-codebook map trained jointly with the base codebook.
//
//   base [K x d]
//     -> reshape into K/p groups of p consecutive rows, each flattened to p*d
//     -> shared compress projection (p*d -> d') and LayerNorm     (patchify)
//     -> optional learned per-token position embedding
//     -> N pre-norm transformer blocks over the K/p tokens        (process)
//     -> LayerNorm, shared expand projection (d' -> p*d)
//     -> reshape back to K x d                                   (unpatchify)
//
// After training the map is evaluated once and the result kept as a plain
// codebook (materialize); the bridge is not needed for inference.

#ifndef FVQ_BRIDGE_H_
#define FVQ_BRIDGE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fvq/nn.h"
#include "fvq/tensor.h"

namespace fvq {

struct BridgeConfig {
  std::size_t codebook_size = 0;  // K
  std::size_t dim = 0;            // d
  std::size_t patch = 16;         // p, code vectors per token
  std::size_t latent_dim = 0;     // d'; 0 means "same as dim"
  std::size_t depth = 2;          // N
  std::size_t heads = 0;          // 0 means default_heads(d')
  bool use_pos_embed = true;

  std::size_t tokens() const { return codebook_size / patch; }
  std::size_t resolved_latent() const { return latent_dim == 0 ? dim : latent_dim; }
  std::size_t resolved_heads() const { return heads == 0 ? default_heads(resolved_latent()) : heads; }

  // Throws ConfigError on K % p != 0, d' % heads != 0, N < 1, zero sizes.
  void validate() const;
};

class Bridge {
 public:
  Bridge() = default;
  Bridge(const BridgeConfig& config, Rng& rng);

  const BridgeConfig& config() const { return config_; }

  Tensor patchify(const Tensor& codebook) const;  // [K x d] -> [K/p x d']
  Tensor process(const Tensor& tokens) const;     // [K/p x d'] -> [K/p x d']
  Tensor unpatchify(const Tensor& tokens) const;  // [K/p x d'] -> [K x d]
  Tensor forward(const Tensor& codebook) const;

  // Detached value copy of forward(), computed without recording.
  Tensor materialize(const Tensor& codebook) const;

  void collect(const std::string& prefix, ParameterList& out) const;

  Linear& compress() { return compress_; }
  Linear& expand() { return expand_; }
  std::vector<TransformerBlock>& blocks() { return blocks_; }
  Tensor& pos_embed() { return pos_embed_; }

 private:
  void check_codebook(const Tensor& codebook) const;
  void check_tokens(const Tensor& tokens) const;

  BridgeConfig config_;
  Linear compress_;
  LayerNorm pre_ln_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm post_ln_;
  Linear expand_;
  Tensor pos_embed_;
};

// New patch size after scaling the codebook from k_old to k_new entries,
// keeping the token count K/p fixed. The ratio must be a power of 4 (either
// direction); anything else throws ConfigError naming the nearest valid size.
std::size_t scale_patch_size(std::size_t k_old, std::size_t k_new, std::size_t p_old);

struct MaterializedCodebookInfo {
  std::size_t codebook_size = 0;
  std::size_t dim = 0;
  std::size_t patch = 0;
  std::size_t latent_dim = 0;
  std::size_t depth = 0;
  std::string source_run_id;
};

inline constexpr const char* kEffectiveCodebookName = "codebook.effective";

// Writes `codebook` as tensor "codebook.effective" to `path` and the JSON
// sidecar {K, d, p, d_latent, depth, source_run_id} to `path` + ".json".
void export_materialized(const std::filesystem::path& path, const Tensor& codebook,
                         const MaterializedCodebookInfo& info);
Tensor load_materialized(const std::filesystem::path& path);
MaterializedCodebookInfo load_materialized_info(const std::filesystem::path& path);

}  // namespace fvq

#endif  // FVQ_BRIDGE_H_
