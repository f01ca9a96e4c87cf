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

#include "fvq/nn.h"

#include <cmath>

namespace fvq {

std::size_t default_heads(std::size_t width) {
  if (width >= 64 && width % 8 == 0) return 8;
  std::size_t target = std::max<std::size_t>(1, width / 8);
  while (target > 1 && width % target != 0) --target;
  return target;
}

Linear::Linear(std::size_t in, std::size_t out, bool bias, Rng& rng, double init_std) {
  if (in == 0 || out == 0) throw ConfigError("Linear: dimensions must be positive");
  weight_ = rng.normal_tensor({in, out}, init_std, /*requires_grad=*/true);
  if (bias) bias_ = Tensor::zeros({out}, /*requires_grad=*/true);
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() == 0 || x.shape().back() != in()) {
    throw ShapeError("Linear: input " + shape_to_string(x.shape()) + " does not end in " +
                     std::to_string(in()));
  }
  Tensor y;
  if (x.rank() == 2) {
    y = matmul(x, weight_);
  } else {
    Shape out_shape = x.shape();
    out_shape.back() = out();
    y = reshape(matmul(reshape(x, {x.numel() / in(), in()}), weight_), out_shape);
  }
  return bias_.defined() ? add(y, bias_) : y;
}

void Linear::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({join_name(prefix, "weight"), weight_});
  if (bias_.defined()) out.push_back({join_name(prefix, "bias"), bias_});
}

LayerNorm::LayerNorm(std::size_t width, double epsilon)
    : gain_(Tensor::full({width}, 1.0, true)),
      shift_(Tensor::zeros({width}, true)),
      epsilon_(epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("LayerNorm: epsilon must be positive");
}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gain_, shift_, epsilon_); }

void LayerNorm::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({join_name(prefix, "gain"), gain_});
  out.push_back({join_name(prefix, "shift"), shift_});
}

MultiHeadAttention::MultiHeadAttention(std::size_t width, std::size_t heads, Rng& rng)
    : heads_(heads) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  q_ = Linear(width, width, true, rng);
  k_ = Linear(width, width, true, rng);
  v_ = Linear(width, width, true, rng);
  proj_ = Linear(width, width, true, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& x, std::size_t seq_len) const {
  Tensor mixed = attention(q_.forward(x), k_.forward(x), v_.forward(x), heads_, seq_len);
  return proj_.forward(mixed);
}

Tensor MultiHeadAttention::weights(const Tensor& x, std::size_t seq_len) const {
  NoGradGuard guard;
  return attention_weights(q_.forward(x), k_.forward(x), heads_, seq_len);
}

void MultiHeadAttention::collect(const std::string& prefix, ParameterList& out) const {
  q_.collect(join_name(prefix, "q"), out);
  k_.collect(join_name(prefix, "k"), out);
  v_.collect(join_name(prefix, "v"), out);
  proj_.collect(join_name(prefix, "proj"), out);
}

Mlp::Mlp(std::size_t width, std::size_t hidden, Rng& rng)
    : fc1_(width, hidden, true, rng), fc2_(hidden, width, true, rng) {}

Tensor Mlp::forward(const Tensor& x) const { return fc2_.forward(gelu(fc1_.forward(x))); }

void Mlp::collect(const std::string& prefix, ParameterList& out) const {
  fc1_.collect(join_name(prefix, "fc1"), out);
  fc2_.collect(join_name(prefix, "fc2"), out);
}

TransformerBlock::TransformerBlock(std::size_t width, std::size_t heads, Rng& rng)
    : width_(width),
      ln1_(width),
      ln2_(width),
      attn_(width, heads, rng),
      mlp_(width, width * kMlpRatio, rng) {}

Tensor TransformerBlock::forward(const Tensor& x, std::size_t seq_len) const {
  if (x.rank() != 2 || x.dim(1) != width_) {
    throw ShapeError("TransformerBlock: expected [n x " + std::to_string(width_) + "], got " +
                     shape_to_string(x.shape()));
  }
  Tensor y = add(x, attn_.forward(ln1_.forward(x), seq_len));
  return add(y, mlp_.forward(ln2_.forward(y)));
}

void TransformerBlock::collect(const std::string& prefix, ParameterList& out) const {
  ln1_.collect(join_name(prefix, "ln1"), out);
  attn_.collect(join_name(prefix, "attn"), out);
  ln2_.collect(join_name(prefix, "ln2"), out);
  mlp_.collect(join_name(prefix, "mlp"), out);
}

void TransformerBlock::zero_output_projections() {
  for (Linear* l : {&attn_.proj(), &mlp_.fc2()}) {
    for (double& w : l->weight().mutable_values()) w = 0.0;
    for (double& b : l->bias().mutable_values()) b = 0.0;
  }
}

double grad_norm(const ParameterList& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) s += g * g;
  return std::sqrt(s);
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

}  // namespace fvq
