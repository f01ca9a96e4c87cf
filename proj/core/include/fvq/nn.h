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

#ifndef FVQ_NN_H_
#define FVQ_NN_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvq/random.h"
#include "fvq/tensor.h"

namespace fvq {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Parameter {
  std::string name;  // hierarchical, e.g. "bridge.block0.attn.q.weight"
  Tensor tensor;
};
using ParameterList = std::vector<Parameter>;

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

constexpr double kInitStd = 0.02;

// 8 heads from width 64 up; below that the largest divisor of width not
// exceeding width/8 (at least 1).
std::size_t default_heads(std::size_t width);

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng, double init_std = kInitStd);

  // x: [... x in] -> [... x out]
  Tensor forward(const Tensor& x) const;

  void collect(const std::string& prefix, ParameterList& out) const;

  std::size_t in() const { return weight_.dim(0); }
  std::size_t out() const { return weight_.dim(1); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;  // [in x out]
  Tensor bias_;    // [out] or undefined
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width, double epsilon = 1e-5);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Tensor& gain() { return gain_; }
  Tensor& shift() { return shift_; }
  double epsilon() const { return epsilon_; }

 private:
  Tensor gain_;
  Tensor shift_;
  double epsilon_ = 1e-5;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t width, std::size_t heads, Rng& rng);

  // x: [(groups*seq_len) x width]; tokens attend within their group.
  Tensor forward(const Tensor& x, std::size_t seq_len) const;
  // Softmax weights for inspection, [groups, heads, seq, seq].
  Tensor weights(const Tensor& x, std::size_t seq_len) const;

  void collect(const std::string& prefix, ParameterList& out) const;

  std::size_t heads() const { return heads_; }
  Linear& q() { return q_; }
  Linear& k() { return k_; }
  Linear& v() { return v_; }
  Linear& proj() { return proj_; }

 private:
  Linear q_, k_, v_, proj_;
  std::size_t heads_ = 1;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t width, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  Linear& fc1() { return fc1_; }
  Linear& fc2() { return fc2_; }

 private:
  Linear fc1_, fc2_;
};

/// Pre-norm ViT block: y = x + Attn(LN(x)); out = y + MLP(LN(y)).
class TransformerBlock {
 public:
  static constexpr std::size_t kMlpRatio = 4;

  TransformerBlock() = default;
  TransformerBlock(std::size_t width, std::size_t heads, Rng& rng);

  Tensor forward(const Tensor& x, std::size_t seq_len) const;
  void collect(const std::string& prefix, ParameterList& out) const;

  // Zeroes both residual-branch output projections, making the block the
  // identity map.
  void zero_output_projections();

  MultiHeadAttention& attn() { return attn_; }
  Mlp& mlp() { return mlp_; }
  std::size_t width() const { return width_; }

 private:
  std::size_t width_ = 0;
  LayerNorm ln1_, ln2_;
  MultiHeadAttention attn_;
  Mlp mlp_;
};

double grad_norm(const ParameterList& params);
std::size_t parameter_count(const ParameterList& params);

}  // namespace fvq

#endif  // FVQ_NN_H_
