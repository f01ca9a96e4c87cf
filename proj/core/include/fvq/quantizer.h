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

#ifndef FVQ_QUANTIZER_H_
#define FVQ_QUANTIZER_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fvq/nn.h"
#include "fvq/random.h"
#include "fvq/tensor.h"

namespace fvq {

/// Learnable K x d table of code vectors.
class Codebook {
 public:
  Codebook() = default;
  // Entries drawn i.i.d. from normal(0, 1/sqrt(d)).
  Codebook(std::size_t size, std::size_t dim, Rng& rng);
  explicit Codebook(Tensor entries);

  std::size_t size() const { return entries_.dim(0); }
  std::size_t dim() const { return entries_.dim(1); }
  Tensor& entries() { return entries_; }
  const Tensor& entries() const { return entries_; }

  void collect(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor entries_;
};

struct QuantizeResult {
  Tensor z_q;        // straight-through output: values of the codes, gradient to z_e
  Tensor selected;   // gather of the codebook rows, differentiable w.r.t. the codebook
  std::vector<std::int32_t> indices;
  Tensor ste_error;  // detached z_q - z_e
};

// Index of the nearest row of `codebook` for each row of `z` under squared
// Euclidean distance; ties go to the lowest index. Values only.
std::vector<std::int32_t> nearest_indices(const Tensor& z, const Tensor& codebook);
std::vector<std::int32_t> nearest_indices(std::span<const double> z, std::span<const double> codebook,
                                          std::size_t dim);

QuantizeResult quantize_ste(const Tensor& z_e, const Tensor& codebook);

struct CommitmentTerms {
  Tensor codebook_term;  // mean (z_q - sg[z_e])^2
  Tensor encoder_term;   // mean (z_e - sg[z_q])^2
  Tensor total;          // codebook_term + beta * encoder_term
};

constexpr double kDefaultBeta = 0.25;

// `z_q` is the codebook-connected selection (QuantizeResult::selected).
CommitmentTerms commitment_terms(const Tensor& z_e, const Tensor& z_q, double beta = kDefaultBeta);
Tensor commitment_loss(const Tensor& z_e, const Tensor& z_q, double beta = kDefaultBeta);

class UsageStats {
 public:
  explicit UsageStats(std::size_t codebook_size) : hit_counts_(codebook_size, 0) {}

  void record(std::span<const std::int32_t> indices);
  void clear();

  // Fraction of rows hit at least once.
  double usage() const;
  std::size_t used_codes() const;

  const std::vector<std::uint64_t>& hit_counts() const { return hit_counts_; }
  std::uint64_t samples_seen() const { return samples_seen_; }

 private:
  std::vector<std::uint64_t> hit_counts_;
  std::uint64_t samples_seen_ = 0;
};

// Mean over rows of `points` of the squared distance to the nearest code.
double set_distance(const Tensor& points, const Tensor& codes);

struct ResidualQuantizeResult {
  Tensor z_q;           // straight-through output carrying the sum of selected codes
  Tensor selected_sum;  // sum of gathered codes, differentiable w.r.t. the codebook
  std::vector<std::int32_t> indices;  // [n x depth], row-major
  std::size_t depth = 1;
  Tensor residual;  // detached z_e - selected_sum
  Tensor ste_error;
};

// Greedy residual quantization with one shared codebook.
ResidualQuantizeResult residual_quantize(const Tensor& z_e, const Tensor& codebook, std::size_t depth);

// c <- (1 - eta) c + eta z_e; the closed form one SGD step on 0.5*|z_e - c|^2
// produces.
std::vector<double> one_step_behind_update(std::span<const double> code, std::span<const double> z_e,
                                           double eta);

struct AssignmentMargin {
  std::int32_t nearest = -1;
  std::int32_t second = -1;
  double nearest_distance = 0.0;  // unsquared
  double second_distance = 0.0;
  double margin() const { return second_distance - nearest_distance; }
};

// Requires at least two codes.
AssignmentMargin assignment_margin(std::span<const double> z, const Tensor& codebook);

// Largest pairwise Euclidean distance between rows.
double max_pairwise_distance(const Tensor& codebook);

}  // namespace fvq

#endif  // FVQ_QUANTIZER_H_
