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

#include "fvq/quantizer.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "fvq/parallel.h"

namespace fvq {
namespace {

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kRowBlock = 256;
constexpr double kFloatUnit = 5.9604644775390625e-08;  // 2^-24

double squared_distance(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    const double diff = a[c] - b[c];
    s += diff * diff;
  }
  return s;
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + " must be a matrix, got " + shape_to_string(t.shape()));
  }
}

}  // namespace

Codebook::Codebook(std::size_t size, std::size_t dim, Rng& rng) {
  if (size == 0 || dim == 0) throw ConfigError("codebook size and dimension must be positive");
  entries_ = rng.normal_tensor({size, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), true);
}

Codebook::Codebook(Tensor entries) : entries_(std::move(entries)) {
  require_matrix(entries_, "codebook");
  if (entries_.dim(0) == 0 || entries_.dim(1) == 0) throw ConfigError("empty codebook");
}

void Codebook::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix, entries_});
}

// Candidates are screened with a single-precision GEMM on the expansion
// |c|^2 - 2 z.c, then every code within the screening error bound of the best
// score is re-scored exactly in double precision. The result is the exact
// squared-distance argmin with lowest-index tie-breaking.
std::vector<std::int32_t> nearest_indices(std::span<const double> z, std::span<const double> codebook,
                                          std::size_t dim) {
  if (dim == 0 || codebook.size() % dim != 0 || z.size() % dim != 0) {
    throw ShapeError("nearest_indices: sizes are not multiples of dim " + std::to_string(dim));
  }
  const std::size_t n = z.size() / dim;
  const std::size_t k = codebook.size() / dim;
  if (k == 0) throw ShapeError("nearest_indices: empty codebook");
  std::vector<std::int32_t> out(n);
  if (n == 0) return out;

  RowMatF codes(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
  std::vector<double> code_sq(k);
  double max_code_norm = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double v = codebook[j * dim + c];
      codes(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = static_cast<float>(v);
      s += v * v;
    }
    code_sq[j] = s;
    max_code_norm = std::max(max_code_norm, std::sqrt(s));
  }
  const double bound_scale = 8.0 * static_cast<double>(dim + 4) * kFloatUnit;

  parallel_for(n, kRowBlock, [&](std::size_t begin, std::size_t end) {
    RowMatF block, scores;
    std::vector<std::size_t> candidates;
    for (std::size_t b0 = begin; b0 < end; b0 += kRowBlock) {
      const std::size_t rows = std::min(kRowBlock, end - b0);
      block.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < dim; ++c)
          block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
              static_cast<float>(z[(b0 + r) * dim + c]);
      scores.noalias() = block * codes.transpose();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* zr = z.data() + (b0 + r) * dim;
        double best_score = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
          const double s = code_sq[j] - 2.0 * static_cast<double>(scores(
                                                  static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
          best_score = std::min(best_score, s);
        }
        double z_norm = 0.0;
        for (std::size_t c = 0; c < dim; ++c) z_norm += zr[c] * zr[c];
        z_norm = std::sqrt(z_norm);
        const double slack = 2.0 * bound_scale * (z_norm + max_code_norm) * (z_norm + max_code_norm) + 1e-300;
        candidates.clear();
        for (std::size_t j = 0; j < k; ++j) {
          const double s = code_sq[j] - 2.0 * static_cast<double>(scores(
                                                  static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)));
          if (s <= best_score + slack) candidates.push_back(j);
        }
        std::size_t best = candidates.front();
        double best_d = squared_distance(zr, codebook.data() + best * dim, dim);
        for (std::size_t t = 1; t < candidates.size(); ++t) {
          const double d = squared_distance(zr, codebook.data() + candidates[t] * dim, dim);
          if (d < best_d) {
            best_d = d;
            best = candidates[t];
          }
        }
        out[b0 + r] = static_cast<std::int32_t>(best);
      }
    }
  });
  return out;
}

std::vector<std::int32_t> nearest_indices(const Tensor& z, const Tensor& codebook) {
  require_matrix(z, "nearest_indices: z");
  require_matrix(codebook, "nearest_indices: codebook");
  if (z.dim(1) != codebook.dim(1)) {
    throw ShapeError("nearest_indices: z " + shape_to_string(z.shape()) + " vs codebook " +
                     shape_to_string(codebook.shape()));
  }
  return nearest_indices(z.values(), codebook.values(), z.dim(1));
}

QuantizeResult quantize_ste(const Tensor& z_e, const Tensor& codebook) {
  QuantizeResult r;
  r.indices = StopGradientMemo::active().indices(nearest_indices(z_e, codebook));
  r.selected = gather_rows(codebook, r.indices);
  r.z_q = straight_through(z_e, r.selected);
  std::vector<double> err(z_e.numel());
  const auto sv = r.selected.values();
  const auto zv = z_e.values();
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = sv[i] - zv[i];
  r.ste_error = Tensor::from(z_e.shape(), std::move(err));
  return r;
}

CommitmentTerms commitment_terms(const Tensor& z_e, const Tensor& z_q, double beta) {
  if (z_e.shape() != z_q.shape()) {
    throw ShapeError("commitment_loss: z_e " + shape_to_string(z_e.shape()) + " vs z_q " +
                     shape_to_string(z_q.shape()));
  }
  if (beta < 0.0) throw ConfigError("commitment beta must be non-negative");
  CommitmentTerms t;
  t.codebook_term = mse(z_q, detach(z_e));
  t.encoder_term = mse(z_e, detach(z_q));
  t.total = add(t.codebook_term, scale(t.encoder_term, beta));
  return t;
}

Tensor commitment_loss(const Tensor& z_e, const Tensor& z_q, double beta) {
  return commitment_terms(z_e, z_q, beta).total;
}

void UsageStats::record(std::span<const std::int32_t> indices) {
  for (std::int32_t i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= hit_counts_.size()) {
      throw IndexError("UsageStats: index " + std::to_string(i) + " out of range");
    }
    ++hit_counts_[static_cast<std::size_t>(i)];
  }
  samples_seen_ += indices.size();
}

void UsageStats::clear() {
  std::fill(hit_counts_.begin(), hit_counts_.end(), 0);
  samples_seen_ = 0;
}

std::size_t UsageStats::used_codes() const {
  return static_cast<std::size_t>(
      std::count_if(hit_counts_.begin(), hit_counts_.end(), [](std::uint64_t c) { return c > 0; }));
}

double UsageStats::usage() const {
  if (samples_seen_ == 0) throw std::logic_error("usage of empty statistics");
  return static_cast<double>(used_codes()) / static_cast<double>(hit_counts_.size());
}

double set_distance(const Tensor& points, const Tensor& codes) {
  require_matrix(points, "set_distance: points");
  require_matrix(codes, "set_distance: codes");
  if (points.dim(0) == 0 || codes.dim(0) == 0) throw ShapeError("set_distance of an empty set");
  const std::size_t dim = points.dim(1);
  const auto idx = nearest_indices(points, codes);
  double total = 0.0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    total += squared_distance(points.values().data() + i * dim,
                              codes.values().data() + static_cast<std::size_t>(idx[i]) * dim, dim);
  }
  return total / static_cast<double>(idx.size());
}

ResidualQuantizeResult residual_quantize(const Tensor& z_e, const Tensor& codebook, std::size_t depth) {
  if (depth < 1) throw ConfigError("residual_quantize: depth must be at least 1");
  require_matrix(z_e, "residual_quantize: z_e");
  const std::size_t n = z_e.dim(0), dim = z_e.dim(1);
  ResidualQuantizeResult r;
  r.depth = depth;
  r.indices.assign(n * depth, 0);
  std::vector<double> residual(z_e.values().begin(), z_e.values().end());
  const auto cv = codebook.values();
  for (std::size_t t = 0; t < depth; ++t) {
    auto idx = StopGradientMemo::active().indices(nearest_indices(residual, cv, dim));
    for (std::size_t i = 0; i < n; ++i) {
      r.indices[i * depth + t] = idx[i];
      const double* c = cv.data() + static_cast<std::size_t>(idx[i]) * dim;
      for (std::size_t j = 0; j < dim; ++j) residual[i * dim + j] -= c[j];
    }
    Tensor picked = gather_rows(codebook, idx);
    r.selected_sum = t == 0 ? picked : add(r.selected_sum, picked);
  }
  r.z_q = straight_through(z_e, r.selected_sum);
  std::vector<double> err(z_e.numel());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = r.selected_sum.values()[i] - z_e.values()[i];
  r.ste_error = Tensor::from(z_e.shape(), std::move(err));
  r.residual = Tensor::from(z_e.shape(), std::move(residual));
  return r;
}

std::vector<double> one_step_behind_update(std::span<const double> code, std::span<const double> z_e,
                                           double eta) {
  if (code.size() != z_e.size()) throw ShapeError("one_step_behind_update: size mismatch");
  std::vector<double> out(code.size());
  for (std::size_t i = 0; i < code.size(); ++i) out[i] = (1.0 - eta) * code[i] + eta * z_e[i];
  return out;
}

AssignmentMargin assignment_margin(std::span<const double> z, const Tensor& codebook) {
  require_matrix(codebook, "assignment_margin: codebook");
  const std::size_t k = codebook.dim(0), dim = codebook.dim(1);
  if (k < 2) throw ConfigError("assignment_margin needs at least two codes");
  if (z.size() != dim) throw ShapeError("assignment_margin: vector width mismatch");
  AssignmentMargin m;
  double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
  for (std::size_t j = 0; j < k; ++j) {
    const double d = squared_distance(z.data(), codebook.values().data() + j * dim, dim);
    if (d < d1) {
      d2 = d1;
      m.second = m.nearest;
      d1 = d;
      m.nearest = static_cast<std::int32_t>(j);
    } else if (d < d2) {
      d2 = d;
      m.second = static_cast<std::int32_t>(j);
    }
  }
  m.nearest_distance = std::sqrt(d1);
  m.second_distance = std::sqrt(d2);
  return m;
}

double max_pairwise_distance(const Tensor& codebook) {
  require_matrix(codebook, "max_pairwise_distance");
  const std::size_t k = codebook.dim(0), dim = codebook.dim(1);
  double best = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j)
      best = std::max(best, squared_distance(codebook.values().data() + i * dim,
                                             codebook.values().data() + j * dim, dim));
  return std::sqrt(best);
}

}  // namespace fvq
