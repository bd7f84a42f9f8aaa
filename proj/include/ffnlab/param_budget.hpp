#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ffnlab/model.hpp"

namespace ffnlab {

struct ParamBreakdown {
  long long per_block_mha = 0;
  long long per_block_ffn = 0;
  long long per_block_norms = 0;
  long long embeddings_in = 0;
  long long positional = 0;
  long long head = 0;
  long long final_norm = 0;
  long long total = 0;
};

// Analytic count matching the built model exactly: biases, two per-block
// norms, final norm, learned positions, and an untied output head included.
inline ParamBreakdown param_count(const ModelConfig& config) {
  config.validate();
  long long d = config.d_model, v = config.vocab_size, l = config.seq_len;
  long long m = config.variant.width_multiple;
  ParamBreakdown pb;
  pb.per_block_mha = 4 * d * d + 4 * d;
  switch (config.variant.layer_count) {
    case 3: pb.per_block_ffn = 24 * d * d + 9 * d; break;
    case 2: pb.per_block_ffn = 2 * m * d * d + (m + 1) * d; break;
    case 1: pb.per_block_ffn = d * d + d; break;
    default: pb.per_block_ffn = 0; break;
  }
  pb.per_block_norms = 4 * d;
  pb.embeddings_in = v * d;
  pb.positional = l * d;
  pb.head = v * d + v;
  pb.final_norm = 2 * d;
  pb.total = config.n_blocks *
                 (pb.per_block_mha + pb.per_block_ffn + pb.per_block_norms) +
             pb.embeddings_in + pb.positional + pb.head + pb.final_norm;
  return pb;
}

// Enumeration oracle: sums element counts over every tensor of a built model.
template <class S>
long long enumerate_count(ModelWeights<S>& weights) {
  long long n = 0;
  weights.for_each_param([&](const std::string&, Tensor<S>& t, bool) {
    n += static_cast<long long>(t.numel());
  });
  return n;
}

// FFN-to-MHA ratio of weight-matrix parameters, with the MHA counted as the
// three q/k/v projections only (3d^2, no output projection, no biases).
inline double ratio_ffn_to_mha(const FfnVariant& variant) {
  variant.validate();
  switch (variant.layer_count) {
    case 3: return 24.0 / 3.0;
    case 2: return 2.0 * variant.width_multiple / 3.0;
    case 1: return 1.0 / 3.0;
    default: return 0.0;
  }
}

struct MatchCandidate {
  ModelConfig config;
  long long total = 0;
  double deviation = 0.0;  // signed (total - target) / target
};

struct MatchResult {
  std::vector<MatchCandidate> candidates;  // sorted by |deviation|
  bool empty() const { return candidates.empty(); }
  bool contains_d_model(int d) const {
    return std::any_of(candidates.begin(), candidates.end(),
                       [&](const MatchCandidate& c) {
                         return c.config.d_model == d;
                       });
  }
  bool contains_depth(int b) const {
    return std::any_of(candidates.begin(), candidates.end(),
                       [&](const MatchCandidate& c) {
                         return c.config.n_blocks == b;
                       });
  }
};

namespace detail {

inline void sort_by_deviation(MatchResult& r) {
  std::stable_sort(r.candidates.begin(), r.candidates.end(),
                   [](const MatchCandidate& a, const MatchCandidate& b) {
                     return std::fabs(a.deviation) < std::fabs(b.deviation);
                   });
}

inline void check_band(long long target, double tolerance) {
  if (target <= 0) throw std::invalid_argument("match: target must be > 0");
  if (tolerance <= 0.0 || tolerance > 0.1)
    throw std::invalid_argument("match: tolerance must be in (0, 0.1]");
}

}  // namespace detail

// Widths (multiples of head_div) whose total lands within tolerance of
// target at fixed depth. base supplies everything except d_model.
inline MatchResult match_width(const FfnVariant& variant, int n_blocks,
                               long long target, double tolerance,
                               int head_div, const ModelConfig& base = {}) {
  detail::check_band(target, tolerance);
  if (head_div < 1) throw std::invalid_argument("match_width: head_div >= 1");
  MatchResult r;
  for (int d = head_div;; d += head_div) {
    ModelConfig c = base;
    c.variant = variant;
    c.n_blocks = n_blocks;
    c.d_model = d;
    c.n_heads = head_div;
    long long total = param_count(c).total;
    double dev = static_cast<double>(total - target) / target;
    if (std::fabs(dev) <= tolerance) r.candidates.push_back({c, total, dev});
    if (dev > tolerance) break;  // counts are increasing in d
  }
  detail::sort_by_deviation(r);
  return r;
}

// Depths whose total lands within tolerance of target at fixed width.
inline MatchResult match_depth(const FfnVariant& variant, int d_model,
                               long long target, double tolerance,
                               const ModelConfig& base = {}) {
  detail::check_band(target, tolerance);
  MatchResult r;
  for (int b = 1;; ++b) {
    ModelConfig c = base;
    c.variant = variant;
    c.d_model = d_model;
    c.n_blocks = b;
    if (d_model % c.n_heads != 0) c.n_heads = 1;
    long long total = param_count(c).total;
    double dev = static_cast<double>(total - target) / target;
    if (std::fabs(dev) <= tolerance) r.candidates.push_back({c, total, dev});
    if (dev > tolerance) break;
  }
  detail::sort_by_deviation(r);
  return r;
}

}  // namespace ffnlab
