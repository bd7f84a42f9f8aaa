#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffnlab/autograd.hpp"
#include "ffnlab/rng.hpp"
#include "ffnlab/tensor.hpp"

namespace ffnlab {

// FFN architecture of a block: how many linear layers it has, and the
// hidden-width multiple for the two-layer form.
struct FfnVariant {
  int layer_count = 2;
  int width_multiple = 4;

  void validate() const {
    if (layer_count < 0 || layer_count > 3)
      throw std::invalid_argument("FfnVariant: layer_count must be in 0..3");
    if (width_multiple < 1)
      throw std::invalid_argument("FfnVariant: width_multiple must be >= 1");
    if (layer_count != 2 && width_multiple != 4)
      throw std::invalid_argument(
          "FfnVariant: width_multiple is only adjustable for two-layer FFNs");
  }
};

struct ModelConfig {
  int n_blocks = 24;
  int d_model = 1024;
  int n_heads = 16;
  int vocab_size = 10000;
  int seq_len = 256;
  double dropout_p = 0.1;
  FfnVariant variant;

  void validate() const {
    variant.validate();
    if (n_blocks < 0) throw std::invalid_argument("n_blocks must be >= 0");
    if (d_model <= 0 || n_heads <= 0)
      throw std::invalid_argument("d_model and n_heads must be positive");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("d_model must be divisible by n_heads");
    if (seq_len < 1) throw std::invalid_argument("seq_len must be >= 1");
    if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw std::invalid_argument("dropout_p must be in [0,1)");
  }

  // FFN layer widths as (in, out) pairs, chained d -> ... -> d.
  std::vector<std::pair<int, int>> ffn_shapes() const {
    int d = d_model, m = variant.width_multiple;
    switch (variant.layer_count) {
      case 3:
        return {{d, 4 * d}, {4 * d, 4 * d}, {4 * d, d}};
      case 2:
        return {{d, m * d}, {m * d, d}};
      case 1:
        return {{d, d}};
      default:
        return {};
    }
  }
};

template <class S>
struct BlockWeights {
  Tensor<S> w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  std::vector<Tensor<S>> ffn_w, ffn_b;
  Tensor<S> ln1_g, ln1_b, ln2_g, ln2_b;
};

template <class S>
struct ModelWeights {
  ModelConfig config;
  Tensor<S> tok_emb;   // [V, d]
  Tensor<S> pos_emb;   // [L, d]
  std::vector<BlockWeights<S>> blocks;
  Tensor<S> lnf_g, lnf_b;
  Tensor<S> head_w;    // [d, V], untied from tok_emb
  Tensor<S> head_b;    // [V]

  // Visits every parameter in a fixed order. decay marks tensors subject to
  // weight decay (weight matrices and embeddings; not biases or norm params).
  void for_each_param(
      const std::function<void(const std::string&, Tensor<S>&, bool)>& fn) {
    fn("tok_emb", tok_emb, true);
    fn("pos_emb", pos_emb, true);
    for (size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      std::string p = "block" + std::to_string(i) + ".";
      fn(p + "ln1_g", b.ln1_g, false);
      fn(p + "ln1_b", b.ln1_b, false);
      fn(p + "w_q", b.w_q, true);
      fn(p + "b_q", b.b_q, false);
      fn(p + "w_k", b.w_k, true);
      fn(p + "b_k", b.b_k, false);
      fn(p + "w_v", b.w_v, true);
      fn(p + "b_v", b.b_v, false);
      fn(p + "w_o", b.w_o, true);
      fn(p + "b_o", b.b_o, false);
      fn(p + "ln2_g", b.ln2_g, false);
      fn(p + "ln2_b", b.ln2_b, false);
      for (size_t j = 0; j < b.ffn_w.size(); ++j) {
        fn(p + "ffn_w" + std::to_string(j), b.ffn_w[j], true);
        fn(p + "ffn_b" + std::to_string(j), b.ffn_b[j], false);
      }
    }
    fn("lnf_g", lnf_g, false);
    fn("lnf_b", lnf_b, false);
    fn("head_w", head_w, true);
    fn("head_b", head_b, false);
  }

  size_t num_params() {
    size_t n = 0;
    for_each_param([&](const std::string&, Tensor<S>& t, bool) {
      n += t.numel();
    });
    return n;
  }

  void ensure_grads() {
    for_each_param([](const std::string&, Tensor<S>& t, bool) {
      t.ensure_grad();
    });
  }

  void zero_grads() {
    for_each_param([](const std::string&, Tensor<S>& t, bool) {
      t.zero_grad();
    });
  }
};

namespace detail {

template <class S>
void fill_xavier(Tensor<S>& w, RngStream& rng) {
  double bound = std::sqrt(6.0 / (w.dim(0) + w.dim(1)));
  for (auto& v : *w.data) v = static_cast<S>(rng.uniform(-bound, bound));
}

template <class S>
void fill_normal(Tensor<S>& w, RngStream& rng, double stddev) {
  for (auto& v : *w.data) v = static_cast<S>(rng.normal(0.0, stddev));
}

}  // namespace detail

// Allocates all tensors at their final shapes, zero-filled (norm gains one).
// Split from init_model so parameter enumeration does not pay the RNG cost.
template <class S>
ModelWeights<S> allocate_weights(const ModelConfig& config) {
  config.validate();
  int d = config.d_model, v = config.vocab_size, l = config.seq_len;
  ModelWeights<S> w;
  w.config = config;
  w.tok_emb = Tensor<S>::zeros({v, d});
  w.pos_emb = Tensor<S>::zeros({l, d});
  auto shapes = config.ffn_shapes();
  for (int i = 0; i < config.n_blocks; ++i) {
    BlockWeights<S> b;
    b.w_q = Tensor<S>::zeros({d, d});
    b.b_q = Tensor<S>::zeros({d});
    b.w_k = Tensor<S>::zeros({d, d});
    b.b_k = Tensor<S>::zeros({d});
    b.w_v = Tensor<S>::zeros({d, d});
    b.b_v = Tensor<S>::zeros({d});
    b.w_o = Tensor<S>::zeros({d, d});
    b.b_o = Tensor<S>::zeros({d});
    for (auto [in, out] : shapes) {
      b.ffn_w.push_back(Tensor<S>::zeros({in, out}));
      b.ffn_b.push_back(Tensor<S>::zeros({out}));
    }
    b.ln1_g = Tensor<S>::zeros({d});
    b.ln1_b = Tensor<S>::zeros({d});
    b.ln2_g = Tensor<S>::zeros({d});
    b.ln2_b = Tensor<S>::zeros({d});
    std::fill(b.ln1_g.data->begin(), b.ln1_g.data->end(), S(1));
    std::fill(b.ln2_g.data->begin(), b.ln2_g.data->end(), S(1));
    w.blocks.push_back(std::move(b));
  }
  w.lnf_g = Tensor<S>::zeros({d});
  std::fill(w.lnf_g.data->begin(), w.lnf_g.data->end(), S(1));
  w.lnf_b = Tensor<S>::zeros({d});
  w.head_w = Tensor<S>::zeros({d, v});
  w.head_b = Tensor<S>::zeros({v});
  return w;
}

// Xavier uniform for attention and FFN matrices (and the output head),
// Normal(0, 0.02) for embeddings, zero biases, unit norm gains.
template <class S>
ModelWeights<S> init_model(const ModelConfig& config, uint64_t seed) {
  ModelWeights<S> w = allocate_weights<S>(config);
  RngStream rng(seed, "init");
  detail::fill_normal(w.tok_emb, rng, 0.02);
  detail::fill_normal(w.pos_emb, rng, 0.02);
  for (auto& b : w.blocks) {
    detail::fill_xavier(b.w_q, rng);
    detail::fill_xavier(b.w_k, rng);
    detail::fill_xavier(b.w_v, rng);
    detail::fill_xavier(b.w_o, rng);
    for (auto& fw : b.ffn_w) detail::fill_xavier(fw, rng);
  }
  detail::fill_xavier(w.head_w, rng);
  return w;
}

template <class S>
Tensor<S> linear(Tape<S>& tape, Tensor<S>& x, Tensor<S>& w, Tensor<S>& b) {
  Tensor<S> y = ops::matmul(tape, x, w);
  return ops::add_bias(tape, y, b);
}

// Variant-specific FFN sublayer body (residual handled by the caller).
template <class S>
Tensor<S> ffn_forward(Tape<S>& tape, const FfnVariant& variant, Tensor<S>& x,
                      BlockWeights<S>& w, double dropout_p, bool train,
                      RngStream& drop_rng) {
  switch (variant.layer_count) {
    case 3: {
      Tensor<S> h1 = linear(tape, x, w.ffn_w[0], w.ffn_b[0]);
      Tensor<S> a1 = ops::gelu(tape, h1);
      Tensor<S> h2 = linear(tape, a1, w.ffn_w[1], w.ffn_b[1]);
      Tensor<S> a2 = ops::gelu(tape, h2);
      Tensor<S> h3 = linear(tape, a2, w.ffn_w[2], w.ffn_b[2]);
      return ops::dropout(tape, h3, dropout_p, train, drop_rng);
    }
    case 2: {
      Tensor<S> h1 = linear(tape, x, w.ffn_w[0], w.ffn_b[0]);
      Tensor<S> a1 = ops::gelu(tape, h1);
      Tensor<S> h2 = linear(tape, a1, w.ffn_w[1], w.ffn_b[1]);
      return ops::dropout(tape, h2, dropout_p, train, drop_rng);
    }
    case 1: {
      Tensor<S> h1 = linear(tape, x, w.ffn_w[0], w.ffn_b[0]);
      Tensor<S> d1 = ops::dropout(tape, h1, dropout_p, train, drop_rng);
      return ops::gelu(tape, d1);
    }
    default: {
      Tensor<S> d1 = ops::dropout(tape, x, dropout_p, train, drop_rng);
      return ops::gelu(tape, d1);
    }
  }
}

// Causal multi-head scaled dot-product attention with output projection.
template <class S>
Tensor<S> attention_forward(Tape<S>& tape, Tensor<S>& x, BlockWeights<S>& w,
                            int n_heads) {
  int d = x.dim(1);
  int hd = d / n_heads;
  S inv_sqrt_hd = S(1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor<S> q = linear(tape, x, w.w_q, w.b_q);
  Tensor<S> k = linear(tape, x, w.w_k, w.b_k);
  Tensor<S> v = linear(tape, x, w.w_v, w.b_v);
  std::vector<Tensor<S>> heads;
  heads.reserve(n_heads);
  for (int h = 0; h < n_heads; ++h) {
    Tensor<S> qh = ops::slice_cols(tape, q, h * hd, hd);
    Tensor<S> kh = ops::slice_cols(tape, k, h * hd, hd);
    Tensor<S> vh = ops::slice_cols(tape, v, h * hd, hd);
    Tensor<S> kt = ops::transpose(tape, kh);
    Tensor<S> scores = ops::matmul(tape, qh, kt);
    Tensor<S> scaled = ops::scale(tape, scores, inv_sqrt_hd);
    Tensor<S> masked = ops::causal_mask_fill(tape, scaled);
    Tensor<S> probs = ops::softmax_rows(tape, masked);
    heads.push_back(ops::matmul(tape, probs, vh));
  }
  Tensor<S> ctx = ops::concat_cols(tape, heads);
  return linear(tape, ctx, w.w_o, w.b_o);
}

// Pre-norm residual block: x + MHA(LN1(x)), then y + FFN(LN2(y)).
template <class S>
Tensor<S> block_forward(Tape<S>& tape, Tensor<S>& x, BlockWeights<S>& w,
                        const ModelConfig& config, bool train,
                        RngStream& drop_rng) {
  if (x.rank() != 2 || x.dim(1) != config.d_model)
    throw std::invalid_argument("block_forward: bad input shape");
  Tensor<S> n1 = ops::layer_norm(tape, x, w.ln1_g, w.ln1_b, S(1e-5));
  Tensor<S> att = attention_forward(tape, n1, w, config.n_heads);
  Tensor<S> y = ops::add(tape, x, att);
  Tensor<S> n2 = ops::layer_norm(tape, y, w.ln2_g, w.ln2_b, S(1e-5));
  Tensor<S> f = ffn_forward(tape, config.variant, n2, w, config.dropout_p,
                            train, drop_rng);
  return ops::add(tape, y, f);
}

template <class S>
Tensor<S> model_forward(Tape<S>& tape, const std::vector<int>& tokens,
                        ModelWeights<S>& w, bool train, RngStream& drop_rng) {
  const ModelConfig& cfg = w.config;
  int t = static_cast<int>(tokens.size());
  if (t < 1 || t > cfg.seq_len)
    throw std::invalid_argument("model_forward: sequence length out of range");
  for (int id : tokens)
    if (id < 0 || id >= cfg.vocab_size)
      throw std::out_of_range("model_forward: token id out of range");
  Tensor<S> te = ops::gather_rows(tape, w.tok_emb, tokens);
  std::vector<int> positions(t);
  for (int i = 0; i < t; ++i) positions[i] = i;
  Tensor<S> pe = ops::gather_rows(tape, w.pos_emb, positions);
  Tensor<S> e = ops::add(tape, te, pe);
  Tensor<S> h = ops::dropout(tape, e, cfg.dropout_p, train, drop_rng);
  for (auto& b : w.blocks)
    h = block_forward(tape, h, b, cfg, train, drop_rng);
  Tensor<S> n = ops::layer_norm(tape, h, w.lnf_g, w.lnf_b, S(1e-5));
  return linear(tape, n, w.head_w, w.head_b);
}

}  // namespace ffnlab
