#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffnlab/rng.hpp"
#include "ffnlab/tensor.hpp"

namespace ffnlab {

// Reverse-mode tape. Ops append one backward closure per application; the
// closures are replayed in reverse creation order, which is a valid reverse
// topological order because every input tensor exists before its consumer.
template <class S>
class Tape {
 public:
  bool recording() const { return active_; }
  void set_recording(bool on) { active_ = on; }

  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  void backward(Tensor<S>& loss) {
    if (!loss.is_scalar())
      throw std::invalid_argument("backward: loss must be scalar");
    loss.ensure_grad();
    (*loss.grad)[0] = S(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() { ops_.clear(); }
  size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  bool active_ = true;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

namespace detail {

template <class S>
inline void check_finite(const Tensor<S>& t, const char* op) {
#ifndef NDEBUG
  if (!t.all_finite())
    throw std::runtime_error(std::string("non-finite output of ") + op);
#else
  (void)t;
  (void)op;
#endif
}

// C[M,N] (+)= op(A) * op(B). trans flags select which operand is read
// transposed; all layouts are row-major. Loop orders keep the inner loop
// contiguous for the three cases the backward pass needs.
template <class S>
void gemm(const S* a, const S* b, S* c, int m, int k, int n, bool trans_a,
          bool trans_b, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<size_t>(m) * n, S(0));
  if (!trans_a && !trans_b) {
    for (int i = 0; i < m; ++i) {
      const S* arow = a + static_cast<size_t>(i) * k;
      S* crow = c + static_cast<size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        S av = arow[p];
        if (av == S(0)) continue;
        const S* brow = b + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // B is [N,K]; C[i,j] = dot(A row i, B row j)
    for (int i = 0; i < m; ++i) {
      const S* arow = a + static_cast<size_t>(i) * k;
      S* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const S* brow = b + static_cast<size_t>(j) * k;
        S acc = S(0);
        for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    // A is [K,M]; C[i,j] += A[p,i] * B[p,j]
    for (int p = 0; p < k; ++p) {
      const S* arow = a + static_cast<size_t>(p) * m;
      const S* brow = b + static_cast<size_t>(p) * n;
      for (int i = 0; i < m; ++i) {
        S av = arow[i];
        if (av == S(0)) continue;
        S* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        S acc = S(0);
        for (int p = 0; p < k; ++p)
          acc += a[static_cast<size_t>(p) * m + i] *
                 b[static_cast<size_t>(j) * k + p];
        c[static_cast<size_t>(i) * n + j] += acc;
      }
  }
}

template <class S>
inline void prep(Tape<S>& tape, Tensor<S>& out,
                 std::initializer_list<Tensor<S>*> inputs) {
  if (!tape.recording()) return;
  out.ensure_grad();
  for (Tensor<S>* t : inputs) t->ensure_grad();
}

}  // namespace detail

namespace ops {

template <class S>
Tensor<S> matmul(Tape<S>& tape, Tensor<S>& a, Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes");
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> out = Tensor<S>::zeros({m, n});
  detail::gemm(a.ptr(), b.ptr(), out.ptr(), m, k, n, false, false, false);
  detail::check_finite(out, "matmul");
  if (tape.recording()) {
    detail::prep(tape, out, {&a, &b});
    auto ad = a.data, ag = a.grad, bd = b.data, bg = b.grad, og = out.grad;
    tape.record([=]() {
      detail::gemm(og->data(), bd->data(), ag->data(), m, n, k, false, true,
                   true);
      detail::gemm(ad->data(), og->data(), bg->data(), k, m, n, true, false,
                   true);
    });
  }
  return out;
}

template <class S>
Tensor<S> add(Tape<S>& tape, Tensor<S>& a, Tensor<S>& b) {
  if (a.shape != b.shape) throw std::invalid_argument("add: shape mismatch");
  Tensor<S> out = Tensor<S>::zeros(a.shape);
  size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  if (tape.recording()) {
    detail::prep(tape, out, {&a, &b});
    auto ag = a.grad, bg = b.grad, og = out.grad;
    tape.record([=]() {
      for (size_t i = 0; i < og->size(); ++i) {
        (*ag)[i] += (*og)[i];
        (*bg)[i] += (*og)[i];
      }
    });
  }
  return out;
}

// x[R,C] + row vector b[C], broadcast over rows.
template <class S>
Tensor<S> add_bias(Tape<S>& tape, Tensor<S>& x, Tensor<S>& b) {
  if (x.rank() < 1 || b.rank() != 1 || x.shape.back() != b.dim(0))
    throw std::invalid_argument("add_bias: shape mismatch");
  int c = b.dim(0);
  size_t rows = x.numel() / c;
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  for (size_t r = 0; r < rows; ++r)
    for (int j = 0; j < c; ++j)
      (*out.data)[r * c + j] = (*x.data)[r * c + j] + (*b.data)[j];
  if (tape.recording()) {
    detail::prep(tape, out, {&x, &b});
    auto xg = x.grad, bg = b.grad, og = out.grad;
    tape.record([=]() {
      for (size_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) {
          S g = (*og)[r * c + j];
          (*xg)[r * c + j] += g;
          (*bg)[j] += g;
        }
    });
  }
  return out;
}

template <class S>
Tensor<S> scale(Tape<S>& tape, Tensor<S>& x, S factor) {
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  for (size_t i = 0; i < x.numel(); ++i)
    (*out.data)[i] = (*x.data)[i] * factor;
  if (tape.recording()) {
    detail::prep(tape, out, {&x});
    auto xg = x.grad, og = out.grad;
    tape.record([=]() {
      for (size_t i = 0; i < og->size(); ++i) (*xg)[i] += factor * (*og)[i];
    });
  }
  return out;
}

template <class S>
Tensor<S> transpose(Tape<S>& tape, Tensor<S>& x) {
  if (x.rank() != 2) throw std::invalid_argument("transpose: need 2-D");
  int r = x.dim(0), c = x.dim(1);
  Tensor<S> out = Tensor<S>::zeros({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      (*out.data)[static_cast<size_t>(j) * r + i] =
          (*x.data)[static_cast<size_t>(i) * c + j];
  if (tape.recording()) {
    detail::prep(tape, out, {&x});
    auto xg = x.grad, og = out.grad;
    tape.record([=]() {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          (*xg)[static_cast<size_t>(i) * c + j] +=
              (*og)[static_cast<size_t>(j) * r + i];
    });
  }
  return out;
}

template <class S>
Tensor<S> gather_rows(Tape<S>& tape, Tensor<S>& table,
                      const std::vector<int>& ids) {
  if (table.rank() != 2) throw std::invalid_argument("gather_rows: need 2-D");
  int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw std::out_of_range("gather_rows: id out of range");
  int t = static_cast<int>(ids.size());
  Tensor<S> out = Tensor<S>::zeros({t, d});
  for (int i = 0; i < t; ++i)
    std::copy_n(table.ptr() + static_cast<size_t>(ids[i]) * d, d,
                out.ptr() + static_cast<size_t>(i) * d);
  if (tape.recording()) {
    detail::prep(tape, out, {&table});
    auto tg = table.grad, og = out.grad;
    auto ids_copy = ids;
    tape.record([=]() {
      for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j)
          (*tg)[static_cast<size_t>(ids_copy[i]) * d + j] +=
              (*og)[static_cast<size_t>(i) * d + j];
    });
  }
  return out;
}

// Upper-triangle (j > i) entries replaced by a large negative constant so
// softmax assigns them zero probability. No gradient flows to masked slots.
template <class S>
Tensor<S> causal_mask_fill(Tape<S>& tape, Tensor<S>& x) {
  if (x.rank() != 2 || x.dim(0) != x.dim(1))
    throw std::invalid_argument("causal_mask_fill: need square 2-D");
  int t = x.dim(0);
  const S neg = S(-1e30);
  Tensor<S> out = Tensor<S>::zeros({t, t});
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j)
      (*out.data)[static_cast<size_t>(i) * t + j] =
          (j <= i) ? (*x.data)[static_cast<size_t>(i) * t + j] : neg;
  if (tape.recording()) {
    detail::prep(tape, out, {&x});
    auto xg = x.grad, og = out.grad;
    tape.record([=]() {
      for (int i = 0; i < t; ++i)
        for (int j = 0; j <= i; ++j)
          (*xg)[static_cast<size_t>(i) * t + j] +=
              (*og)[static_cast<size_t>(i) * t + j];
    });
  }
  return out;
}

template <class S>
Tensor<S> softmax_rows(Tape<S>& tape, Tensor<S>& x) {
  if (x.rank() != 2) throw std::invalid_argument("softmax_rows: need 2-D");
  int r = x.dim(0), c = x.dim(1);
  Tensor<S> out = Tensor<S>::zeros({r, c});
  for (int i = 0; i < r; ++i) {
    const S* xr = x.ptr() + static_cast<size_t>(i) * c;
    S* yr = out.ptr() + static_cast<size_t>(i) * c;
    S mx = xr[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    S sum = S(0);
    for (int j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (int j = 0; j < c; ++j) yr[j] /= sum;
  }
  detail::check_finite(out, "softmax_rows");
  if (tape.recording()) {
    detail::prep(tape, out, {&x});
    auto xg = x.grad, og = out.grad, od = out.data;
    tape.record([=]() {
      for (int i = 0; i < r; ++i) {
        const S* y = od->data() + static_cast<size_t>(i) * c;
        const S* gy = og->data() + static_cast<size_t>(i) * c;
        S* gx = xg->data() + static_cast<size_t>(i) * c;
        S dot = S(0);
        for (int j = 0; j < c; ++j) dot += gy[j] * y[j];
        for (int j = 0; j < c; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

// Normalizes over the last dimension, then applies the affine (gain, bias).
template <class S>
Tensor<S> layer_norm(Tape<S>& tape, Tensor<S>& x, Tensor<S>& gain,
                     Tensor<S>& bias, S eps = S(1e-5)) {
  if (gain.rank() != 1 || bias.rank() != 1 || x.shape.empty() ||
      x.shape.back() != gain.dim(0) || gain.dim(0) != bias.dim(0))
    throw std::invalid_argument("layer_norm: shape mismatch");
  int d = gain.dim(0);
  size_t rows = x.numel() / d;
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  auto xhat = std::make_shared<std::vector<S>>(x.numel());
  auto inv_std = std::make_shared<std::vector<S>>(rows);
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x.ptr() + r * d;
    S mean = S(0);
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= S(d);
    S var = S(0);
    for (int j = 0; j < d; ++j) {
      S c = xr[j] - mean;
      var += c * c;
    }
    var /= S(d);
    S istd = S(1) / std::sqrt(var + eps);
    (*inv_std)[r] = istd;
    for (int j = 0; j < d; ++j) {
      S h = (xr[j] - mean) * istd;
      (*xhat)[r * d + j] = h;
      (*out.data)[r * d + j] = h * (*gain.data)[j] + (*bias.data)[j];
    }
  }
  detail::check_finite(out, "layer_norm");
  if (tape.recording()) {
    detail::prep(tape, out, {&x, &gain, &bias});
    auto xg = x.grad, gg = gain.grad, bg = bias.grad, og = out.grad;
    auto gd = gain.data;
    tape.record([=]() {
      for (size_t r = 0; r < rows; ++r) {
        const S* h = xhat->data() + r * d;
        const S* gy = og->data() + r * d;
        S* gx = xg->data() + r * d;
        S istd = (*inv_std)[r];
        S sum_dh = S(0), sum_dh_h = S(0);
        for (int j = 0; j < d; ++j) {
          S dh = gy[j] * (*gd)[j];
          sum_dh += dh;
          sum_dh_h += dh * h[j];
          (*gg)[j] += gy[j] * h[j];
          (*bg)[j] += gy[j];
        }
        S m1 = sum_dh / S(d), m2 = sum_dh_h / S(d);
        for (int j = 0; j < d; ++j) {
          S dh = gy[j] * (*gd)[j];
          gx[j] += istd * (dh - m1 - h[j] * m2);
        }
      }
    });
  }
  return out;
}

// Exact-erf GELU: x * Phi(x).
template <class S>
Tensor<S> gelu(Tape<S>& tape, Tensor<S>& x) {
  static const S inv_sqrt2 = S(0.7071067811865475244);
  static const S inv_sqrt2pi = S(0.3989422804014326779);
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  for (size_t i = 0; i < x.numel(); ++i) {
    S v = (*x.data)[i];
    S phi = S(0.5) * std::erfc(-v * inv_sqrt2);
    (*out.data)[i] = v * phi;
  }
  if (tape.recording()) {
    detail::prep(tape, out, {&x});
    auto xd = x.data, xg = x.grad, og = out.grad;
    tape.record([=]() {
      for (size_t i = 0; i < og->size(); ++i) {
        S v = (*xd)[i];
        S phi = S(0.5) * std::erfc(-v * inv_sqrt2);
        S pdf = inv_sqrt2pi * std::exp(S(-0.5) * v * v);
        (*xg)[i] += (*og)[i] * (phi + v * pdf);
      }
    });
  }
  return out;
}

// Inverted dropout: survivors scaled by 1/(1-p) at train time, identity at
// eval time or p == 0. One uniform draw per element.
template <class S>
Tensor<S> dropout(Tape<S>& tape, Tensor<S>& x, double p, bool train,
                  RngStream& rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0,1)");
  if (!train || p == 0.0) {
    Tensor<S> out = Tensor<S>::zeros(x.shape);
    std::copy(x.data->begin(), x.data->end(), out.data->begin());
    if (tape.recording()) {
      detail::prep(tape, out, {&x});
      auto xg = x.grad, og = out.grad;
      tape.record([=]() {
        for (size_t i = 0; i < og->size(); ++i) (*xg)[i] += (*og)[i];
      });
    }
    return out;
  }
  S keep_scale = S(1.0 / (1.0 - p));
  auto mask = std::make_shared<std::vector<S>>(x.numel());
  Tensor<S> out = Tensor<S>::zeros(x.shape);
  for (size_t i = 0; i < x.numel(); ++i) {
    S m = (rng.next_double() < p) ? S(0) : keep_scale;
    (*mask)[i] = m;
    (*out.data)[i] = (*x.data)[i] * m;
  }
  if (tape.recording()) {
    detail::prep(tape, out, {&x});
    auto xg = x.grad, og = out.grad;
    tape.record([=]() {
      for (size_t i = 0; i < og->size(); ++i)
        (*xg)[i] += (*og)[i] * (*mask)[i];
    });
  }
  return out;
}

// Mean over rows of -log softmax(logits)[target]; natural log.
template <class S>
Tensor<S> cross_entropy_mean(Tape<S>& tape, Tensor<S>& logits,
                             const std::vector<int>& targets) {
  if (logits.rank() != 2) throw std::invalid_argument("cross_entropy: 2-D");
  int t = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != t)
    throw std::invalid_argument("cross_entropy: target length mismatch");
  for (int id : targets)
    if (id < 0 || id >= v)
      throw std::out_of_range("cross_entropy: target id out of range");
  auto probs = std::make_shared<std::vector<S>>(logits.numel());
  S loss = S(0);
  for (int i = 0; i < t; ++i) {
    const S* lr = logits.ptr() + static_cast<size_t>(i) * v;
    S* pr = probs->data() + static_cast<size_t>(i) * v;
    S mx = lr[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, lr[j]);
    S sum = S(0);
    for (int j = 0; j < v; ++j) {
      pr[j] = std::exp(lr[j] - mx);
      sum += pr[j];
    }
    for (int j = 0; j < v; ++j) pr[j] /= sum;
    loss -= std::log(pr[targets[i]]);
  }
  Tensor<S> out = Tensor<S>::from({1}, {loss / S(t)});
  detail::check_finite(out, "cross_entropy_mean");
  if (tape.recording()) {
    detail::prep(tape, out, {&logits});
    auto lg = logits.grad, og = out.grad;
    auto tgt = targets;
    tape.record([=]() {
      S g = (*og)[0] / S(t);
      for (int i = 0; i < t; ++i) {
        const S* pr = probs->data() + static_cast<size_t>(i) * v;
        S* gr = lg->data() + static_cast<size_t>(i) * v;
        for (int j = 0; j < v; ++j) gr[j] += g * pr[j];
        gr[tgt[i]] -= g;
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> slice_cols(Tape<S>& tape, Tensor<S>& x, int c0, int n) {
  if (x.rank() != 2 || c0 < 0 || n <= 0 || c0 + n > x.dim(1))
    throw std::invalid_argument("slice_cols: invalid slice");
  int r = x.dim(0), c = x.dim(1);
  Tensor<S> out = Tensor<S>::zeros({r, n});
  for (int i = 0; i < r; ++i)
    std::copy_n(x.ptr() + static_cast<size_t>(i) * c + c0, n,
                out.ptr() + static_cast<size_t>(i) * n);
  if (tape.recording()) {
    detail::prep(tape, out, {&x});
    auto xg = x.grad, og = out.grad;
    tape.record([=]() {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < n; ++j)
          (*xg)[static_cast<size_t>(i) * c + c0 + j] +=
              (*og)[static_cast<size_t>(i) * n + j];
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_cols(Tape<S>& tape, std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int r = parts[0].dim(0), total = 0;
  for (auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != r)
      throw std::invalid_argument("concat_cols: row mismatch");
    total += p.dim(1);
  }
  Tensor<S> out = Tensor<S>::zeros({r, total});
  int off = 0;
  for (auto& p : parts) {
    int c = p.dim(1);
    for (int i = 0; i < r; ++i)
      std::copy_n(p.ptr() + static_cast<size_t>(i) * c, c,
                  out.ptr() + static_cast<size_t>(i) * total + off);
    off += c;
  }
  if (tape.recording()) {
    out.ensure_grad();
    auto og = out.grad;
    int off2 = 0;
    for (auto& p : parts) {
      p.ensure_grad();
      auto pg = p.grad;
      int c = p.dim(1);
      int o = off2;
      tape.record([=]() {
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            (*pg)[static_cast<size_t>(i) * c + j] +=
                (*og)[static_cast<size_t>(i) * total + o + j];
      });
      off2 += c;
    }
  }
  return out;
}

template <class S>
Tensor<S> sum_all(Tape<S>& tape, Tensor<S>& x) {
  S s = S(0);
  for (S v : *x.data) s += v;
  Tensor<S> out = Tensor<S>::from({1}, {s});
  if (tape.recording()) {
    detail::prep(tape, out, {&x});
    auto xg = x.grad, og = out.grad;
    tape.record([=]() {
      for (size_t i = 0; i < xg->size(); ++i) (*xg)[i] += (*og)[0];
    });
  }
  return out;
}

}  // namespace ops
}  // namespace ffnlab
