#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffnlab/model.hpp"
#include "ffnlab/tensor.hpp"

namespace ffnlab {

struct TrainSchedule {
  double max_lr = 1.5e-4;
  int warmup_steps = 300;
  int total_steps = 0;  // number of training batches (single epoch)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 0.0;  // 0 disables clipping

  void validate() const {
    if (max_lr <= 0.0) throw std::invalid_argument("schedule: max_lr > 0");
    if (warmup_steps < 1 || warmup_steps > total_steps)
      throw std::invalid_argument(
          "schedule: need 0 < warmup_steps <= total_steps");
  }
};

// Linear warmup to max_lr over warmup_steps, then cosine decay to zero at
// total_steps. step is 1-based.
inline double lr_at_step(const TrainSchedule& s, int step) {
  s.validate();
  if (step < 1 || step > s.total_steps)
    throw std::out_of_range("lr_at_step: step out of range");
  if (step <= s.warmup_steps)
    return s.max_lr * static_cast<double>(step) / s.warmup_steps;
  double progress = static_cast<double>(step - s.warmup_steps) /
                    (s.total_steps - s.warmup_steps);
  return s.max_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

// Per-parameter Adam moments; one entry per model parameter, in
// for_each_param order.
template <class S>
struct OptimizerState {
  struct Slot {
    std::vector<S> m;
    std::vector<S> v;
  };
  std::vector<Slot> slots;
  int64_t step = 0;

  template <class Model>
  static OptimizerState for_model(Model& weights) {
    OptimizerState st;
    weights.for_each_param([&](const std::string&, Tensor<S>& t, bool) {
      st.slots.push_back({std::vector<S>(t.numel(), S(0)),
                          std::vector<S>(t.numel(), S(0))});
    });
    return st;
  }
};

// Bias-corrected Adam update with decoupled weight decay on one buffer.
// step is the 1-based optimizer step shared across all parameters.
template <class S>
void adamw_update(S* p, const S* g, S* m, S* v, size_t n,
                  const TrainSchedule& sched, double lr, int64_t step,
                  bool decay) {
  double bc1 = 1.0 - std::pow(sched.beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(sched.beta2, static_cast<double>(step));
  double wd = decay ? sched.weight_decay : 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (wd > 0.0) p[i] -= static_cast<S>(lr * wd) * p[i];
    double mi = sched.beta1 * m[i] + (1.0 - sched.beta1) * g[i];
    double vi = sched.beta2 * v[i] +
                (1.0 - sched.beta2) * static_cast<double>(g[i]) * g[i];
    m[i] = static_cast<S>(mi);
    v[i] = static_cast<S>(vi);
    p[i] -= static_cast<S>(lr * (mi / bc1) /
                           (std::sqrt(vi / bc2) + sched.eps));
  }
}

// One decoupled-weight-decay Adam step over all parameters. Throws before
// touching any parameter if a gradient is non-finite, naming the tensor.
template <class S>
void adamw_step(ModelWeights<S>& weights, OptimizerState<S>& state,
                const TrainSchedule& sched, double lr) {
  if (lr < 0.0) throw std::invalid_argument("adamw_step: lr must be >= 0");
  std::string bad;
  weights.for_each_param([&](const std::string& name, Tensor<S>& t, bool) {
    if (!t.grad) throw std::runtime_error("adamw_step: missing gradient");
    if (bad.empty())
      for (S g : *t.grad)
        if (!std::isfinite(static_cast<double>(g))) {
          bad = name;
          break;
        }
  });
  if (!bad.empty())
    throw std::runtime_error(
        "vanishing/exploding gradient: non-finite gradient in " + bad);

  if (sched.grad_clip > 0.0) {
    double sq = 0.0;
    weights.for_each_param([&](const std::string&, Tensor<S>& t, bool) {
      for (S g : *t.grad) sq += static_cast<double>(g) * g;
    });
    double norm = std::sqrt(sq);
    if (norm > sched.grad_clip) {
      S scale = static_cast<S>(sched.grad_clip / norm);
      weights.for_each_param([&](const std::string&, Tensor<S>& t, bool) {
        for (S& g : *t.grad) g *= scale;
      });
    }
  }

  ++state.step;
  size_t slot = 0;
  weights.for_each_param([&](const std::string&, Tensor<S>& t, bool decay) {
    auto& st = state.slots.at(slot++);
    adamw_update(t.ptr(), t.grad->data(), st.m.data(), st.v.data(), t.numel(),
                 sched, lr, state.step, decay);
  });
}

}  // namespace ffnlab
