#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ffnlab/autograd.hpp"
#include "ffnlab/tensor.hpp"

namespace ffnlab::testing {

// Central finite differences (step h) against the analytic gradients of the
// scalar produced by forward(). forward must be re-runnable: the tape passed
// in is used for the analytic pass only, FD passes run without recording.
// Returns the max of |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
inline double gradcheck(const std::function<TensorD(TapeD&)>& forward,
                        std::vector<TensorD*> leaves, double h = 1e-3) {
  for (TensorD* t : leaves) {
    t->ensure_grad();
    t->zero_grad();
  }
  TapeD tape;
  TensorD loss = forward(tape);
  tape.backward(loss);

  double worst = 0.0;
  TapeD no_tape;
  no_tape.set_recording(false);
  for (TensorD* t : leaves) {
    for (size_t i = 0; i < t->numel(); ++i) {
      double saved = (*t->data)[i];
      (*t->data)[i] = saved + h;
      double up = forward(no_tape).scalar();
      (*t->data)[i] = saved - h;
      double down = forward(no_tape).scalar();
      (*t->data)[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double analytic = (*t->grad)[i];
      double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
      worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
  }
  return worst;
}

inline TensorD random_tensor(std::vector<int> shape, RngStream& rng,
                             double scale = 1.0) {
  TensorD t = TensorD::zeros(std::move(shape));
  for (auto& v : *t.data) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace ffnlab::testing
