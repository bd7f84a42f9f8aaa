#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ffnlab/autograd.hpp"
#include "gradcheck.hpp"

using namespace ffnlab;
using ffnlab::testing::gradcheck;
using ffnlab::testing::random_tensor;

namespace {

// Independent normal-CDF oracle: Simpson quadrature of the density.
double normal_cdf_quadrature(double x) {
  const double lo = -10.0;
  const int n = 20000;  // even
  double h = (x - lo) / n;
  auto pdf = [](double t) {
    return std::exp(-0.5 * t * t) / std::sqrt(2.0 * 3.14159265358979323846);
  };
  double acc = pdf(lo) + pdf(x);
  for (int i = 1; i < n; ++i) acc += pdf(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("gelu pointwise values") {
  TapeD tape;
  tape.set_recording(false);
  TensorD x = TensorD::from({3}, {0.0, 1.0, -10.0});
  TensorD y = ops::gelu(tape, x);
  CHECK((*y.data)[0] == 0.0);
  CHECK((*y.data)[1] == doctest::Approx(1.0 * normal_cdf_quadrature(1.0))
                            .epsilon(1e-6));
  CHECK((*y.data)[1] == doctest::Approx(0.841345).epsilon(1e-5));
  CHECK(std::fabs((*y.data)[2]) < 1e-8);
}

TEST_CASE("softmax rows") {
  TapeD tape;
  tape.set_recording(false);
  TensorD x = TensorD::from(
      {3, 4}, {0, 0, 0, 0, 1000, 1000, 1000, 1000, std::log(1.0),
               std::log(3.0), std::log(3.0), std::log(5.0)});
  TensorD y = ops::softmax_rows(tape, x);
  for (int j = 0; j < 4; ++j) {
    CHECK((*y.data)[j] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK((*y.data)[4 + j] == doctest::Approx(0.25).epsilon(1e-9));
  }
  // two-class closed form on a separate row
  TensorD z = TensorD::from({1, 2}, {std::log(1.0), std::log(3.0)});
  TensorD p = ops::softmax_rows(tape, z);
  CHECK((*p.data)[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK((*p.data)[1] == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("softmax properties: row sums and shift invariance") {
  RngStream rng(7, "softmax-prop");
  TapeD tape;
  tape.set_recording(false);
  for (int trial = 0; trial < 20; ++trial) {
    TensorD x = random_tensor({4, 6}, rng, 5.0);
    TensorD y = ops::softmax_rows(tape, x);
    TensorD xs = TensorD::zeros({4, 6});
    for (int i = 0; i < 4; ++i) {
      double shift = rng.uniform(-100.0, 100.0);
      for (int j = 0; j < 6; ++j)
        (*xs.data)[i * 6 + j] = (*x.data)[i * 6 + j] + shift;
    }
    TensorD ys = ops::softmax_rows(tape, xs);
    for (int i = 0; i < 4; ++i) {
      double sum = 0;
      for (int j = 0; j < 6; ++j) {
        sum += (*y.data)[i * 6 + j];
        CHECK((*y.data)[i * 6 + j] ==
              doctest::Approx((*ys.data)[i * 6 + j]).epsilon(1e-6));
        CHECK((*y.data)[i * 6 + j] >= 0.0);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("layer_norm examples") {
  TapeD tape;
  tape.set_recording(false);
  TensorD gain = TensorD::from({2}, {1.0, 1.0});
  TensorD bias = TensorD::from({2}, {0.0, 0.0});

  TensorD c = TensorD::from({1, 2}, {3.5, 3.5});
  TensorD yc = ops::layer_norm(tape, c, gain, bias, 1e-5);
  CHECK(std::fabs((*yc.data)[0]) < 1e-9);
  CHECK(std::fabs((*yc.data)[1]) < 1e-9);

  TensorD x = TensorD::from({1, 2}, {1.0, 3.0});
  TensorD y = ops::layer_norm(tape, x, gain, bias, 1e-12);
  CHECK((*y.data)[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK((*y.data)[1] == doctest::Approx(1.0).epsilon(1e-5));

  TensorD g0 = TensorD::from({2}, {0.0, 0.0});
  TensorD b = TensorD::from({2}, {2.5, -1.0});
  TensorD yb = ops::layer_norm(tape, x, g0, b, 1e-5);
  CHECK((*yb.data)[0] == doctest::Approx(2.5));
  CHECK((*yb.data)[1] == doctest::Approx(-1.0));
}

TEST_CASE("cross_entropy_mean values") {
  TapeD tape;
  tape.set_recording(false);
  int v = 10000;
  TensorD uniform = TensorD::zeros({2, v});
  TensorD l1 = ops::cross_entropy_mean(tape, uniform, {3, 9999});
  CHECK(l1.scalar() == doctest::Approx(std::log(10000.0)).epsilon(1e-5));

  TensorD confident = TensorD::zeros({1, 4});
  (*confident.data)[2] = 200.0;
  TensorD l2 = ops::cross_entropy_mean(tape, confident, {2});
  CHECK(l2.scalar() < 1e-12);

  TensorD two = TensorD::from({1, 2}, {std::log(3.0), std::log(1.0)});
  TensorD l3 = ops::cross_entropy_mean(tape, two, {0});
  CHECK(l3.scalar() == doctest::Approx(-std::log(0.75)).epsilon(1e-6));
  CHECK(l3.scalar() == doctest::Approx(0.28768).epsilon(1e-4));

  CHECK_THROWS_AS(ops::cross_entropy_mean(tape, two, {2}),
                  std::out_of_range);
}

TEST_CASE("cross_entropy of equal logits is ln(V) for any targets") {
  RngStream rng(11, "ce-prop");
  TapeD tape;
  tape.set_recording(false);
  for (int v : {2, 7, 100}) {
    TensorD logits = TensorD::zeros({5, v});
    double fill = rng.uniform(-3.0, 3.0);
    std::fill(logits.data->begin(), logits.data->end(), fill);
    std::vector<int> targets(5);
    for (auto& t : targets) t = static_cast<int>(rng.next_below(v));
    TensorD l = ops::cross_entropy_mean(tape, logits, targets);
    CHECK(l.scalar() == doctest::Approx(std::log(v)).epsilon(1e-5));
  }
}

TEST_CASE("backward: sum gives ones, fan-out sums gradients") {
  TapeD tape;
  TensorD x = TensorD::from({2, 2}, {1.0, -2.0, 3.0, 0.5});
  x.ensure_grad();
  TensorD s = ops::sum_all(tape, x);
  tape.backward(s);
  for (double g : *x.grad) CHECK(g == 1.0);

  TapeD tape2;
  TensorD y = TensorD::from({3}, {1.0, 2.0, 3.0});
  y.ensure_grad();
  TensorD a = ops::scale(tape2, y, 2.0);
  TensorD b = ops::scale(tape2, y, 3.0);
  TensorD c = ops::add(tape2, a, b);
  TensorD s2 = ops::sum_all(tape2, c);
  tape2.backward(s2);
  for (double g : *y.grad) CHECK(g == doctest::Approx(5.0));

  TensorD not_scalar = TensorD::zeros({2});
  TapeD tape3;
  CHECK_THROWS_AS(tape3.backward(not_scalar), std::invalid_argument);
}

TEST_CASE("gradient check: every primitive") {
  RngStream rng(42, "gradcheck");

  SUBCASE("matmul") {
    TensorD a = random_tensor({3, 4}, rng);
    TensorD b = random_tensor({4, 5}, rng);
    double err = gradcheck(
        [&](TapeD& t) {
          TensorD c = ops::matmul(t, a, b);
          return ops::sum_all(t, c);
        },
        {&a, &b});
    CHECK(err < 1e-4);
  }
  SUBCASE("add and add_bias and scale") {
    TensorD a = random_tensor({2, 3}, rng);
    TensorD b = random_tensor({2, 3}, rng);
    TensorD bias = random_tensor({3}, rng);
    double err = gradcheck(
        [&](TapeD& t) {
          TensorD c = ops::add(t, a, b);
          TensorD d = ops::add_bias(t, c, bias);
          TensorD e = ops::scale(t, d, -1.7);
          TensorD g = ops::gelu(t, e);  // nonlinearity so gradients vary
          return ops::sum_all(t, g);
        },
        {&a, &b, &bias});
    CHECK(err < 1e-4);
  }
  SUBCASE("transpose") {
    TensorD a = random_tensor({3, 4}, rng);
    TensorD w = random_tensor({3, 4}, rng);
    double err = gradcheck(
        [&](TapeD& t) {
          TensorD at = ops::transpose(t, a);
          TensorD c = ops::matmul(t, at, w);
          TensorD g = ops::gelu(t, c);
          return ops::sum_all(t, g);
        },
        {&a, &w});
    CHECK(err < 1e-4);
  }
  SUBCASE("gather_rows") {
    TensorD table = random_tensor({5, 3}, rng);
    std::vector<int> ids = {1, 4, 1, 0};
    double err = gradcheck(
        [&](TapeD& t) {
          TensorD g = ops::gather_rows(t, table, ids);
          TensorD a = ops::gelu(t, g);
          return ops::sum_all(t, a);
        },
        {&table});
    CHECK(err < 1e-4);
  }
  SUBCASE("causal_mask_fill + softmax_rows") {
    TensorD x = random_tensor({4, 4}, rng, 2.0);
    TensorD v = random_tensor({4, 2}, rng);
    double err = gradcheck(
        [&](TapeD& t) {
          TensorD m = ops::causal_mask_fill(t, x);
          TensorD p = ops::softmax_rows(t, m);
          TensorD c = ops::matmul(t, p, v);
          TensorD g = ops::gelu(t, c);
          return ops::sum_all(t, g);
        },
        {&x, &v});
    CHECK(err < 1e-4);
  }
  SUBCASE("layer_norm") {
    TensorD x = random_tensor({3, 6}, rng, 2.0);
    TensorD gain = random_tensor({6}, rng);
    TensorD bias = random_tensor({6}, rng);
    double err = gradcheck(
        [&](TapeD& t) {
          TensorD y = ops::layer_norm(t, x, gain, bias, 1e-5);
          TensorD g = ops::gelu(t, y);
          return ops::sum_all(t, g);
        },
        {&x, &gain, &bias});
    CHECK(err < 1e-4);
  }
  SUBCASE("gelu") {
    TensorD x = random_tensor({4, 4}, rng, 3.0);
    double err = gradcheck(
        [&](TapeD& t) {
          TensorD y = ops::gelu(t, x);
          TensorD z = ops::gelu(t, y);
          return ops::sum_all(t, z);
        },
        {&x});
    CHECK(err < 1e-4);
  }
  SUBCASE("dropout with replayed mask") {
    TensorD x = random_tensor({4, 4}, rng);
    double err = gradcheck(
        [&](TapeD& t) {
          RngStream drop(123, "drop");  // same mask on every call
          TensorD y = ops::dropout(t, x, 0.5, true, drop);
          TensorD g = ops::gelu(t, y);
          return ops::sum_all(t, g);
        },
        {&x});
    CHECK(err < 1e-4);
  }
  SUBCASE("cross_entropy_mean") {
    TensorD logits = random_tensor({4, 6}, rng, 2.0);
    std::vector<int> targets = {2, 0, 5, 5};
    double err = gradcheck(
        [&](TapeD& t) {
          return ops::cross_entropy_mean(t, logits, targets);
        },
        {&logits});
    CHECK(err < 1e-4);
  }
  SUBCASE("slice_cols + concat_cols") {
    TensorD x = random_tensor({3, 6}, rng);
    double err = gradcheck(
        [&](TapeD& t) {
          TensorD a = ops::slice_cols(t, x, 0, 2);
          TensorD b = ops::slice_cols(t, x, 2, 4);
          TensorD ga = ops::gelu(t, a);
          std::vector<TensorD> parts = {ga, b};
          TensorD c = ops::concat_cols(t, parts);
          TensorD g = ops::gelu(t, c);
          return ops::sum_all(t, g);
        },
        {&x});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("dropout invariants") {
  RngStream rng(5, "drop-inv");
  TapeD tape;
  tape.set_recording(false);
  TensorD x = random_tensor({4, 4}, rng);

  RngStream d1(1, "d");
  TensorD y0 = ops::dropout(tape, x, 0.0, true, d1);
  for (size_t i = 0; i < x.numel(); ++i)
    CHECK((*y0.data)[i] == (*x.data)[i]);

  TensorD ye = ops::dropout(tape, x, 0.3, false, d1);
  for (size_t i = 0; i < x.numel(); ++i)
    CHECK((*ye.data)[i] == (*x.data)[i]);

  // expected-value preservation at p=0.1 over 1e5 masked samples
  TensorD ones = TensorD::zeros({100});
  std::fill(ones.data->begin(), ones.data->end(), 1.0);
  RngStream d2(77, "mask");
  double acc = 0.0;
  int reps = 1000;  // 1000 * 100 = 1e5 samples
  for (int r = 0; r < reps; ++r) {
    TensorD y = ops::dropout(tape, ones, 0.1, true, d2);
    for (double v : *y.data) acc += v;
  }
  double mean = acc / (reps * 100.0);
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("causal mask blocks information flow") {
  TapeD tape;
  tape.set_recording(false);
  RngStream rng(9, "mask-flow");
  TensorD x = random_tensor({4, 4}, rng);
  TensorD m1 = ops::causal_mask_fill(tape, x);
  // perturb a strictly-future entry; masked output unchanged
  (*x.data)[0 * 4 + 3] += 100.0;
  TensorD m2 = ops::causal_mask_fill(tape, x);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j <= i; ++j)
      CHECK((*m1.data)[i * 4 + j] == (*m2.data)[i * 4 + j]);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS(TensorD::from({2, 2}, {1.0, 2.0}));
  CHECK_THROWS(TensorD::zeros({0, 3}));
  TensorD t = TensorD::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(shape_numel(t.shape) == t.numel());
}
