#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dropcap/datasets.hpp"
#include "dropcap/sensing.hpp"
#include "oracles.hpp"

using namespace dropcap;
using namespace dropcap::sensing;

namespace {

SensingSample random_indicator_sample(int d2, int d0, int n, SeededRng& rng) {
  SensingSample s;
  s.indicator.reserve(n);
  for (int j = 0; j < n; ++j) {
    int r = static_cast<int>(rng.uniform_int(d2));
    int c = static_cast<int>(rng.uniform_int(d0));
    s.indicator.push_back({r, c, rng.gaussian()});
  }
  return s;
}

SensingSample random_dense_sample(int d2, int d0, int n, SeededRng& rng) {
  SensingSample s;
  s.dense.reserve(n);
  for (int j = 0; j < n; ++j)
    s.dense.push_back({random_gaussian(d2, d0, rng), rng.gaussian()});
  return s;
}

FactorPair random_factors(int d2, int d0, int d1, SeededRng& rng,
                          double sd = 0.8) {
  return FactorPair(random_gaussian(d2, d1, rng, sd),
                    random_gaussian(d0, d1, rng, sd));
}

std::vector<double> normalized_probs(int k, SeededRng& rng) {
  std::vector<double> p(k);
  double total = 0.0;
  for (double& x : p) total += (x = 0.2 + rng.uniform01());
  for (double& x : p) x /= total;
  return p;
}

}  // namespace

TEST_CASE("dropout config derives lambda and keep scale") {
  DropoutConfig d(0.5);
  CHECK(d.lambda == doctest::Approx(1.0));
  CHECK(d.keep_scale == doctest::Approx(2.0));
  DropoutConfig z(0.0);
  CHECK(z.lambda == 0.0);
  CHECK(z.keep_scale == 1.0);
  CHECK_THROWS_AS(DropoutConfig(1.0), std::invalid_argument);
  CHECK_THROWS_AS(DropoutConfig(-0.1), std::invalid_argument);
}

TEST_CASE("measurement model validates probability vectors") {
  CHECK_THROWS_AS(MeasurementModel::indicator({0.5, 0.6}, {1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(MeasurementModel::indicator({1.2, -0.2}, {1.0}),
                  std::invalid_argument);
  auto m = MeasurementModel::indicator({0.25, 0.75}, {0.5, 0.5});
  CHECK(m.d2() == 2);
  CHECK(m.d0() == 2);
}

TEST_CASE("single-column dropout objective has the textbook closed form") {
  // d1 = 1, rate 1/2: the mask is 0 or 2 with equal probability, so
  // E_B (y - B m)^2 = (y - m)^2 + m^2.
  FactorPair f(Matrix(1, 1, {0.7}), Matrix(1, 1, {-1.3}));
  double m = 0.7 * -1.3;
  double y = 0.4;
  SensingSample s;
  s.indicator.push_back({0, 0, y});
  DropoutConfig d(0.5);

  double closed = erm_loss(f, s) + d.lambda * explicit_regularizer(f, s);
  CHECK(closed == doctest::Approx((y - m) * (y - m) + m * m).epsilon(1e-14));

  auto mc = dropout_objective_mc(f, s, d, 200000, SeededRng(7, 1));
  CHECK(std::fabs(mc.mean - closed) <= 3.0 * mc.std_error);
}

TEST_CASE("rate zero reproduces the empirical loss bit for bit") {
  SeededRng rng(21, 0);
  FactorPair f = random_factors(5, 4, 3, rng);
  SensingSample s = random_indicator_sample(5, 4, 30, rng);
  auto mc = dropout_objective_mc(f, s, DropoutConfig(0.0), 500, rng.derived(1));
  CHECK(mc.mean == erm_loss(f, s));
  CHECK(mc.std_error == 0.0);
}

TEST_CASE("dropout objective equals loss plus scaled regularizer") {
  SeededRng rng(22, 0);
  for (int trial = 0; trial < 6; ++trial) {
    bool dense = trial % 2 == 1;
    int d2 = 3 + trial % 3, d0 = 2 + trial % 4, d1 = 1 + trial % 4;
    FactorPair f = random_factors(d2, d0, d1, rng);
    SensingSample s = dense ? random_dense_sample(d2, d0, 25, rng)
                            : random_indicator_sample(d2, d0, 40, rng);
    DropoutConfig d(0.1 + 0.15 * trial);
    double closed = erm_loss(f, s) + d.lambda * explicit_regularizer(f, s);
    auto mc = dropout_objective_mc(f, s, d, 120000, rng.derived(100 + trial));
    CHECK(std::fabs(mc.mean - closed) <= 3.0 * mc.std_error);
  }
}

TEST_CASE("loss and regularizer match the plain-loop oracle") {
  SeededRng rng(23, 0);
  FactorPair f = random_factors(4, 5, 3, rng);
  SensingSample si = random_indicator_sample(4, 5, 50, rng);
  SensingSample sd = random_dense_sample(4, 5, 20, rng);
  for (const auto* s : {&si, &sd}) {
    CHECK(erm_loss(f, *s) ==
          doctest::Approx(oracles::sensing_loss(f, *s)).epsilon(1e-12));
    CHECK(explicit_regularizer(f, *s) ==
          doctest::Approx(oracles::sensing_regularizer(f, *s))
              .epsilon(1e-12));
  }
}

TEST_CASE("expected regularizer matches fresh-sample estimates") {
  SeededRng rng(24, 0);
  FactorPair f = random_factors(5, 4, 3, rng);

  auto gm = MeasurementModel::gaussian(5, 4);
  SensingSample gs = random_dense_sample(5, 4, 20000, rng);
  double got = expected_regularizer(f, gm);
  double emp = explicit_regularizer(f, gs);
  CHECK(std::fabs(got - emp) / std::max(1.0, got) < 0.06);

  auto probs_r = normalized_probs(5, rng);
  auto probs_c = normalized_probs(4, rng);
  auto im = MeasurementModel::indicator(probs_r, probs_c);
  Matrix truth = random_gaussian(5, 4, rng);
  SeededRng srng = rng.derived(5);
  auto is = datasets::sample_indicator_observations(truth, im, 20000, srng);
  double got_i = expected_regularizer(f, im);
  double emp_i = explicit_regularizer(f, is);
  CHECK(std::fabs(got_i - emp_i) / std::max(1.0, got_i) < 0.06);
}

TEST_CASE("induced regularizer closed forms") {
  Matrix d34 = Matrix::diag({3.0, 4.0});
  CHECK(induced_regularizer_gaussian(d34, 2) == doctest::Approx(49.0 / 2.0));
  CHECK(induced_regularizer_gaussian(Matrix(3, 3), 3) == 0.0);

  auto uniform22 = MeasurementModel::indicator({0.5, 0.5}, {0.5, 0.5});
  CHECK(induced_regularizer_weighted(Matrix::identity(2), uniform22, 2) ==
        doctest::Approx(0.5));

  SeededRng rng(25, 0);
  Matrix m = random_gaussian(4, 3, rng);
  auto uniform43 =
      MeasurementModel::indicator(std::vector<double>(4, 0.25),
                                  std::vector<double>(3, 1.0 / 3.0));
  double theta_u = induced_regularizer_weighted(m, uniform43, 4);
  double theta_g = induced_regularizer_gaussian(m, 4);
  CHECK(theta_u == doctest::Approx(theta_g / 12.0).epsilon(1e-9));

  // scale invariance: theta(c m) = c^2 theta(m)
  double c = 3.7;
  CHECK(induced_regularizer_gaussian(m.scaled(c), 4) ==
        doctest::Approx(c * c * theta_g).epsilon(1e-8));

  // width below rank is rejected
  Matrix full = random_gaussian(4, 4, rng);
  CHECK_THROWS_AS(induced_regularizer_gaussian(full, 3),
                  std::invalid_argument);
}

TEST_CASE("equalized minimizer hits the induced regularizer") {
  SeededRng rng(26, 0);
  for (int trial = 0; trial < 8; ++trial) {
    int d2 = 3 + trial % 3, d0 = 2 + trial % 3;
    int rank = 1 + trial % 2;
    SeededRng lr = rng.derived(trial);
    Matrix m = datasets::gen_low_rank(d2, d0, rank, lr, false);
    int d1 = rank + 2;
    bool weighted = trial % 2 == 0;
    MeasurementModel model =
        weighted ? MeasurementModel::indicator(normalized_probs(d2, lr),
                                               normalized_probs(d0, lr))
                 : MeasurementModel::gaussian(d2, d0);
    double theta = weighted ? induced_regularizer_weighted(m, model, d1)
                            : induced_regularizer_gaussian(m, d1);

    FactorPair f = equalized_minimizer(m, model, d1);
    double scale = std::max(1.0, m.frobenius_norm());
    CHECK(((f.u * f.v.transposed()) - m).frobenius_norm() <= 1e-8 * scale);
    CHECK(std::fabs(expected_regularizer(f, model) - theta) <=
          1e-8 * std::max(1.0, theta));

    // per-column products of reweighted norms all equal
    std::vector<double> sp(d2, 1.0), sq(d0, 1.0);
    if (weighted) {
      for (int i = 0; i < d2; ++i) sp[i] = std::sqrt(model.row_probs[i]);
      for (int j = 0; j < d0; ++j) sq[j] = std::sqrt(model.col_probs[j]);
    }
    std::vector<double> prods(d1);
    for (int i = 0; i < d1; ++i) {
      double nu = 0.0, nv = 0.0;
      for (int r = 0; r < d2; ++r) nu += sp[r] * sp[r] * f.u(r, i) * f.u(r, i);
      for (int r = 0; r < d0; ++r) nv += sq[r] * sq[r] * f.v(r, i) * f.v(r, i);
      prods[i] = std::sqrt(nu) * std::sqrt(nv);
    }
    for (int i = 1; i < d1; ++i)
      CHECK(std::fabs(prods[i] - prods[0]) <= 1e-8 * std::max(1.0, prods[0]));
  }
}

TEST_CASE("equalized minimizer rank-1 and diag(2,0) specials") {
  SeededRng rng(27, 0);
  Matrix a = random_gaussian(4, 1, rng);
  Matrix b = random_gaussian(3, 1, rng);
  Matrix m = a * b.transposed();
  auto gm = MeasurementModel::gaussian(4, 3);
  FactorPair f = equalized_minimizer(m, gm, 1);
  CHECK(((f.u * f.v.transposed()) - m).frobenius_norm() <= 1e-10);
  CHECK(expected_regularizer(f, gm) ==
        doctest::Approx(induced_regularizer_gaussian(m, 1)).epsilon(1e-10));

  Matrix d20 = Matrix::diag({2.0, 0.0});
  FactorPair f2 = equalized_minimizer(d20, MeasurementModel::gaussian(2, 2), 2);
  for (int i = 0; i < 2; ++i) {
    double prod = std::sqrt(f2.u.col_norm_sq(i)) *
                  std::sqrt(f2.v.col_norm_sq(i));
    CHECK(prod == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("every factorization sits above the induced regularizer") {
  SeededRng rng(28, 0);
  for (int trial = 0; trial < 20; ++trial) {
    int d2 = 2 + trial % 4, d0 = 2 + trial % 3, d1 = 1 + trial % 5;
    FactorPair f = random_factors(d2, d0, d1, rng, 1.0);
    Matrix m = f.u * f.v.transposed();
    auto gm = MeasurementModel::gaussian(d2, d0);
    CHECK(expected_regularizer(f, gm) >=
          induced_regularizer_gaussian(m, d1) - 1e-9);

    auto im = MeasurementModel::indicator(normalized_probs(d2, rng),
                                          normalized_probs(d0, rng));
    CHECK(expected_regularizer(f, im) >=
          induced_regularizer_weighted(m, im, d1) - 1e-9);
  }
}

TEST_CASE("theta minimization oracle cannot beat the closed form") {
  SeededRng rng(29, 0);
  Matrix m = datasets::gen_low_rank(4, 4, 2, rng, false);
  auto im = MeasurementModel::indicator(normalized_probs(4, rng),
                                        normalized_probs(4, rng));
  double theta = induced_regularizer_weighted(m, im, 4);
  auto res = theta_minimization_oracle(m, im, 4, rng.derived(3));
  double scale = std::max(1.0, theta);
  CHECK(res.value >= theta - 1e-6 * scale);
  CHECK(std::fabs(res.value - theta) <= 1e-6 * scale);
  CHECK(res.constraint_residual <= 1e-8 * std::max(1.0, m.frobenius_norm()));
}

TEST_CASE("clip clamps, is idempotent, and never increases the loss") {
  Matrix m(1, 3, {1.5, -0.2, -3.0});
  Matrix g = clip_unit(m);
  CHECK(g(0, 0) == 1.0);
  CHECK(g(0, 1) == -0.2);
  CHECK(g(0, 2) == -1.0);
  CHECK((clip_unit(g) - g).max_abs() == 0.0);

  SeededRng rng(30, 0);
  for (int trial = 0; trial < 10; ++trial) {
    FactorPair f = random_factors(4, 4, 3, rng, 1.0);
    SensingSample s;
    for (int j = 0; j < 30; ++j) {
      int r = static_cast<int>(rng.uniform_int(4));
      int c = static_cast<int>(rng.uniform_int(4));
      s.indicator.push_back({r, c, 2.0 * rng.uniform01() - 1.0});
    }
    Matrix clipped = clip_unit(f.u * f.v.transposed());
    double clipped_loss = 0.0;
    for (const auto& o : s.indicator) {
      double res = o.y - clipped(o.row, o.col);
      clipped_loss += res * res;
    }
    clipped_loss /= static_cast<double>(s.indicator.size());
    CHECK(clipped_loss <= erm_loss(f, s) + 1e-12);
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  SeededRng rng(31, 0);
  for (int trial = 0; trial < 4; ++trial) {
    bool dense = trial % 2 == 1;
    FactorPair f = random_factors(3, 4, 2, rng);
    SensingSample s = dense ? random_dense_sample(3, 4, 8, rng)
                            : random_indicator_sample(3, 4, 15, rng);
    DropoutConfig d(0.3);

    auto objective = [&] {
      return erm_loss(f, s) + d.lambda * explicit_regularizer(f, s);
    };
    FactorGrad g = loss_gradient(f, s);
    FactorGrad gr = regularizer_gradient(f, s);
    Matrix want_u = g.du + gr.du.scaled(d.lambda);
    Matrix want_v = g.dv + gr.dv.scaled(d.lambda);
    Matrix fd_u = oracles::fd_gradient(f.u, objective);
    Matrix fd_v = oracles::fd_gradient(f.v, objective);
    CHECK(oracles::max_rel_err(want_u, fd_u) < 1e-5);
    CHECK(oracles::max_rel_err(want_v, fd_v) < 1e-5);
  }
}

TEST_CASE("sampled-mask gradients average to the explicit-penalty gradient") {
  SeededRng rng(32, 0);
  FactorPair f = random_factors(3, 2, 2, rng);
  SensingSample s = random_indicator_sample(3, 2, 12, rng);
  DropoutConfig d(0.4);

  FactorGrad g = loss_gradient(f, s);
  FactorGrad gr = regularizer_gradient(f, s);
  Matrix want_u = g.du + gr.du.scaled(d.lambda);
  Matrix want_v = g.dv + gr.dv.scaled(d.lambda);

  const int trials = 100000;
  std::vector<double> mask(f.d1());
  Matrix sum_u(3, 2), sum_v(2, 2), sq_u(3, 2), sq_v(2, 2);
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < f.d1(); ++i)
      mask[i] = rng.bernoulli(1.0 - d.rate) ? d.keep_scale : 0.0;
    FactorGrad mg = masked_loss_gradient(f, s, mask);
    for (std::size_t k = 0; k < sum_u.data().size(); ++k) {
      sum_u.data()[k] += mg.du.data()[k];
      sq_u.data()[k] += mg.du.data()[k] * mg.du.data()[k];
    }
    for (std::size_t k = 0; k < sum_v.data().size(); ++k) {
      sum_v.data()[k] += mg.dv.data()[k];
      sq_v.data()[k] += mg.dv.data()[k] * mg.dv.data()[k];
    }
  }
  auto check_close = [&](const Matrix& sum, const Matrix& sq,
                         const Matrix& want) {
    for (std::size_t k = 0; k < sum.data().size(); ++k) {
      double mean = sum.data()[k] / trials;
      double var = sq.data()[k] / trials - mean * mean;
      double se = std::sqrt(std::max(var, 0.0) / trials);
      CHECK(std::fabs(mean - want.data()[k]) <= 3.0 * se + 1e-12);
    }
  };
  check_close(sum_u, sq_u, want_u);
  check_close(sum_v, sq_v, want_v);
}

TEST_CASE("explicit-penalty training at rate zero is plain sgd") {
  SeededRng rng(33, 0);
  SensingSample train = random_indicator_sample(6, 5, 40, rng);
  SeededRng init_rng(33, 1);
  FactorPair init = he_init_factors(6, 5, 3, init_rng);
  TrainHp hp{0.05, 8, 4};

  auto got = sgd_dropout_train(init, train, DropoutConfig(0.0), hp,
                               TrainMode::kExplicitPenalty, SeededRng(33, 2));

  // reference loop: same batch draws, same step rule, no regularizer
  FactorPair f = init;
  SeededRng ref_rng(33, 2);
  const int steps = (40 + hp.batch_size - 1) / hp.batch_size;
  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    for (int step = 0; step < steps; ++step) {
      SensingSample mb;
      for (int b = 0; b < hp.batch_size; ++b)
        mb.indicator.push_back(train.indicator[ref_rng.uniform_int(40)]);
      FactorGrad g = loss_gradient(f, mb);
      for (std::size_t k = 0; k < f.u.data().size(); ++k)
        f.u.data()[k] -= hp.lr * g.du.data()[k];
      for (std::size_t k = 0; k < f.v.data().size(); ++k)
        f.v.data()[k] -= hp.lr * g.dv.data()[k];
    }
  }
  CHECK((got.factors.u - f.u).max_abs() == 0.0);
  CHECK((got.factors.v - f.v).max_abs() == 0.0);
  CHECK_FALSE(got.diverged);
  CHECK(got.records.size() == 4);
}

TEST_CASE("mask and penalty modes agree bitwise over one rate-zero step") {
  SeededRng rng(34, 0);
  SensingSample train = random_dense_sample(3, 3, 10, rng);
  SeededRng init_rng(34, 1);
  FactorPair init = he_init_factors(3, 3, 2, init_rng);
  TrainHp hp{0.1, 10, 1};
  auto a = sgd_dropout_train(init, train, DropoutConfig(0.0), hp,
                             TrainMode::kSampledMask, SeededRng(34, 2));
  auto b = sgd_dropout_train(init, train, DropoutConfig(0.0), hp,
                             TrainMode::kExplicitPenalty, SeededRng(34, 2));
  CHECK((a.factors.u - b.factors.u).max_abs() == 0.0);
  CHECK((a.factors.v - b.factors.v).max_abs() == 0.0);
}

TEST_CASE("trainer flags divergence and emits the diagnostic record") {
  SeededRng rng(35, 0);
  SensingSample train = random_indicator_sample(4, 4, 20, rng);
  SeededRng init_rng(35, 1);
  FactorPair init = he_init_factors(4, 4, 2, init_rng);
  TrainHp hp{1e9, 10, 5};
  auto res = sgd_dropout_train(init, train, DropoutConfig(0.2), hp,
                               TrainMode::kSampledMask, SeededRng(35, 2));
  CHECK(res.diverged);
  CHECK(res.records.size() < 5);
  CHECK((std::isnan(res.records.back().train_loss) ||
         res.records.back().train_loss > 1e6));
}

TEST_CASE("training records carry the run metadata and derived columns") {
  SeededRng rng(36, 0);
  SensingSample train = random_indicator_sample(5, 4, 30, rng);
  SensingSample test = random_indicator_sample(5, 4, 10, rng);
  SeededRng init_rng(36, 1);
  FactorPair init = he_init_factors(5, 4, 3, init_rng);
  TrainHp hp{0.05, 10, 3};
  RunMeta meta{"cfeed-s9", 9};
  auto res = sgd_dropout_train(init, train, DropoutConfig(0.25), hp,
                               TrainMode::kSampledMask, SeededRng(36, 2),
                               &test, meta);
  REQUIRE(res.records.size() == 3);
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    const auto& r = res.records[i];
    CHECK(r.run_id == "cfeed-s9");
    CHECK(r.seed == 9);
    CHECK(r.epoch == static_cast<int>(i) + 1);
    CHECK(r.width == 3);
    CHECK(r.dropout_rate == 0.25);
    CHECK(r.alpha_hat == doctest::Approx(3.0 * r.reg_value));
    CHECK(r.gap == doctest::Approx(r.test_loss - r.train_loss));
    CHECK(r.beta_hat == 0.0);
    CHECK(r.phi >= 1.0 / std::sqrt(3.0) - 1e-12);
    CHECK(r.phi <= 1.0 + 1e-12);
  }
}

TEST_CASE("completion bound formula and degenerate cases") {
  // alpha = 0 and 0.25 log(2/delta) = 1 leaves exactly 8 sqrt(1/n)
  double delta = 2.0 * std::exp(-4.0);
  CHECK(gen_bound_mc(0.3, 0.0, 2, 64, delta) == doctest::Approx(1.3));
  // re-derivation on a generic tuple
  double want = 0.1 + 8.0 * std::sqrt((2.0 * 1.7 * 100.0 * std::log(100.0) +
                                       0.25 * std::log(2.0 / 0.05)) /
                                      10000.0);
  CHECK(gen_bound_mc(0.1, 1.7, 100, 10000, 0.05) == doctest::Approx(want));
  CHECK(gen_bound_mc(0.1, 1.7, 100, 20000, 0.05) <
        gen_bound_mc(0.1, 1.7, 100, 10000, 0.05));
  CHECK(gen_bound_mc(0.1, 2.0, 100, 10000, 0.05) >
        gen_bound_mc(0.1, 1.7, 100, 10000, 0.05));
  CHECK(gen_bound_mc(0.1, 1.7, 100, 10000, 0.05) >= 0.1);
  CHECK_THROWS_AS(gen_bound_mc(0.1, 1.7, 100, 10000, 1.5),
                  std::invalid_argument);
  CHECK_THROWS_AS(gen_bound_mc(0.1, -1.0, 100, 10000, 0.05),
                  std::invalid_argument);
}

TEST_CASE("optimistic bound formula and 1/n decay") {
  CHECK(gen_bound_optimistic(0.0, 2, 4, std::exp(-1.0), 1.0) ==
        doctest::Approx(1.0));
  double want = (2.0 * 1.0 * std::pow(std::log(1e5), 3.0) * 1.0 * 50.0 *
                     std::log(50.0) +
                 4.0 * 1.0 * std::log(1.0 / 0.05)) /
                1e5;
  CHECK(gen_bound_optimistic(1.0, 50, 100000, 0.05, 1.0) ==
        doctest::Approx(want));
  // log(n)^3 / n is only decreasing past n ~ e^3, so start the grid there
  for (std::size_t n : {64u, 512u, 4096u})
    CHECK(gen_bound_optimistic(1.0, 50, 2 * n, 0.05, 1.0) <
          gen_bound_optimistic(1.0, 50, n, 0.05, 1.0));
}

TEST_CASE("regularizer concentration shrinks like one over sqrt n") {
  SeededRng rng(37, 0);
  Matrix a = random_gaussian(4, 1, rng);
  Matrix b = random_gaussian(5, 1, rng);
  FactorPair f(a, b);
  auto model = MeasurementModel::indicator(normalized_probs(4, rng),
                                           normalized_probs(5, rng));
  auto audit = concentration_audit(f, model, {100, 1000, 10000}, 100,
                                   rng.derived(1));
  REQUIRE(audit.rows.size() == 3);
  CHECK(audit.rows[0].n == 100);
  CHECK(audit.rows[2].mean_abs_dev < audit.rows[0].mean_abs_dev);

  // empirical envelope at n = 1000 for a rank-1 pair with known gamma
  double cap = 5.0 * audit.gamma_sq / std::sqrt(1000.0);
  CHECK(audit.rows[1].mean_abs_dev <= cap);

  double max_row_sq = 0.0;
  for (int r = 0; r < 4; ++r)
    max_row_sq = std::max(max_row_sq, a(r, 0) * a(r, 0));
  CHECK(audit.gamma_sq ==
        doctest::Approx(max_row_sq * b.max_abs() * b.max_abs()));
}

TEST_CASE("vectorized regularizer reduces to closed forms") {
  SeededRng rng(38, 0);
  Matrix m = random_gaussian(3, 4, rng);
  DropoutConfig d(0.4);

  Matrix eye = Matrix::identity(12);
  CHECK(vectorized_regularizer(m, eye, d) ==
        doctest::Approx(d.lambda * m.frobenius_norm() * m.frobenius_norm()));
  CHECK(vectorized_regularizer(m, eye, DropoutConfig(0.0)) == 0.0);

  Matrix c(12, 12);
  for (int k = 0; k < 12; ++k) c(k, k) = 0.1 + rng.uniform01();
  double naive = 0.0;
  int k = 0;
  for (int col = 0; col < 4; ++col)
    for (int row = 0; row < 3; ++row, ++k)
      naive += c(k, k) * m(row, col) * m(row, col);
  CHECK(vectorized_regularizer(m, c, d) ==
        doctest::Approx(d.lambda * naive).epsilon(1e-12));

  CHECK_THROWS_AS(vectorized_regularizer(m, Matrix::identity(5), d),
                  std::invalid_argument);
}
