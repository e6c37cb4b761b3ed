#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dropcap/matrix.hpp"
#include "dropcap/records.hpp"
#include "dropcap/rng.hpp"

namespace dropcap::sensing {

// Dropout hyperparameters.  lambda and keep_scale are derived from the rate
// and kept together so every consumer uses the same convention:
//   lambda = rate / (1 - rate),  keep_scale = 1 / (1 - rate).
// A kept coordinate of the dropout mask carries value keep_scale, so the
// mask has unit mean and variance lambda.
struct DropoutConfig {
  double rate;
  double lambda;
  double keep_scale;

  explicit DropoutConfig(double rate_in);
};

// Measurement distribution for the sensing objective: either dense i.i.d.
// standard Gaussian matrices or sparse indicator matrices e_a e_b^T with
// row index a ~ row_probs, column index b ~ col_probs.
struct MeasurementModel {
  enum class Kind { kGaussian, kIndicator };

  Kind kind = Kind::kGaussian;
  int gaussian_rows = 0;
  int gaussian_cols = 0;
  std::vector<double> row_probs;
  std::vector<double> col_probs;

  static MeasurementModel gaussian(int d2, int d0);
  static MeasurementModel indicator(std::vector<double> row_probs,
                                    std::vector<double> col_probs);

  int d2() const;
  int d0() const;
};

// Factored model M = u v^T with shared width d1 (columns of both factors).
struct FactorPair {
  Matrix u;  // d2 x d1
  Matrix v;  // d0 x d1

  FactorPair(Matrix u_in, Matrix v_in);
  int d1() const { return u.cols(); }
};

struct IndicatorObs {
  int row;
  int col;
  double y;
};

struct DenseObs {
  Matrix a;
  double y;
};

// A drawn sample of measurements.  Indicator observations are stored as
// (row, col, y) triples; the rank-one measurement matrix is never
// materialized.
struct SensingSample {
  std::vector<IndicatorObs> indicator;
  std::vector<DenseObs> dense;

  bool is_indicator() const { return dense.empty(); }
  std::size_t size() const {
    return indicator.empty() ? dense.size() : indicator.size();
  }
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
};

// Per-observation, per-column contributions m[j][i] = u_i^T A^(j) v_i.
// Squared-loss, regularizer and Monte-Carlo estimates all reduce this one
// table, so the dropout objective at rate 0 reproduces erm_loss bit for bit.
Matrix prediction_components(const FactorPair& f, const SensingSample& s);

// Mean squared residual (1/n) sum_j (y_j - <u v^T, A^(j)>)^2.
double erm_loss(const FactorPair& f, const SensingSample& s);

// Empirical dropout regularizer sum_i Ehat_j (u_i^T A^(j) v_i)^2 (Eq. form
// without the lambda factor).
double explicit_regularizer(const FactorPair& f, const SensingSample& s);

// Monte-Carlo estimate of the dropout objective
// Ehat_j E_B (y_j - <u B v^T, A^(j)>)^2 with trial-indexed child streams.
McEstimate dropout_objective_mc(const FactorPair& f, const SensingSample& s,
                                const DropoutConfig& d, std::size_t trials,
                                const SeededRng& rng);

// Closed-form expectation of the regularizer under the measurement model:
// Gaussian: sum_i ||u_i||^2 ||v_i||^2
// Indicator: sum_i ||diag(sqrt(p)) u_i||^2 ||diag(sqrt(q)) v_i||^2
double expected_regularizer(const FactorPair& f, const MeasurementModel& model);

// Value of the induced regularizer Theta(M) = min over factorizations.
double induced_regularizer_gaussian(const Matrix& m, int d1);
double induced_regularizer_weighted(const Matrix& m,
                                    const MeasurementModel& model, int d1);

// Width-d1 factorization of m attaining the induced regularizer: SVD of the
// reweighted target, zero-padded spectrum, then a rotation that equalizes
// all per-column norm products.
FactorPair equalized_minimizer(const Matrix& m, const MeasurementModel& model,
                               int d1);

// Entrywise clamp to [-1, 1].
Matrix clip_unit(const Matrix& m);

struct FactorGrad {
  Matrix du;
  Matrix dv;
};

FactorGrad loss_gradient(const FactorPair& f, const SensingSample& s);
FactorGrad regularizer_gradient(const FactorPair& f, const SensingSample& s);
// Gradient of (1/n) sum_j (y_j - <u diag(mask) v^T, A^(j)>)^2 at fixed mask.
FactorGrad masked_loss_gradient(const FactorPair& f, const SensingSample& s,
                                const std::vector<double>& mask);

enum class TrainMode { kSampledMask, kExplicitPenalty };

struct TrainHp {
  double lr = 1.0;
  int batch_size = 2000;
  int epochs = 100;
};

struct RunMeta {
  std::string run_id;
  std::uint64_t seed = 0;
};

struct SensingTrainResult {
  FactorPair factors;
  std::vector<ExperimentRecord> records;
  bool diverged = false;
};

// Minibatch SGD on the dropout objective.  kSampledMask draws a fresh mask
// per minibatch; kExplicitPenalty descends erm + lambda * regularizer.
// Minibatches are sampled with replacement; an epoch is ceil(n/batch) steps.
// Aborts with diverged=true when the train loss exceeds 1e6 or goes
// non-finite.
SensingTrainResult sgd_dropout_train(const FactorPair& init,
                                     const SensingSample& train,
                                     const DropoutConfig& d, const TrainHp& hp,
                                     TrainMode mode, SeededRng rng,
                                     const SensingSample* test = nullptr,
                                     const RunMeta& meta = RunMeta{});

// Generalization bound for the clipped predictor class
// { clip(u v^T) : regularizer <= alpha / d1 } at confidence 1 - delta:
//   train_loss + 8 sqrt((2 alpha d2 log d2 + log(2/delta)/4) / n)
double gen_bound_mc(double train_loss, double alpha, int d2, std::size_t n,
                    double delta);

// Optimistic-rate variant, vanishing when the class realizes zero loss:
//   (2 K log(n)^3 alpha d2 log d2 + 4 K log(1/delta)) / n
double gen_bound_optimistic(double alpha, int d2, std::size_t n, double delta,
                            double k_const = 1.0);

struct ConcentrationRow {
  std::size_t n = 0;
  double mean_abs_dev = 0.0;
};

struct ConcentrationAudit {
  double gamma_sq = 0.0;  // (max row norm of u)^2 * (max |v| entry)^2
  std::vector<ConcentrationRow> rows;
};

// Resamples the empirical regularizer on fresh indicator draws and reports
// the mean absolute deviation from the exact expectation per sample size.
ConcentrationAudit concentration_audit(const FactorPair& f,
                                       const MeasurementModel& model,
                                       const std::vector<std::size_t>& n_grid,
                                       std::size_t resamples,
                                       const SeededRng& rng);

// lambda * ||vec m||^2 weighted by diag(second_moment); vec is column-major.
double vectorized_regularizer(const Matrix& m, const Matrix& second_moment,
                              const DropoutConfig& d);

struct ThetaOracleResult {
  double value = 0.0;           // regularizer at the final feasible point
  double constraint_residual = 0.0;  // ||u v^T - m||_F after reprojection
  FactorPair factors;
};

// Independent check of the induced-regularizer formulas: full-gradient
// descent on the expected regularizer from a slightly perturbed equalized
// start, re-projected onto { u v^T = m } by alternating least squares every
// 100 steps, learning rate decayed by 0.99 every 100 steps.
ThetaOracleResult theta_minimization_oracle(const Matrix& m,
                                            const MeasurementModel& model,
                                            int d1, SeededRng rng,
                                            int steps = 10000);

// He-style factor initialization, entries N(0, 2/d1) in both factors.
FactorPair he_init_factors(int d2, int d0, int d1, SeededRng& rng);

}  // namespace dropcap::sensing
