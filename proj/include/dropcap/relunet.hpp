#pragma once

#include <cstdint>
#include <vector>

#include "dropcap/matrix.hpp"
#include "dropcap/records.hpp"
#include "dropcap/rng.hpp"
#include "dropcap/sensing.hpp"

namespace dropcap::relunet {

using sensing::DropoutConfig;
using sensing::McEstimate;
using sensing::RunMeta;
using sensing::TrainHp;
using sensing::TrainMode;

// Two-layer network f(x) = top * relu(bottom^T x).
// top is d2 x d1 (output weights), bottom is d0 x d1 (one column per unit).
struct TwoLayerNet {
  Matrix top;
  Matrix bottom;

  TwoLayerNet(Matrix top_in, Matrix bottom_in);
  int d1() const { return top.cols(); }
  int d0() const { return bottom.rows(); }
  int d2() const { return top.rows(); }
};

// Column-per-sample dataset: inputs is d0 x n, targets is d2 x n.
struct LabeledSet {
  Matrix inputs;
  Matrix targets;

  int n() const { return inputs.cols(); }
};

LabeledSet make_labeled_set(Matrix inputs, Matrix targets);

std::vector<double> forward(const TwoLayerNet& net,
                            const std::vector<double>& x);

// Mean squared error Ehat_i || y_i - f(x_i) ||^2.
double empirical_loss(const TwoLayerNet& net, const LabeledSet& data);

// Dropout regularizer lambda * sum_j ||u_j||^2 ahat_j^2 with
// ahat_j^2 = Ehat_i relu(v_j^T x_i)^2.
double explicit_regularizer(const TwoLayerNet& net, const LabeledSet& data,
                            const DropoutConfig& d);

// Monte-Carlo estimate of Ehat_i E_B || y_i - top B relu(bottom^T x_i) ||^2.
McEstimate dropout_objective_mc(const TwoLayerNet& net, const LabeledSet& data,
                                const DropoutConfig& d, std::size_t trials,
                                const SeededRng& rng);

// sum_j ||u_j||^2 ||v_j||^2 (squared path norm of the network graph).
double path_norm_sq(const TwoLayerNet& net);

struct IsotropyCheck {
  double lhs = 0.0;       // Monte-Carlo population regularizer, N(0, I) inputs
  double rhs = 0.0;       // (lambda / 2) * path_norm_sq
  double std_error = 0.0;
};

// Under x ~ N(0, I) the population regularizer collapses to the path norm;
// returns both sides plus Monte-Carlo error of the left one.
IsotropyCheck isotropy_regularizer_check(const TwoLayerNet& net,
                                         std::size_t mc_n,
                                         const DropoutConfig& d,
                                         const SeededRng& rng);

struct CapacityReport {
  double alpha_hat = 0.0;      // sum_j ||u_j|| ahat_j
  double beta_hat = 0.0;       // min direction ratio Ehat relu(z)^2 / Ehat z^2
  double phi = 0.0;            // ||psi||_1 / (sqrt(d1) ||psi||_2)
  double reg_value = 0.0;      // explicit regularizer value
  double path_norm = 0.0;      // squared path norm
  double x_mahalanobis = 0.0;  // sqrt(sum_i x_i^T C^+ x_i), empirical C
  int rank_c = 0;              // eigenvalues of C above 1e-10 * max
};

// Plug-in capacity estimates on the given sample.  beta_hat scans beta_dirs
// random unit directions plus every hidden-unit direction; directions whose
// mean squared projection falls below 1e-12 are skipped.  Directions with no
// positive activation give ratio 0, so beta_hat can reach 0 on raw
// (non-symmetrized) data.
CapacityReport capacity_report(const TwoLayerNet& net, const LabeledSet& data,
                               const DropoutConfig& d, int beta_dirs,
                               const SeededRng& rng);

// Three-atom unit-norm distribution with zero mean whose activation second
// moment stays at 1 while ||w|| = 1/sqrt(delta) grows: witnesses that the
// dropout regularizer alone cannot control scale without a retentiveness
// assumption.
struct Counterexample {
  std::vector<std::vector<double>> atoms;  // three unit vectors in R^2
  std::vector<double> weights;             // their probabilities
  std::vector<double> w;                   // unit direction scaled 1/sqrt(delta)

  double activation_second_moment() const;  // exact E relu(w^T x)^2
  std::vector<double> sample(SeededRng& rng) const;
};

Counterexample counterexample_distribution(double delta);

// Rademacher complexity bounds for the alpha-bounded, beta-retentive class:
// empirical form 2 alpha ||X||_{C+} / (n sqrt(beta)) and expected form
// 2 alpha sqrt(rank(C) / (beta n)).
double rademacher_bound(double alpha, double beta, double x_mahalanobis,
                        std::size_t n);
double rademacher_bound_expected(double alpha, double beta, int rank_c,
                                 std::size_t n);

// Width-d1 network computing exactly x -> w^T x via paired +/- units;
// requires even d1.  Its regularizer equals (2 lambda / d1) Ehat (w^T x)^2,
// which vanishes as d1 grows: the lower-bound construction.
TwoLayerNet lower_bound_embedding(const std::vector<double>& w, int d1);

// Random sign flip of each input column (targets unchanged).
LabeledSet symmetrize(const LabeledSet& data, SeededRng rng);
LabeledSet symmetrize_with_signs(const LabeledSet& data,
                                 const std::vector<int>& signs);

// alpha on symmetrized data, averaged over independent sign resamplings.
double alpha_symmetrized(const TwoLayerNet& net, const LabeledSet& raw,
                         int resamplings, SeededRng rng);

// High-probability generalization bounds (values in [-1,1], confidence
// 1 - delta):
//   regression:   L + 16 a x / (sqrt(b) n) + 12 sqrt(log(2/delta) / (2n))
//   symmetrized:  2 L' + 46 a' x / n + 24 sqrt(log(2/delta) / (2n))
//   classification (0-1 via margin): L + 8 a x / (sqrt(b) n)
//                  + 4 sqrt(log(1/delta) / (2n)), doubled-constant form
//                  2 L' + 23 a' x / n + 8 sqrt(log(1/delta) / (2n)) after
//                  symmetrization.
double gen_bound_regression(double train_loss, double alpha, double beta,
                            double x_mahalanobis, std::size_t n, double delta);
double gen_bound_symmetrized(double train_loss_sym, double alpha_sym,
                             double x_mahalanobis, std::size_t n, double delta);
double gen_bound_classification(double train_loss, double alpha, double beta,
                                double x_mahalanobis, std::size_t n,
                                double delta, bool symmetrized);

struct NetGrad {
  Matrix dtop;
  Matrix dbottom;
};

NetGrad loss_gradient(const TwoLayerNet& net, const LabeledSet& data);
NetGrad regularizer_gradient(const TwoLayerNet& net, const LabeledSet& data,
                             const DropoutConfig& d);
NetGrad masked_loss_gradient(const TwoLayerNet& net, const LabeledSet& data,
                             const std::vector<double>& mask);

struct ReluTrainResult {
  TwoLayerNet net;
  std::vector<ExperimentRecord> records;
  bool diverged = false;
};

// Minibatch SGD on the dropout objective, fresh mask per minibatch in
// kSampledMask mode.  Records one CapacityReport-backed row per epoch.
ReluTrainResult sgd_dropout_train(const TwoLayerNet& init,
                                  const LabeledSet& train,
                                  const DropoutConfig& d, const TrainHp& hp,
                                  TrainMode mode, SeededRng rng,
                                  const LabeledSet* test = nullptr,
                                  const RunMeta& meta = RunMeta{},
                                  int beta_dirs = 512);

// Scalar-output forward pass clamped to [-1, 1].
double clip_scalar_output(const TwoLayerNet& net, const std::vector<double>& x);

// He initialization: top entries N(0, 2/d1), bottom entries N(0, 2/d0).
TwoLayerNet he_init_net(int d2, int d1, int d0, SeededRng& rng);

}  // namespace dropcap::relunet
