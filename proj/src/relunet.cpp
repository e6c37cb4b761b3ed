#include "dropcap/relunet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dropcap::relunet {
namespace {

double relu(double z) { return z > 0.0 ? z : 0.0; }

struct MeanVar {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  double std_error() const {
    if (n < 2) return 0.0;
    return std::sqrt(m2 / static_cast<double>(n - 1) /
                     static_cast<double>(n));
  }
};

// activations relu(bottom^T x_i), d1 x n
Matrix activations(const TwoLayerNet& net, const Matrix& inputs) {
  if (inputs.rows() != net.d0())
    throw std::invalid_argument("relunet: input dimension mismatch");
  const int d1 = net.d1();
  const int n = inputs.cols();
  Matrix act(d1, n);
  for (int j = 0; j < d1; ++j) {
    for (int i = 0; i < n; ++i) {
      double z = 0.0;
      for (int r = 0; r < net.d0(); ++r) z += net.bottom(r, j) * inputs(r, i);
      act(j, i) = relu(z);
    }
  }
  return act;
}

std::vector<double> unit_second_moments(const Matrix& act) {
  std::vector<double> a2(act.rows(), 0.0);
  for (int j = 0; j < act.rows(); ++j) {
    double s = 0.0;
    for (int i = 0; i < act.cols(); ++i) s += act(j, i) * act(j, i);
    a2[j] = s / act.cols();
  }
  return a2;
}

void check_data(const TwoLayerNet& net, const LabeledSet& data) {
  if (data.inputs.cols() < 1)
    throw std::invalid_argument("relunet: empty dataset");
  if (data.inputs.rows() != net.d0())
    throw std::invalid_argument("relunet: input dimension mismatch");
  if (data.targets.rows() != net.d2())
    throw std::invalid_argument("relunet: target dimension mismatch");
}

}  // namespace

TwoLayerNet::TwoLayerNet(Matrix top_in, Matrix bottom_in)
    : top(std::move(top_in)), bottom(std::move(bottom_in)) {
  if (top.cols() != bottom.cols())
    throw std::invalid_argument("TwoLayerNet: layer widths differ");
  if (top.cols() < 1) throw std::invalid_argument("TwoLayerNet: width >= 1");
}

LabeledSet make_labeled_set(Matrix inputs, Matrix targets) {
  if (inputs.cols() != targets.cols())
    throw std::invalid_argument("LabeledSet: sample counts differ");
  if (inputs.cols() < 1) throw std::invalid_argument("LabeledSet: empty");
  if (targets.max_abs() > 1.0 + 1e-12)
    throw std::invalid_argument("LabeledSet: target outside [-1, 1]");
  return LabeledSet{std::move(inputs), std::move(targets)};
}

std::vector<double> forward(const TwoLayerNet& net,
                            const std::vector<double>& x) {
  std::vector<double> act(net.d1());
  std::vector<double> z = matvec_t(net.bottom, x);
  for (int j = 0; j < net.d1(); ++j) act[j] = relu(z[j]);
  return matvec(net.top, act);
}

double empirical_loss(const TwoLayerNet& net, const LabeledSet& data) {
  check_data(net, data);
  Matrix act = activations(net, data.inputs);
  const int n = data.n();
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < net.d2(); ++r) {
      double pred = 0.0;
      for (int j = 0; j < net.d1(); ++j) pred += net.top(r, j) * act(j, i);
      double resid = data.targets(r, i) - pred;
      total += resid * resid;
    }
  }
  return total / n;
}

double explicit_regularizer(const TwoLayerNet& net, const LabeledSet& data,
                            const DropoutConfig& d) {
  check_data(net, data);
  Matrix act = activations(net, data.inputs);
  std::vector<double> a2 = unit_second_moments(act);
  double total = 0.0;
  for (int j = 0; j < net.d1(); ++j)
    total += net.top.col_norm_sq(j) * a2[j];
  return d.lambda * total;
}

McEstimate dropout_objective_mc(const TwoLayerNet& net, const LabeledSet& data,
                                const DropoutConfig& d, std::size_t trials,
                                const SeededRng& rng) {
  if (trials == 0)
    throw std::invalid_argument("dropout_objective_mc: trials must be >= 1");
  check_data(net, data);
  Matrix act = activations(net, data.inputs);
  const int n = data.n();
  const int d1 = net.d1();
  const int d2 = net.d2();

  MeanVar acc;
  std::vector<double> mask(d1);
  std::vector<double> pred(d2);
  for (std::size_t t = 0; t < trials; ++t) {
    SeededRng child = rng.derived(t);
    for (int j = 0; j < d1; ++j)
      mask[j] = child.bernoulli(1.0 - d.rate) ? d.keep_scale : 0.0;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < d2; ++r) {
        double p = 0.0;
        for (int j = 0; j < d1; ++j)
          p += mask[j] * net.top(r, j) * act(j, i);
        double resid = data.targets(r, i) - p;
        total += resid * resid;
      }
    }
    acc.add(total / n);
  }
  return McEstimate{acc.mean, acc.std_error(), trials};
}

double path_norm_sq(const TwoLayerNet& net) {
  double total = 0.0;
  for (int j = 0; j < net.d1(); ++j)
    total += net.top.col_norm_sq(j) * net.bottom.col_norm_sq(j);
  return total;
}

IsotropyCheck isotropy_regularizer_check(const TwoLayerNet& net,
                                         std::size_t mc_n,
                                         const DropoutConfig& d,
                                         const SeededRng& rng) {
  if (mc_n == 0)
    throw std::invalid_argument("isotropy_regularizer_check: mc_n >= 1");
  const int d0 = net.d0();
  const int d1 = net.d1();
  std::vector<double> top_sq(d1);
  for (int j = 0; j < d1; ++j) top_sq[j] = net.top.col_norm_sq(j);

  MeanVar acc;
  std::vector<double> x(d0);
  for (std::size_t t = 0; t < mc_n; ++t) {
    SeededRng child = rng.derived(t);
    for (int r = 0; r < d0; ++r) x[r] = child.gaussian();
    double s = 0.0;
    for (int j = 0; j < d1; ++j) {
      double z = 0.0;
      for (int r = 0; r < d0; ++r) z += net.bottom(r, j) * x[r];
      double a = relu(z);
      s += top_sq[j] * a * a;
    }
    acc.add(d.lambda * s);
  }
  return IsotropyCheck{acc.mean, 0.5 * d.lambda * path_norm_sq(net),
                       acc.std_error()};
}

CapacityReport capacity_report(const TwoLayerNet& net, const LabeledSet& data,
                               const DropoutConfig& d, int beta_dirs,
                               const SeededRng& rng) {
  check_data(net, data);
  if (beta_dirs < 0)
    throw std::invalid_argument("capacity_report: negative direction count");
  const int n = data.n();
  const int d0 = net.d0();
  const int d1 = net.d1();

  Matrix act = activations(net, data.inputs);
  std::vector<double> a2 = unit_second_moments(act);

  CapacityReport rep;
  double psi_l1 = 0.0, psi_l2 = 0.0;
  for (int j = 0; j < d1; ++j) {
    double unorm = std::sqrt(net.top.col_norm_sq(j));
    double psi = unorm * std::sqrt(a2[j]);
    psi_l1 += psi;
    psi_l2 += psi * psi;
    rep.reg_value += unorm * unorm * a2[j];
  }
  rep.reg_value *= d.lambda;
  rep.alpha_hat = psi_l1;
  rep.phi = psi_l2 > 0.0
                ? psi_l1 / (std::sqrt(static_cast<double>(d1)) *
                            std::sqrt(psi_l2))
                : 1.0;
  rep.path_norm = path_norm_sq(net);

  // retentiveness: scan random unit directions plus the hidden units
  std::vector<std::vector<double>> dirs;
  SeededRng dir_rng = rng.derived(0);
  for (int k = 0; k < beta_dirs; ++k) {
    std::vector<double> v(d0);
    double nv = 0.0;
    do {
      for (int r = 0; r < d0; ++r) v[r] = dir_rng.gaussian();
      nv = norm2(v);
    } while (nv == 0.0);
    for (double& x : v) x /= nv;
    dirs.push_back(std::move(v));
  }
  for (int j = 0; j < d1; ++j) {
    std::vector<double> v = net.bottom.col(j);
    double nv = norm2(v);
    if (nv == 0.0) continue;
    for (double& x : v) x /= nv;
    dirs.push_back(std::move(v));
  }

  double beta = std::numeric_limits<double>::infinity();
  for (const auto& v : dirs) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      double z = 0.0;
      for (int r = 0; r < d0; ++r) z += v[r] * data.inputs(r, i);
      den += z * z;
      double a = relu(z);
      num += a * a;
    }
    den /= n;
    num /= n;
    if (den < 1e-12) continue;  // degenerate direction, no signal
    beta = std::min(beta, num / den);
  }
  rep.beta_hat = std::isfinite(beta) ? beta : 0.0;

  // data-geometry quantities: empirical second moment and its pseudo-inverse
  Matrix c(d0, d0);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < d0; ++r) {
      double xr = data.inputs(r, i);
      if (xr == 0.0) continue;
      for (int t = 0; t < d0; ++t) c(r, t) += xr * data.inputs(t, i);
    }
  for (double& x : c.data()) x /= n;
  if (c.max_abs() == 0.0) {
    rep.x_mahalanobis = 0.0;
    rep.rank_c = 0;
    return rep;
  }
  rep.x_mahalanobis = mahalanobis_data_norm(data.inputs, pseudo_inverse(c));
  rep.rank_c = numeric_rank(c, 1e-10);
  return rep;
}

double Counterexample::activation_second_moment() const {
  double total = 0.0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    double z = dot(w, atoms[k]);
    double a = relu(z);
    total += weights[k] * a * a;
  }
  return total;
}

std::vector<double> Counterexample::sample(SeededRng& rng) const {
  double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    acc += weights[k];
    if (u < acc) return atoms[k];
  }
  return atoms.back();
}

Counterexample counterexample_distribution(double delta) {
  if (!(delta > 0.0) || delta >= 0.5)
    throw std::invalid_argument(
        "counterexample_distribution: delta must lie in (0, 0.5)");
  double b = std::sqrt(1.0 - 2.0 * delta) / (1.0 - delta);
  double a = -delta / (1.0 - delta);
  Counterexample c;
  c.atoms = {{1.0, 0.0}, {a, b}, {a, -b}};
  c.weights = {delta, (1.0 - delta) / 2.0, (1.0 - delta) / 2.0};
  c.w = {1.0 / std::sqrt(delta), 0.0};
  return c;
}

double rademacher_bound(double alpha, double beta, double x_mahalanobis,
                        std::size_t n) {
  if (beta <= 0.0)
    throw std::invalid_argument("rademacher_bound: beta must be > 0");
  if (n < 1) throw std::invalid_argument("rademacher_bound: n must be >= 1");
  if (alpha < 0.0 || x_mahalanobis < 0.0)
    throw std::invalid_argument("rademacher_bound: negative argument");
  return 2.0 * alpha * x_mahalanobis /
         (static_cast<double>(n) * std::sqrt(beta));
}

double rademacher_bound_expected(double alpha, double beta, int rank_c,
                                 std::size_t n) {
  if (beta <= 0.0)
    throw std::invalid_argument("rademacher_bound_expected: beta must be > 0");
  if (n < 1)
    throw std::invalid_argument("rademacher_bound_expected: n must be >= 1");
  if (alpha < 0.0 || rank_c < 0)
    throw std::invalid_argument("rademacher_bound_expected: negative argument");
  return 2.0 * alpha *
         std::sqrt(static_cast<double>(rank_c) /
                   (beta * static_cast<double>(n)));
}

TwoLayerNet lower_bound_embedding(const std::vector<double>& w, int d1) {
  if (d1 < 2 || d1 % 2 != 0)
    throw std::invalid_argument("lower_bound_embedding: d1 must be even, >= 2");
  if (w.empty())
    throw std::invalid_argument("lower_bound_embedding: empty direction");
  const int d0 = static_cast<int>(w.size());
  Matrix top(1, d1);
  Matrix bottom(d0, d1);
  for (int j = 0; j < d1; ++j) {
    double sign = (j % 2 == 0) ? 1.0 : -1.0;
    top(0, j) = sign * 2.0 / d1;
    for (int r = 0; r < d0; ++r) bottom(r, j) = sign * w[r];
  }
  return TwoLayerNet(std::move(top), std::move(bottom));
}

LabeledSet symmetrize_with_signs(const LabeledSet& data,
                                 const std::vector<int>& signs) {
  if (static_cast<int>(signs.size()) != data.n())
    throw std::invalid_argument("symmetrize_with_signs: sign count mismatch");
  LabeledSet out = data;
  for (int i = 0; i < data.n(); ++i) {
    if (signs[i] != 1 && signs[i] != -1)
      throw std::invalid_argument("symmetrize_with_signs: signs must be +/-1");
    if (signs[i] == -1)
      for (int r = 0; r < data.inputs.rows(); ++r)
        out.inputs(r, i) = -data.inputs(r, i);
  }
  return out;
}

LabeledSet symmetrize(const LabeledSet& data, SeededRng rng) {
  std::vector<int> signs(data.n());
  for (int i = 0; i < data.n(); ++i) signs[i] = rng.rademacher();
  return symmetrize_with_signs(data, signs);
}

double alpha_symmetrized(const TwoLayerNet& net, const LabeledSet& raw,
                         int resamplings, SeededRng rng) {
  if (resamplings < 1)
    throw std::invalid_argument("alpha_symmetrized: resamplings >= 1");
  double total = 0.0;
  DropoutConfig d(0.5);  // alpha does not involve lambda; any rate works
  for (int k = 0; k < resamplings; ++k) {
    LabeledSet flipped = symmetrize(raw, rng.derived(k));
    Matrix act = activations(net, flipped.inputs);
    std::vector<double> a2 = unit_second_moments(act);
    double alpha = 0.0;
    for (int j = 0; j < net.d1(); ++j)
      alpha += std::sqrt(net.top.col_norm_sq(j)) * std::sqrt(a2[j]);
    total += alpha;
  }
  return total / resamplings;
}

double gen_bound_regression(double train_loss, double alpha, double beta,
                            double x_mahalanobis, std::size_t n, double delta) {
  if (beta <= 0.0)
    throw std::invalid_argument("gen_bound_regression: beta must be > 0");
  if (n < 1)
    throw std::invalid_argument("gen_bound_regression: n must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("gen_bound_regression: delta outside (0,1)");
  double nn = static_cast<double>(n);
  return train_loss + 16.0 * alpha * x_mahalanobis / (std::sqrt(beta) * nn) +
         12.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * nn));
}

double gen_bound_symmetrized(double train_loss_sym, double alpha_sym,
                             double x_mahalanobis, std::size_t n,
                             double delta) {
  if (n < 1)
    throw std::invalid_argument("gen_bound_symmetrized: n must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("gen_bound_symmetrized: delta outside (0,1)");
  double nn = static_cast<double>(n);
  return 2.0 * train_loss_sym + 46.0 * alpha_sym * x_mahalanobis / nn +
         24.0 * std::sqrt(std::log(2.0 / delta) / (2.0 * nn));
}

double gen_bound_classification(double train_loss, double alpha, double beta,
                                double x_mahalanobis, std::size_t n,
                                double delta, bool symmetrized) {
  if (n < 1)
    throw std::invalid_argument("gen_bound_classification: n must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("gen_bound_classification: delta outside (0,1)");
  double nn = static_cast<double>(n);
  if (symmetrized)
    return 2.0 * train_loss + 23.0 * alpha * x_mahalanobis / nn +
           8.0 * std::sqrt(std::log(1.0 / delta) / (2.0 * nn));
  if (beta <= 0.0)
    throw std::invalid_argument("gen_bound_classification: beta must be > 0");
  return train_loss + 8.0 * alpha * x_mahalanobis / (std::sqrt(beta) * nn) +
         4.0 * std::sqrt(std::log(1.0 / delta) / (2.0 * nn));
}

NetGrad masked_loss_gradient(const TwoLayerNet& net, const LabeledSet& data,
                             const std::vector<double>& mask) {
  check_data(net, data);
  if (static_cast<int>(mask.size()) != net.d1())
    throw std::invalid_argument("masked_loss_gradient: mask width mismatch");
  const int n = data.n();
  const int d0 = net.d0();
  const int d1 = net.d1();
  const int d2 = net.d2();

  Matrix act = activations(net, data.inputs);
  NetGrad g{Matrix(d2, d1), Matrix(d0, d1)};
  const double scale = -2.0 / n;
  std::vector<double> resid(d2);
  for (int i = 0; i < n; ++i) {
    for (int r = 0; r < d2; ++r) {
      double p = 0.0;
      for (int j = 0; j < d1; ++j) p += mask[j] * net.top(r, j) * act(j, i);
      resid[r] = data.targets(r, i) - p;
    }
    for (int j = 0; j < d1; ++j) {
      double bj = mask[j];
      if (bj == 0.0) continue;
      double aji = act(j, i);
      // top gradient needs the masked activation
      if (aji != 0.0)
        for (int r = 0; r < d2; ++r)
          g.dtop(r, j) += scale * resid[r] * bj * aji;
      // bottom gradient flows only through active units (relu' = 0 at 0)
      if (aji > 0.0) {
        double ru = 0.0;
        for (int r = 0; r < d2; ++r) ru += resid[r] * net.top(r, j);
        double coef = scale * bj * ru;
        for (int r = 0; r < d0; ++r)
          g.dbottom(r, j) += coef * data.inputs(r, i);
      }
    }
  }
  return g;
}

NetGrad loss_gradient(const TwoLayerNet& net, const LabeledSet& data) {
  return masked_loss_gradient(net, data, std::vector<double>(net.d1(), 1.0));
}

NetGrad regularizer_gradient(const TwoLayerNet& net, const LabeledSet& data,
                             const DropoutConfig& d) {
  check_data(net, data);
  const int n = data.n();
  const int d0 = net.d0();
  const int d1 = net.d1();
  const int d2 = net.d2();

  Matrix act = activations(net, data.inputs);
  std::vector<double> a2 = unit_second_moments(act);
  NetGrad g{Matrix(d2, d1), Matrix(d0, d1)};
  for (int j = 0; j < d1; ++j) {
    double coef = 2.0 * d.lambda * a2[j];
    for (int r = 0; r < d2; ++r) g.dtop(r, j) = coef * net.top(r, j);
  }
  for (int j = 0; j < d1; ++j) {
    double wnorm = net.top.col_norm_sq(j);
    if (wnorm == 0.0) continue;
    double coef = 2.0 * d.lambda * wnorm / n;
    for (int i = 0; i < n; ++i) {
      double aji = act(j, i);
      if (aji <= 0.0) continue;
      for (int r = 0; r < d0; ++r)
        g.dbottom(r, j) += coef * aji * data.inputs(r, i);
    }
  }
  return g;
}

namespace {

LabeledSet take_batch(const LabeledSet& data, int batch, SeededRng& rng) {
  const int n = data.n();
  Matrix xs(data.inputs.rows(), batch);
  Matrix ys(data.targets.rows(), batch);
  for (int b = 0; b < batch; ++b) {
    int i = rng.uniform_int(n);
    for (int r = 0; r < xs.rows(); ++r) xs(r, b) = data.inputs(r, i);
    for (int r = 0; r < ys.rows(); ++r) ys(r, b) = data.targets(r, i);
  }
  return LabeledSet{std::move(xs), std::move(ys)};
}

}  // namespace

ReluTrainResult sgd_dropout_train(const TwoLayerNet& init,
                                  const LabeledSet& train,
                                  const DropoutConfig& d, const TrainHp& hp,
                                  TrainMode mode, SeededRng rng,
                                  const LabeledSet* test, const RunMeta& meta,
                                  int beta_dirs) {
  check_data(init, train);
  if (hp.lr <= 0.0 || hp.batch_size < 1 || hp.epochs < 1)
    throw std::invalid_argument("sgd_dropout_train: bad hyperparameters");

  TwoLayerNet net = init;
  const int n = train.n();
  const int steps_per_epoch = (n + hp.batch_size - 1) / hp.batch_size;
  const int batch = std::min(hp.batch_size, n);
  std::vector<double> mask(net.d1(), 1.0);
  SeededRng cap_rng = rng.derived(0x0c0ffee);

  ReluTrainResult result{net, {}, false};
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step) {
      LabeledSet mb = take_batch(train, batch, rng);
      NetGrad g{Matrix(net.d2(), net.d1()), Matrix(net.d0(), net.d1())};
      if (mode == TrainMode::kSampledMask) {
        for (int j = 0; j < net.d1(); ++j)
          mask[j] = rng.bernoulli(1.0 - d.rate) ? d.keep_scale : 0.0;
        g = masked_loss_gradient(net, mb, mask);
      } else {
        g = loss_gradient(net, mb);
        if (d.lambda > 0.0) {
          NetGrad gr = regularizer_gradient(net, mb, d);
          for (std::size_t i = 0; i < g.dtop.data().size(); ++i)
            g.dtop.data()[i] += gr.dtop.data()[i];
          for (std::size_t i = 0; i < g.dbottom.data().size(); ++i)
            g.dbottom.data()[i] += gr.dbottom.data()[i];
        }
      }
      for (std::size_t i = 0; i < net.top.data().size(); ++i)
        net.top.data()[i] -= hp.lr * g.dtop.data()[i];
      for (std::size_t i = 0; i < net.bottom.data().size(); ++i)
        net.bottom.data()[i] -= hp.lr * g.dbottom.data()[i];
    }

    bool finite = net.top.all_finite() && net.bottom.all_finite();
    double train_loss = finite ? empirical_loss(net, train)
                               : std::numeric_limits<double>::quiet_NaN();
    bool bad = !std::isfinite(train_loss) || train_loss > 1e6;

    ExperimentRecord rec;
    rec.run_id = meta.run_id;
    rec.epoch = epoch;
    rec.dropout_rate = d.rate;
    rec.width = net.d1();
    rec.train_loss = train_loss;
    rec.seed = meta.seed;
    if (!bad) {
      CapacityReport rep =
          capacity_report(net, train, d, beta_dirs, cap_rng.derived(epoch));
      rec.reg_value = rep.reg_value;
      rec.alpha_hat = rep.alpha_hat;
      rec.beta_hat = rep.beta_hat;
      rec.phi = rep.phi;
      rec.test_loss = test != nullptr ? empirical_loss(net, *test) : train_loss;
    } else {
      rec.test_loss = train_loss;
      rec.reg_value = std::numeric_limits<double>::quiet_NaN();
    }
    rec.gap = rec.test_loss - rec.train_loss;
    result.records.push_back(rec);

    if (bad) {
      result.diverged = true;
      break;
    }
  }
  result.net = net;
  return result;
}

double clip_scalar_output(const TwoLayerNet& net,
                          const std::vector<double>& x) {
  if (net.d2() != 1)
    throw std::invalid_argument("clip_scalar_output: single-output net required");
  return std::clamp(forward(net, x)[0], -1.0, 1.0);
}

TwoLayerNet he_init_net(int d2, int d1, int d0, SeededRng& rng) {
  Matrix top = random_gaussian(d2, d1, rng, std::sqrt(2.0 / d1));
  Matrix bottom = random_gaussian(d0, d1, rng, std::sqrt(2.0 / d0));
  return TwoLayerNet(std::move(top), std::move(bottom));
}

}  // namespace dropcap::relunet
