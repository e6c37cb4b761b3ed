#include "dropcap/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dropcap::sensing {
namespace {

void check_probs(const std::vector<double>& p, const char* what) {
  if (p.empty()) throw std::invalid_argument(std::string(what) + ": empty");
  double sum = 0.0;
  for (double x : p) {
    if (!(x >= 0.0))
      throw std::invalid_argument(std::string(what) + ": negative entry");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(what) + ": entries sum to " +
                                std::to_string(sum) + ", expected 1");
}

void check_sample(const SensingSample& s) {
  if (s.indicator.empty() && s.dense.empty())
    throw std::invalid_argument("sensing sample is empty");
  if (!s.indicator.empty() && !s.dense.empty())
    throw std::invalid_argument(
        "sensing sample mixes indicator and dense observations");
}

// Welford accumulator; exact zero variance when every value is identical.
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
    double var = m2 / static_cast<double>(n - 1);
    return std::sqrt(var / static_cast<double>(n));
  }
};

std::vector<double> column_scales(const Matrix& m,
                                  const std::vector<double>& probs) {
  // per-column sum_r probs[r] * m(r,i)^2
  std::vector<double> out(m.cols(), 0.0);
  for (int r = 0; r < m.rows(); ++r) {
    double p = probs[r];
    if (p == 0.0) continue;
    for (int i = 0; i < m.cols(); ++i) out[i] += p * m(r, i) * m(r, i);
  }
  return out;
}

Matrix scale_rows(const Matrix& m, const std::vector<double>& s) {
  Matrix out = m;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out(i, j) *= s[i];
  return out;
}

}  // namespace

DropoutConfig::DropoutConfig(double rate_in) : rate(rate_in) {
  if (!(rate >= 0.0) || rate >= 1.0)
    throw std::invalid_argument("DropoutConfig: rate must lie in [0, 1)");
  lambda = rate / (1.0 - rate);
  keep_scale = 1.0 / (1.0 - rate);
}

MeasurementModel MeasurementModel::gaussian(int d2, int d0) {
  if (d2 < 1 || d0 < 1)
    throw std::invalid_argument("MeasurementModel: dims must be positive");
  MeasurementModel m;
  m.kind = Kind::kGaussian;
  m.gaussian_rows = d2;
  m.gaussian_cols = d0;
  return m;
}

MeasurementModel MeasurementModel::indicator(std::vector<double> row_probs,
                                             std::vector<double> col_probs) {
  check_probs(row_probs, "row_probs");
  check_probs(col_probs, "col_probs");
  MeasurementModel m;
  m.kind = Kind::kIndicator;
  m.row_probs = std::move(row_probs);
  m.col_probs = std::move(col_probs);
  return m;
}

int MeasurementModel::d2() const {
  return kind == Kind::kGaussian ? gaussian_rows
                                 : static_cast<int>(row_probs.size());
}

int MeasurementModel::d0() const {
  return kind == Kind::kGaussian ? gaussian_cols
                                 : static_cast<int>(col_probs.size());
}

FactorPair::FactorPair(Matrix u_in, Matrix v_in)
    : u(std::move(u_in)), v(std::move(v_in)) {
  if (u.cols() != v.cols())
    throw std::invalid_argument("FactorPair: factor widths differ");
  if (u.cols() < 1) throw std::invalid_argument("FactorPair: width must be >=1");
}

Matrix prediction_components(const FactorPair& f, const SensingSample& s) {
  check_sample(s);
  const int d1 = f.d1();
  const int n = static_cast<int>(s.size());
  Matrix table(n, d1);
  if (s.is_indicator()) {
    for (int j = 0; j < n; ++j) {
      const auto& obs = s.indicator[j];
      if (obs.row < 0 || obs.row >= f.u.rows() || obs.col < 0 ||
          obs.col >= f.v.rows())
        throw std::invalid_argument("indicator observation index out of range");
      for (int i = 0; i < d1; ++i)
        table(j, i) = f.u(obs.row, i) * f.v(obs.col, i);
    }
  } else {
    for (int j = 0; j < n; ++j) {
      const Matrix& a = s.dense[j].a;
      if (a.rows() != f.u.rows() || a.cols() != f.v.rows())
        throw std::invalid_argument("dense measurement shape mismatch");
      // u_i^T A v_i for every column i
      for (int i = 0; i < d1; ++i) {
        double acc = 0.0;
        for (int r = 0; r < a.rows(); ++r) {
          double ur = f.u(r, i);
          if (ur == 0.0) continue;
          double inner = 0.0;
          for (int c = 0; c < a.cols(); ++c) inner += a(r, c) * f.v(c, i);
          acc += ur * inner;
        }
        table(j, i) = acc;
      }
    }
  }
  return table;
}

namespace {

double sample_y(const SensingSample& s, int j) {
  return s.is_indicator() ? s.indicator[j].y : s.dense[j].y;
}

double loss_from_components(const Matrix& table, const SensingSample& s) {
  const int n = table.rows();
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    double pred = 0.0;
    for (int i = 0; i < table.cols(); ++i) pred += table(j, i);
    double r = sample_y(s, j) - pred;
    total += r * r;
  }
  return total / n;
}

}  // namespace

double erm_loss(const FactorPair& f, const SensingSample& s) {
  return loss_from_components(prediction_components(f, s), s);
}

double explicit_regularizer(const FactorPair& f, const SensingSample& s) {
  Matrix table = prediction_components(f, s);
  double total = 0.0;
  for (int j = 0; j < table.rows(); ++j)
    for (int i = 0; i < table.cols(); ++i) total += table(j, i) * table(j, i);
  return total / table.rows();
}

McEstimate dropout_objective_mc(const FactorPair& f, const SensingSample& s,
                                const DropoutConfig& d, std::size_t trials,
                                const SeededRng& rng) {
  if (trials == 0)
    throw std::invalid_argument("dropout_objective_mc: trials must be >= 1");
  Matrix table = prediction_components(f, s);
  const int n = table.rows();
  const int d1 = table.cols();
  std::vector<double> ys(n);
  for (int j = 0; j < n; ++j) ys[j] = sample_y(s, j);

  MeanVar acc;
  std::vector<double> mask(d1);
  for (std::size_t t = 0; t < trials; ++t) {
    SeededRng child = rng.derived(t);
    for (int i = 0; i < d1; ++i)
      mask[i] = child.bernoulli(1.0 - d.rate) ? d.keep_scale : 0.0;
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      double pred = 0.0;
      for (int i = 0; i < d1; ++i) pred += mask[i] * table(j, i);
      double r = ys[j] - pred;
      total += r * r;
    }
    acc.add(total / n);
  }
  return McEstimate{acc.mean, acc.std_error(), trials};
}

double expected_regularizer(const FactorPair& f,
                            const MeasurementModel& model) {
  const int d1 = f.d1();
  if (model.kind == MeasurementModel::Kind::kGaussian) {
    if (model.gaussian_rows != f.u.rows() || model.gaussian_cols != f.v.rows())
      throw std::invalid_argument("expected_regularizer: shape mismatch");
    double total = 0.0;
    for (int i = 0; i < d1; ++i)
      total += f.u.col_norm_sq(i) * f.v.col_norm_sq(i);
    return total;
  }
  if (static_cast<int>(model.row_probs.size()) != f.u.rows() ||
      static_cast<int>(model.col_probs.size()) != f.v.rows())
    throw std::invalid_argument("expected_regularizer: shape mismatch");
  std::vector<double> us = column_scales(f.u, model.row_probs);
  std::vector<double> vs = column_scales(f.v, model.col_probs);
  double total = 0.0;
  for (int i = 0; i < d1; ++i) total += us[i] * vs[i];
  return total;
}

double induced_regularizer_gaussian(const Matrix& m, int d1) {
  int r = numeric_rank(m);
  if (d1 < r)
    throw std::invalid_argument(
        "induced_regularizer_gaussian: width below rank(m)");
  double nn = nuclear_norm(m);
  return nn * nn / d1;
}

double induced_regularizer_weighted(const Matrix& m,
                                    const MeasurementModel& model, int d1) {
  if (model.kind != MeasurementModel::Kind::kIndicator)
    throw std::invalid_argument(
        "induced_regularizer_weighted: indicator model required");
  if (model.d2() != m.rows() || model.d0() != m.cols())
    throw std::invalid_argument("induced_regularizer_weighted: shape mismatch");
  int r = numeric_rank(m);
  if (d1 < r)
    throw std::invalid_argument(
        "induced_regularizer_weighted: width below rank(m)");
  std::vector<double> sp(m.rows()), sq(m.cols());
  for (int i = 0; i < m.rows(); ++i) sp[i] = std::sqrt(model.row_probs[i]);
  for (int j = 0; j < m.cols(); ++j) sq[j] = std::sqrt(model.col_probs[j]);
  Matrix weighted = scale_rows(m, sp);
  for (int i = 0; i < weighted.rows(); ++i)
    for (int j = 0; j < weighted.cols(); ++j) weighted(i, j) *= sq[j];
  double nn = nuclear_norm(weighted);
  return nn * nn / d1;
}

FactorPair equalized_minimizer(const Matrix& m, const MeasurementModel& model,
                               int d1) {
  const int d2 = m.rows();
  const int d0 = m.cols();
  if (model.d2() != d2 || model.d0() != d0)
    throw std::invalid_argument("equalized_minimizer: shape mismatch");

  std::vector<double> sp(d2, 1.0), sq(d0, 1.0);
  if (model.kind == MeasurementModel::Kind::kIndicator) {
    for (int i = 0; i < d2; ++i) {
      if (model.row_probs[i] <= 0.0)
        throw std::invalid_argument(
            "equalized_minimizer: zero row probability");
      sp[i] = std::sqrt(model.row_probs[i]);
    }
    for (int j = 0; j < d0; ++j) {
      if (model.col_probs[j] <= 0.0)
        throw std::invalid_argument(
            "equalized_minimizer: zero column probability");
      sq[j] = std::sqrt(model.col_probs[j]);
    }
  }

  Matrix weighted = scale_rows(m, sp);
  for (int i = 0; i < d2; ++i)
    for (int j = 0; j < d0; ++j) weighted(i, j) *= sq[j];

  SvdResult dec = svd(weighted);
  double top = dec.singular_values.front();
  int rank = 0;
  for (double s : dec.singular_values)
    if (top > 0.0 && s > 1e-10 * top) ++rank;
  if (d1 < rank)
    throw std::invalid_argument("equalized_minimizer: width " +
                                std::to_string(d1) + " below rank " +
                                std::to_string(rank));

  // Copy only the spectrum above the rank cutoff: noise-level tail values
  // would turn into sqrt(eps)-sized factor columns after the sqrt below.
  std::vector<double> sig_pad(d1, 0.0);
  const int k_eff = rank;
  for (int i = 0; i < k_eff; ++i) sig_pad[i] = dec.singular_values[i];

  Matrix q = equal_diagonal_rotation(sig_pad);

  // left factor: diag(1/sp) * [A | 0] * sqrt(Sigma) * Q
  Matrix au(d2, d1);
  Matrix bv(d0, d1);
  for (int i = 0; i < k_eff; ++i) {
    double rs = std::sqrt(sig_pad[i]);
    for (int r = 0; r < d2; ++r) au(r, i) = dec.left(r, i) * rs;
    for (int r = 0; r < d0; ++r) bv(r, i) = dec.right(r, i) * rs;
  }
  Matrix u = au * q;
  Matrix v = bv * q;
  for (int r = 0; r < d2; ++r)
    for (int i = 0; i < d1; ++i) u(r, i) /= sp[r];
  for (int r = 0; r < d0; ++r)
    for (int i = 0; i < d1; ++i) v(r, i) /= sq[r];
  return FactorPair(std::move(u), std::move(v));
}

Matrix clip_unit(const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v = std::clamp(v, -1.0, 1.0);
  return out;
}

namespace {

FactorGrad zero_grad(const FactorPair& f) {
  return FactorGrad{Matrix(f.u.rows(), f.u.cols()),
                    Matrix(f.v.rows(), f.v.cols())};
}

}  // namespace

FactorGrad masked_loss_gradient(const FactorPair& f, const SensingSample& s,
                                const std::vector<double>& mask) {
  if (static_cast<int>(mask.size()) != f.d1())
    throw std::invalid_argument("masked_loss_gradient: mask width mismatch");
  Matrix table = prediction_components(f, s);
  const int n = table.rows();
  const int d1 = table.cols();
  FactorGrad g = zero_grad(f);
  const double scale = -2.0 / n;
  if (s.is_indicator()) {
    for (int j = 0; j < n; ++j) {
      const auto& obs = s.indicator[j];
      double pred = 0.0;
      for (int i = 0; i < d1; ++i) pred += mask[i] * table(j, i);
      double coef = scale * (obs.y - pred);
      for (int i = 0; i < d1; ++i) {
        double b = mask[i];
        if (b == 0.0) continue;
        g.du(obs.row, i) += coef * b * f.v(obs.col, i);
        g.dv(obs.col, i) += coef * b * f.u(obs.row, i);
      }
    }
  } else {
    for (int j = 0; j < n; ++j) {
      const Matrix& a = s.dense[j].a;
      double pred = 0.0;
      for (int i = 0; i < d1; ++i) pred += mask[i] * table(j, i);
      double coef = scale * (s.dense[j].y - pred);
      // d<u B v^T, A>/du = A v B, d/dv = A^T u B
      for (int i = 0; i < d1; ++i) {
        double b = mask[i];
        if (b == 0.0) continue;
        std::vector<double> av = matvec(a, f.v.col(i));
        std::vector<double> atu = matvec_t(a, f.u.col(i));
        for (int r = 0; r < f.u.rows(); ++r) g.du(r, i) += coef * b * av[r];
        for (int r = 0; r < f.v.rows(); ++r) g.dv(r, i) += coef * b * atu[r];
      }
    }
  }
  return g;
}

FactorGrad loss_gradient(const FactorPair& f, const SensingSample& s) {
  return masked_loss_gradient(f, s, std::vector<double>(f.d1(), 1.0));
}

FactorGrad regularizer_gradient(const FactorPair& f, const SensingSample& s) {
  Matrix table = prediction_components(f, s);
  const int n = table.rows();
  const int d1 = table.cols();
  FactorGrad g = zero_grad(f);
  const double scale = 2.0 / n;
  if (s.is_indicator()) {
    for (int j = 0; j < n; ++j) {
      const auto& obs = s.indicator[j];
      for (int i = 0; i < d1; ++i) {
        double coef = scale * table(j, i);
        g.du(obs.row, i) += coef * f.v(obs.col, i);
        g.dv(obs.col, i) += coef * f.u(obs.row, i);
      }
    }
  } else {
    for (int j = 0; j < n; ++j) {
      const Matrix& a = s.dense[j].a;
      for (int i = 0; i < d1; ++i) {
        double coef = scale * table(j, i);
        std::vector<double> av = matvec(a, f.v.col(i));
        std::vector<double> atu = matvec_t(a, f.u.col(i));
        for (int r = 0; r < f.u.rows(); ++r) g.du(r, i) += coef * av[r];
        for (int r = 0; r < f.v.rows(); ++r) g.dv(r, i) += coef * atu[r];
      }
    }
  }
  return g;
}

namespace {

SensingSample take_batch(const SensingSample& s, int batch, SeededRng& rng) {
  SensingSample out;
  const int n = static_cast<int>(s.size());
  if (s.is_indicator()) {
    out.indicator.reserve(batch);
    for (int b = 0; b < batch; ++b)
      out.indicator.push_back(s.indicator[rng.uniform_int(n)]);
  } else {
    out.dense.reserve(batch);
    for (int b = 0; b < batch; ++b)
      out.dense.push_back(s.dense[rng.uniform_int(n)]);
  }
  return out;
}

// column-product balance phi = ||psi||_1 / (sqrt(d1) ||psi||_2) with
// psi_i = ||u_i|| ||v_i||; equals 1 when all column products agree
double factor_phi(const FactorPair& f) {
  double l1 = 0.0, l2 = 0.0;
  for (int i = 0; i < f.d1(); ++i) {
    double p = std::sqrt(f.u.col_norm_sq(i) * f.v.col_norm_sq(i));
    l1 += p;
    l2 += p * p;
  }
  if (l2 == 0.0) return 1.0;
  return l1 / (std::sqrt(static_cast<double>(f.d1())) * std::sqrt(l2));
}

}  // namespace

SensingTrainResult sgd_dropout_train(const FactorPair& init,
                                     const SensingSample& train,
                                     const DropoutConfig& d, const TrainHp& hp,
                                     TrainMode mode, SeededRng rng,
                                     const SensingSample* test,
                                     const RunMeta& meta) {
  check_sample(train);
  if (hp.lr <= 0.0 || hp.batch_size < 1 || hp.epochs < 1)
    throw std::invalid_argument("sgd_dropout_train: bad hyperparameters");

  FactorPair f = init;
  const int n = static_cast<int>(train.size());
  const int steps_per_epoch = (n + hp.batch_size - 1) / hp.batch_size;
  const int batch = std::min(hp.batch_size, n);
  std::vector<double> mask(f.d1(), 1.0);

  SensingTrainResult result{f, {}, false};
  for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step) {
      SensingSample mb = take_batch(train, batch, rng);
      FactorGrad g = zero_grad(f);
      if (mode == TrainMode::kSampledMask) {
        for (int i = 0; i < f.d1(); ++i)
          mask[i] = rng.bernoulli(1.0 - d.rate) ? d.keep_scale : 0.0;
        g = masked_loss_gradient(f, mb, mask);
      } else {
        g = loss_gradient(f, mb);
        if (d.lambda > 0.0) {
          FactorGrad gr = regularizer_gradient(f, mb);
          for (std::size_t i = 0; i < g.du.data().size(); ++i)
            g.du.data()[i] += d.lambda * gr.du.data()[i];
          for (std::size_t i = 0; i < g.dv.data().size(); ++i)
            g.dv.data()[i] += d.lambda * gr.dv.data()[i];
        }
      }
      for (std::size_t i = 0; i < f.u.data().size(); ++i)
        f.u.data()[i] -= hp.lr * g.du.data()[i];
      for (std::size_t i = 0; i < f.v.data().size(); ++i)
        f.v.data()[i] -= hp.lr * g.dv.data()[i];
    }

    double train_loss = f.u.all_finite() && f.v.all_finite()
                            ? erm_loss(f, train)
                            : std::numeric_limits<double>::quiet_NaN();
    bool bad = !std::isfinite(train_loss) || train_loss > 1e6;
    double reg = bad ? std::numeric_limits<double>::quiet_NaN()
                     : explicit_regularizer(f, train);
    double test_loss =
        (!bad && test != nullptr) ? erm_loss(f, *test) : train_loss;

    ExperimentRecord rec;
    rec.run_id = meta.run_id;
    rec.epoch = epoch;
    rec.dropout_rate = d.rate;
    rec.width = f.d1();
    rec.train_loss = train_loss;
    rec.test_loss = test_loss;
    rec.gap = test_loss - train_loss;
    rec.reg_value = reg;
    rec.alpha_hat = reg * f.d1();
    rec.beta_hat = 0.0;
    rec.phi = bad ? 0.0 : factor_phi(f);
    rec.seed = meta.seed;
    result.records.push_back(rec);

    if (bad) {
      result.diverged = true;
      break;
    }
  }
  result.factors = f;
  return result;
}

double gen_bound_mc(double train_loss, double alpha, int d2, std::size_t n,
                    double delta) {
  if (d2 < 2) throw std::invalid_argument("gen_bound_mc: d2 must be >= 2");
  if (n < 1) throw std::invalid_argument("gen_bound_mc: n must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("gen_bound_mc: delta outside (0,1)");
  if (alpha < 0.0) throw std::invalid_argument("gen_bound_mc: negative alpha");
  double num = 2.0 * alpha * d2 * std::log(static_cast<double>(d2)) +
               0.25 * std::log(2.0 / delta);
  return train_loss + 8.0 * std::sqrt(num / static_cast<double>(n));
}

double gen_bound_optimistic(double alpha, int d2, std::size_t n, double delta,
                            double k_const) {
  if (d2 < 2)
    throw std::invalid_argument("gen_bound_optimistic: d2 must be >= 2");
  if (n < 1) throw std::invalid_argument("gen_bound_optimistic: n must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("gen_bound_optimistic: delta outside (0,1)");
  if (alpha < 0.0)
    throw std::invalid_argument("gen_bound_optimistic: negative alpha");
  if (k_const <= 0.0)
    throw std::invalid_argument("gen_bound_optimistic: k_const must be > 0");
  double logn = std::log(static_cast<double>(n));
  double num = 2.0 * k_const * logn * logn * logn * alpha * d2 *
                   std::log(static_cast<double>(d2)) +
               4.0 * k_const * std::log(1.0 / delta);
  return num / static_cast<double>(n);
}

ConcentrationAudit concentration_audit(const FactorPair& f,
                                       const MeasurementModel& model,
                                       const std::vector<std::size_t>& n_grid,
                                       std::size_t resamples,
                                       const SeededRng& rng) {
  if (model.kind != MeasurementModel::Kind::kIndicator)
    throw std::invalid_argument("concentration_audit: indicator model required");
  if (resamples == 0)
    throw std::invalid_argument("concentration_audit: resamples must be >= 1");
  const double exact = expected_regularizer(f, model);

  // row/col inverse-cdf tables
  std::vector<double> row_cdf(model.row_probs.size());
  std::partial_sum(model.row_probs.begin(), model.row_probs.end(),
                   row_cdf.begin());
  std::vector<double> col_cdf(model.col_probs.size());
  std::partial_sum(model.col_probs.begin(), model.col_probs.end(),
                   col_cdf.begin());
  auto draw = [](const std::vector<double>& cdf, double u) {
    return static_cast<int>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  };

  ConcentrationAudit audit;
  // gamma = ||u^T||_{2,inf} * ||v||_{inf,inf} = max row norm * max entry
  double max_row_sq = 0.0;
  for (int r = 0; r < f.u.rows(); ++r) {
    double s = 0.0;
    for (int i = 0; i < f.u.cols(); ++i) s += f.u(r, i) * f.u(r, i);
    max_row_sq = std::max(max_row_sq, s);
  }
  audit.gamma_sq = max_row_sq * f.v.max_abs() * f.v.max_abs();

  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    std::size_t n = n_grid[gi];
    if (n == 0)
      throw std::invalid_argument("concentration_audit: zero sample size");
    double dev_sum = 0.0;
    for (std::size_t rep = 0; rep < resamples; ++rep) {
      SeededRng child = rng.derived(gi * resamples + rep);
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        int r = draw(row_cdf, child.uniform01());
        int c = draw(col_cdf, child.uniform01());
        for (int i = 0; i < f.d1(); ++i) {
          double m = f.u(r, i) * f.v(c, i);
          acc += m * m;
        }
      }
      dev_sum += std::fabs(acc / static_cast<double>(n) - exact);
    }
    audit.rows.push_back(
        ConcentrationRow{n, dev_sum / static_cast<double>(resamples)});
  }
  return audit;
}

double vectorized_regularizer(const Matrix& m, const Matrix& second_moment,
                              const DropoutConfig& d) {
  const long long dim = static_cast<long long>(m.rows()) * m.cols();
  if (second_moment.rows() != dim || second_moment.cols() != dim)
    throw std::invalid_argument(
        "vectorized_regularizer: second moment must be (d2*d0) square");
  // column-major vec(m), weighted by diag(second_moment)
  double total = 0.0;
  long long k = 0;
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < m.rows(); ++i, ++k) {
      double c = second_moment(static_cast<int>(k), static_cast<int>(k));
      total += c * m(i, j) * m(i, j);
    }
  }
  return d.lambda * total;
}

namespace {

// least-squares reprojection onto { u v^T = m }: a few alternations of
// v^T = pinv(u) m and u = m pinv(v)^T
void als_reproject(FactorPair& f, const Matrix& m, int iters) {
  for (int it = 0; it < iters; ++it) {
    Matrix vt = pseudo_inverse(f.u) * m;
    f.v = vt.transposed();
    f.u = m * pseudo_inverse(f.v).transposed();
  }
}

}  // namespace

ThetaOracleResult theta_minimization_oracle(const Matrix& m,
                                            const MeasurementModel& model,
                                            int d1, SeededRng rng, int steps) {
  FactorPair f = equalized_minimizer(m, model, d1);
  // 1%-sized perturbation along the constraint manifold: joint column
  // rotations and per-column rebalancing leave u v^T = m exact, so descent
  // starts feasible and every accepted move keeps the value comparable.
  for (int i = 0; i + 1 < d1; ++i) {
    double t = 0.01 * rng.gaussian();
    double c = std::cos(t), s = std::sin(t);
    for (Matrix* mat : {&f.u, &f.v}) {
      for (int r = 0; r < mat->rows(); ++r) {
        double a = (*mat)(r, i), b = (*mat)(r, i + 1);
        (*mat)(r, i) = c * a - s * b;
        (*mat)(r, i + 1) = s * a + c * b;
      }
    }
  }
  for (int i = 0; i < d1; ++i) {
    double c = std::exp(0.01 * rng.gaussian());
    for (int r = 0; r < f.u.rows(); ++r) f.u(r, i) *= c;
    for (int r = 0; r < f.v.rows(); ++r) f.v(r, i) /= c;
  }

  std::vector<double> pw(m.rows(), 1.0), qw(m.cols(), 1.0);
  if (model.kind == MeasurementModel::Kind::kIndicator) {
    pw = model.row_probs;
    qw = model.col_probs;
  }
  auto weighted_col = [](const Matrix& mat, const std::vector<double>& w,
                         int i) {
    double s = 0.0;
    for (int r = 0; r < mat.rows(); ++r) s += w[r] * mat(r, i) * mat(r, i);
    return s;
  };
  auto reg_value = [&](const FactorPair& fp) {
    double total = 0.0;
    for (int i = 0; i < fp.d1(); ++i)
      total += weighted_col(fp.u, pw, i) * weighted_col(fp.v, qw, i);
    return total;
  };

  Matrix mt(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c)
      mt(r, c) = std::sqrt(pw[r]) * m(r, c) * std::sqrt(qw[c]);

  // Exact reprojection that also helps the objective: given one factor, the
  // other is solved in closed form as the minimizer of the regularizer
  // subject to u v^T = m.  With column weights w_i taken from the fixed
  // factor this is a plain min-norm least-squares problem after rescaling.
  auto solve_other = [&](const Matrix& fixed, const std::vector<double>& fw,
                         const std::vector<double>& ow, const Matrix& target,
                         Matrix& other) {
    int k = fixed.cols();
    std::vector<double> s(k);
    for (int i = 0; i < k; ++i) {
      double w = 0.0;
      for (int r = 0; r < fixed.rows(); ++r)
        w += fw[r] * fixed(r, i) * fixed(r, i);
      s[i] = w > 0.0 ? 1.0 / std::sqrt(w) : 0.0;
    }
    Matrix ft(fixed.rows(), k);
    for (int r = 0; r < fixed.rows(); ++r)
      for (int i = 0; i < k; ++i)
        ft(r, i) = std::sqrt(fw[r]) * fixed(r, i) * s[i];
    Matrix wt = pseudo_inverse(ft) * target;  // k x other_rows
    for (int c = 0; c < other.rows(); ++c)
      for (int i = 0; i < k; ++i)
        other(c, i) = wt(i, c) * s[i] / std::sqrt(ow[c]);
  };
  auto weighted_alternation = [&](FactorPair& fp) {
    solve_other(fp.u, pw, qw, mt, fp.v);
    solve_other(fp.v, qw, pw, mt.transposed(), fp.u);
  };
  weighted_alternation(f);

  // The per-step update multiplies u(r,i) by 1 - 2*lr*cv[i]*pw[r].  Between
  // reprojections all columns shrink; what matters is the differential shrink
  // across columns, so keep the worst per-step multiplier near 1 and let the
  // periodic least-squares correction restore u v^T = m.
  auto max_coef = [&](const FactorPair& fp) {
    double pmax = *std::max_element(pw.begin(), pw.end());
    double qmax = *std::max_element(qw.begin(), qw.end());
    double c = 0.0;
    for (int i = 0; i < fp.d1(); ++i) {
      c = std::max(c, weighted_col(fp.v, qw, i) * pmax);
      c = std::max(c, weighted_col(fp.u, pw, i) * qmax);
    }
    return c;
  };
  const double feas_tol = 1e-10 * std::max(1.0, m.frobenius_norm());
  auto residual = [&](const FactorPair& fp) {
    return ((fp.u * fp.v.transposed()) - m).frobenius_norm();
  };

  double base_rate = 2e-3;
  double best = reg_value(f);
  FactorPair snap = f;
  const int block = 100;
  for (int done = 0; done < steps; done += block) {
    double coef = max_coef(f);
    if (coef <= 0.0) break;
    double lr = base_rate / coef;
    for (int step = 0; step < block; ++step) {
      std::vector<double> cu(f.d1()), cv(f.d1());
      for (int i = 0; i < f.d1(); ++i) {
        cu[i] = weighted_col(f.u, pw, i);
        cv[i] = weighted_col(f.v, qw, i);
      }
      for (int i = 0; i < f.d1(); ++i) {
        for (int r = 0; r < f.u.rows(); ++r)
          f.u(r, i) -= lr * 2.0 * cv[i] * pw[r] * f.u(r, i);
        for (int r = 0; r < f.v.rows(); ++r)
          f.v(r, i) -= lr * 2.0 * cu[i] * qw[r] * f.v(r, i);
      }
    }
    bool ok = f.u.all_finite() && f.v.all_finite();
    if (ok) {
      weighted_alternation(f);
      double val = reg_value(f);
      ok = std::isfinite(val) && val <= best * (1.0 + 1e-12) &&
           residual(f) <= feas_tol;
      if (ok) {
        best = std::min(best, val);
        snap = f;
        base_rate *= 0.99;
      }
    }
    if (!ok) {
      // back to the last feasible point whose value did not increase
      f = snap;
      base_rate *= 0.5;
    }
  }
  f = snap;
  weighted_alternation(f);
  if (reg_value(f) > best || residual(f) > feas_tol) f = snap;

  ThetaOracleResult out{reg_value(f), residual(f), f};
  return out;
}

FactorPair he_init_factors(int d2, int d0, int d1, SeededRng& rng) {
  double sd = std::sqrt(2.0 / d1);
  Matrix u = random_gaussian(d2, d1, rng, sd);
  Matrix v = random_gaussian(d0, d1, rng, sd);
  return FactorPair(std::move(u), std::move(v));
}

}  // namespace dropcap::sensing
