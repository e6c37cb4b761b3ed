#include "dropcap/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace dropcap {

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0)
    throw std::invalid_argument("Matrix: negative dimension");
  entries_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (rows < 0 || cols < 0)
    throw std::invalid_argument("Matrix: negative dimension");
  if (entries_.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("Matrix: entry count does not match shape");
  for (double v : entries_)
    if (!std::isfinite(v))
      throw std::invalid_argument("Matrix: non-finite entry");
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diag(const std::vector<double>& d) {
  Matrix m(static_cast<int>(d.size()), static_cast<int>(d.size()));
  for (int i = 0; i < m.rows(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::operator*(const Matrix& rhs) const {
  if (cols_ != rhs.rows_)
    throw std::invalid_argument("Matrix multiply: inner dimensions differ");
  Matrix out(rows_, rhs.cols_);
  for (int i = 0; i < rows_; ++i) {
    for (int k = 0; k < cols_; ++k) {
      double a = (*this)(i, k);
      if (a == 0.0) continue;
      for (int j = 0; j < rhs.cols_; ++j) out(i, j) += a * rhs(k, j);
    }
  }
  return out;
}

Matrix Matrix::operator+(const Matrix& rhs) const {
  if (rows_ != rhs.rows_ || cols_ != rhs.cols_)
    throw std::invalid_argument("Matrix add: shape mismatch");
  Matrix out = *this;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    out.entries_[i] += rhs.entries_[i];
  return out;
}

Matrix Matrix::operator-(const Matrix& rhs) const {
  if (rows_ != rhs.rows_ || cols_ != rhs.cols_)
    throw std::invalid_argument("Matrix subtract: shape mismatch");
  Matrix out = *this;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    out.entries_[i] -= rhs.entries_[i];
  return out;
}

Matrix Matrix::scaled(double c) const {
  Matrix out = *this;
  for (double& v : out.entries_) v *= c;
  return out;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : entries_) s += v * v;
  return std::sqrt(s);
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : entries_) m = std::max(m, std::fabs(v));
  return m;
}

bool Matrix::all_finite() const {
  for (double v : entries_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<double> Matrix::col(int j) const {
  std::vector<double> c(rows_);
  for (int i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
  return c;
}

std::vector<double> Matrix::row(int i) const {
  std::vector<double> r(cols_);
  for (int j = 0; j < cols_; ++j) r[j] = (*this)(i, j);
  return r;
}

double Matrix::col_norm_sq(int j) const {
  double s = 0.0;
  for (int i = 0; i < rows_; ++i) s += (*this)(i, j) * (*this)(i, j);
  return s;
}

Matrix random_gaussian(int rows, int cols, SeededRng& rng, double stddev) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = stddev * rng.gaussian();
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> matvec(const Matrix& m, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != m.cols())
    throw std::invalid_argument("matvec: size mismatch");
  std::vector<double> y(m.rows(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += m(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

std::vector<double> matvec_t(const Matrix& m, const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != m.rows())
    throw std::invalid_argument("matvec_t: size mismatch");
  std::vector<double> y(m.cols(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    double xi = x[i];
    if (xi == 0.0) continue;
    for (int j = 0; j < m.cols(); ++j) y[j] += m(i, j) * xi;
  }
  return y;
}

namespace {

// Working storage for the one-sided Jacobi sweep: columns kept contiguous.
struct ColumnSet {
  int rows = 0;
  std::vector<std::vector<double>> cols;

  explicit ColumnSet(const Matrix& m) : rows(m.rows()) {
    cols.resize(m.cols());
    for (int j = 0; j < m.cols(); ++j) cols[j] = m.col(j);
  }

  double coldot(int i, int j) const {
    const auto& a = cols[i];
    const auto& b = cols[j];
    double s = 0.0;
    for (int k = 0; k < rows; ++k) s += a[k] * b[k];
    return s;
  }

  void rotate(int i, int j, double c, double s) {
    auto& a = cols[i];
    auto& b = cols[j];
    for (int k = 0; k < rows; ++k) {
      double ai = a[k], bj = b[k];
      a[k] = c * ai - s * bj;
      b[k] = s * ai + c * bj;
    }
  }
};

// Fill left-factor columns marked zero with unit vectors orthonormal to all
// other columns (rank-deficient input leaves those directions free).
void complete_basis(Matrix& left, const std::vector<char>& is_zero) {
  int rows = left.rows();
  int k = left.cols();
  for (int j = 0; j < k; ++j) {
    if (!is_zero[j]) continue;
    std::vector<double> best;
    double best_norm = -1.0;
    for (int cand = 0; cand < rows; ++cand) {
      std::vector<double> r(rows, 0.0);
      r[cand] = 1.0;
      for (int c = 0; c < k; ++c) {
        if (c == j) continue;
        if (is_zero[c] && c > j) continue;  // not yet filled
        double proj = 0.0;
        for (int t = 0; t < rows; ++t) proj += left(t, c) * r[t];
        for (int t = 0; t < rows; ++t) r[t] -= proj * left(t, c);
      }
      double nr = norm2(r);
      if (nr > best_norm) {
        best_norm = nr;
        best = std::move(r);
      }
      if (best_norm > 0.9) break;  // good enough, stop scanning
    }
    for (int t = 0; t < rows; ++t) left(t, j) = best[t] / best_norm;
  }
}

}  // namespace

SvdResult svd(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0)
    throw std::invalid_argument("svd: empty matrix");
  if (!m.all_finite()) throw std::invalid_argument("svd: non-finite input");

  if (m.rows() < m.cols()) {
    SvdResult t = svd(m.transposed());
    return SvdResult{std::move(t.right), std::move(t.singular_values),
                     std::move(t.left)};
  }

  const int rows = m.rows();
  const int n = m.cols();
  const double fro_sq = m.frobenius_norm() * m.frobenius_norm();

  ColumnSet a(m);
  Matrix v = Matrix::identity(n);

  if (fro_sq > 0.0) {
    const double abs_tol = 1e-12 * fro_sq;
    const double rel_tol = 1e-13;
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      bool rotated = false;
      for (int i = 0; i < n - 1; ++i) {
        for (int j = i + 1; j < n; ++j) {
          double gii = a.coldot(i, i);
          double gjj = a.coldot(j, j);
          double gij = a.coldot(i, j);
          double off = std::fabs(gij);
          if (off <= abs_tol && off <= rel_tol * std::sqrt(gii * gjj)) continue;
          double tau = (gjj - gii) / (2.0 * gij);
          double t = (tau >= 0.0 ? 1.0 : -1.0) /
                     (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
          double c = 1.0 / std::sqrt(1.0 + t * t);
          double s = t * c;
          a.rotate(i, j, c, s);
          // same rotation on the right factor, column form
          for (int k = 0; k < n; ++k) {
            double vi = v(k, i), vj = v(k, j);
            v(k, i) = c * vi - s * vj;
            v(k, j) = s * vi + c * vj;
          }
          rotated = true;
        }
      }
      if (!rotated) break;
    }
  }

  std::vector<double> sig(n);
  for (int j = 0; j < n; ++j) sig[j] = std::sqrt(a.coldot(j, j));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sig[x] > sig[y]; });

  Matrix left(rows, n);
  Matrix right(n, n);
  std::vector<double> sorted_sig(n);
  std::vector<char> is_zero(n, 0);
  const double zero_cut = 1e-14 * std::sqrt(fro_sq);
  for (int j = 0; j < n; ++j) {
    int src = order[j];
    sorted_sig[j] = sig[src];
    for (int i = 0; i < n; ++i) right(i, j) = v(i, src);
    if (sig[src] <= zero_cut) {
      is_zero[j] = 1;  // direction undetermined, fill below
    } else {
      for (int i = 0; i < rows; ++i) left(i, j) = a.cols[src][i] / sig[src];
    }
  }
  complete_basis(left, is_zero);

  return SvdResult{std::move(left), std::move(sorted_sig), std::move(right)};
}

double nuclear_norm(const Matrix& m) {
  SvdResult r = svd(m);
  double s = 0.0;
  for (double x : r.singular_values) s += x;
  return s;
}

double spectral_norm(const Matrix& m) { return svd(m).singular_values.front(); }

int numeric_rank(const Matrix& m, double rel_tol) {
  SvdResult r = svd(m);
  double top = r.singular_values.front();
  if (top == 0.0) return 0;
  int rank = 0;
  for (double s : r.singular_values)
    if (s > rel_tol * top) ++rank;
  return rank;
}

Matrix pseudo_inverse(const Matrix& m, double tol) {
  if (tol < 0.0) throw std::invalid_argument("pseudo_inverse: negative tol");
  SvdResult r = svd(m);
  double top = r.singular_values.front();
  int k = static_cast<int>(r.singular_values.size());
  // pinv = right * diag(1/sigma) * left^T, dropped below the cutoff
  Matrix out(m.cols(), m.rows());
  for (int t = 0; t < k; ++t) {
    double s = r.singular_values[t];
    if (s <= tol * top || s == 0.0) continue;
    double inv = 1.0 / s;
    for (int i = 0; i < m.cols(); ++i) {
      double ri = r.right(i, t) * inv;
      if (ri == 0.0) continue;
      for (int j = 0; j < m.rows(); ++j) out(i, j) += ri * r.left(j, t);
    }
  }
  return out;
}

double mahalanobis_data_norm(const Matrix& x, const Matrix& c_pinv) {
  if (c_pinv.rows() != c_pinv.cols() || c_pinv.rows() != x.rows())
    throw std::invalid_argument("mahalanobis_data_norm: shape mismatch");
  double total = 0.0;
  for (int j = 0; j < x.cols(); ++j) {
    std::vector<double> xi = x.col(j);
    double q = dot(xi, matvec(c_pinv, xi));
    if (q < -1e-9)
      throw std::invalid_argument(
          "mahalanobis_data_norm: negative quadratic form " +
          std::to_string(q) + " at column " + std::to_string(j) +
          " (input not PSD)");
    total += std::max(q, 0.0);
  }
  return std::sqrt(total);
}

Matrix equal_diagonal_rotation(const std::vector<double>& sigma) {
  const int n = static_cast<int>(sigma.size());
  if (n == 0)
    throw std::invalid_argument("equal_diagonal_rotation: empty input");

  Matrix s = Matrix::diag(sigma);
  Matrix q = Matrix::identity(n);
  double trace = 0.0, scale = 0.0;
  for (double x : sigma) {
    trace += x;
    scale = std::max(scale, std::fabs(x));
  }
  const double mu = trace / n;
  scale = std::max(scale, std::fabs(mu));
  if (scale == 0.0) return q;

  std::vector<char> pinned(n, 0);
  for (int iter = 0; iter < n - 1; ++iter) {
    int hi = -1, lo = -1;
    for (int k = 0; k < n; ++k) {
      if (pinned[k]) continue;
      if (hi < 0 || s(k, k) > s(hi, hi)) hi = k;
      if (lo < 0 || s(k, k) < s(lo, lo)) lo = k;
    }
    if (hi < 0 || lo < 0 || s(hi, hi) - s(lo, lo) <= 1e-13 * scale) break;

    // rotate in the (hi, lo) plane; angle solves a quadratic in tan(theta)
    // so that the new (lo, lo) entry lands exactly on mu
    double aa = s(hi, hi) - mu;
    double cc = s(lo, lo) - mu;
    if (aa <= 0.0 || cc >= 0.0) break;  // rounding noise only, done
    double b = s(hi, lo);
    double disc = std::sqrt(b * b - aa * cc);  // aa > 0 > cc, always real
    // smaller-magnitude root of aa*t^2 + 2b*t + cc = 0, cancellation-free
    double t = -cc / (b + std::copysign(disc, b >= 0.0 ? 1.0 : -1.0));
    double c = 1.0 / std::sqrt(1.0 + t * t);
    double sn = t * c;

    // two-sided update of s restricted to rows/cols hi, lo
    for (int k = 0; k < n; ++k) {
      double ki = s(k, hi), kj = s(k, lo);
      s(k, hi) = c * ki - sn * kj;
      s(k, lo) = sn * ki + c * kj;
    }
    for (int k = 0; k < n; ++k) {
      double ik = s(hi, k), jk = s(lo, k);
      s(hi, k) = c * ik - sn * jk;
      s(lo, k) = sn * ik + c * jk;
    }
    for (int k = 0; k < n; ++k) {
      double qi = q(k, hi), qj = q(k, lo);
      q(k, hi) = c * qi - sn * qj;
      q(k, lo) = sn * qi + c * qj;
    }
    pinned[lo] = 1;
  }
  return q;
}

}  // namespace dropcap
