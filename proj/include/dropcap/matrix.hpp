#pragma once

#include <vector>

#include "dropcap/rng.hpp"

namespace dropcap {

// Dense row-major matrix of doubles.  Everything here targets desk-scale
// problems (dims up to a few hundred); clarity beats blocking tricks.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);  // zero-filled
  Matrix(int rows, int cols, std::vector<double> entries);

  static Matrix identity(int n);
  static Matrix diag(const std::vector<double>& d);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int i, int j) {
    return entries_[static_cast<std::size_t>(i) * cols_ + j];
  }
  double operator()(int i, int j) const {
    return entries_[static_cast<std::size_t>(i) * cols_ + j];
  }

  Matrix transposed() const;
  Matrix operator*(const Matrix& rhs) const;
  Matrix operator+(const Matrix& rhs) const;
  Matrix operator-(const Matrix& rhs) const;
  Matrix scaled(double c) const;

  double frobenius_norm() const;
  double max_abs() const;
  bool all_finite() const;

  std::vector<double> col(int j) const;
  std::vector<double> row(int i) const;
  double col_norm_sq(int j) const;

  const std::vector<double>& data() const { return entries_; }
  std::vector<double>& data() { return entries_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> entries_;
};

Matrix random_gaussian(int rows, int cols, SeededRng& rng, double stddev = 1.0);

// Thin SVD, m = left * diag(singular_values) * right^T.
// left is rows x k and right is cols x k with k = min(rows, cols);
// both have orthonormal columns, singular values are non-negative and
// non-increasing.
struct SvdResult {
  Matrix left;
  std::vector<double> singular_values;
  Matrix right;
};

// One-sided Jacobi with cyclic sweeps.  Sweeping stops once every
// off-diagonal Gram entry of the working columns is below 1e-12 * ||m||_F^2;
// a relative threshold on column-norm products is applied on top of that so
// the left factor stays orthonormal even when singular values are tiny.
SvdResult svd(const Matrix& m);

double nuclear_norm(const Matrix& m);
double spectral_norm(const Matrix& m);
int numeric_rank(const Matrix& m, double rel_tol = 1e-10);

// Moore-Penrose inverse via SVD; singular values <= tol * sigma_max are
// treated as zero.
Matrix pseudo_inverse(const Matrix& m, double tol = 1e-12);

// sqrt(sum_i x_i^T c_pinv x_i) over the columns x_i of x.  Rejects
// quadratic forms below -1e-9 (non-PSD input); small negative round-off is
// clamped to zero.
double mahalanobis_data_norm(const Matrix& x, const Matrix& c_pinv);

// Rotation Q with every diagonal entry of Q^T diag(sigma) Q equal to
// mean(sigma).  Greedy Givens construction: each rotation pins one diagonal
// entry to the mean exactly, so at most sigma.size()-1 rotations are used.
Matrix equal_diagonal_rotation(const std::vector<double>& sigma);

// small vector helpers shared across modules
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);
std::vector<double> matvec(const Matrix& m, const std::vector<double>& x);
std::vector<double> matvec_t(const Matrix& m, const std::vector<double>& x);

}  // namespace dropcap
