#include "congruence/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace congruence {

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) {
    throw DimensionError("matrix dimensions must be non-negative");
  }
  data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 0 || cols < 0) {
    throw DimensionError("matrix dimensions must be non-negative");
  }
  if (data_.size() != static_cast<std::size_t>(rows) * cols) {
    throw DimensionError("matrix data length must equal rows * cols");
  }
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Matrix::require_finite(const std::string& what) const {
  if (!all_finite()) {
    throw DomainError(what + ": non-finite entry");
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree (" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      out(j, i) = m(i, j);
    }
  }
  return out;
}

Matrix identity(int n) {
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix row_softmax(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw DimensionError("row_softmax: matrix must have at least one row and column");
  }
  m.require_finite("row_softmax input");
  Matrix out(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    double max_v = m(i, 0);
    for (int j = 1; j < m.cols(); ++j) max_v = std::max(max_v, m(i, j));
    double sum = 0.0;
    for (int j = 0; j < m.cols(); ++j) {
      const double e = std::exp(m(i, j) - max_v);
      out(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < m.cols(); ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix row_softmax_backward(const Matrix& p, const Matrix& dp) {
  if (!p.same_shape(dp)) {
    throw DimensionError("row_softmax_backward: shape mismatch");
  }
  Matrix dx(p.rows(), p.cols());
  for (int i = 0; i < p.rows(); ++i) {
    double dot = 0.0;
    for (int j = 0; j < p.cols(); ++j) dot += dp(i, j) * p(i, j);
    for (int j = 0; j < p.cols(); ++j) {
      dx(i, j) = p(i, j) * (dp(i, j) - dot);
    }
  }
  return dx;
}

}  // namespace congruence
