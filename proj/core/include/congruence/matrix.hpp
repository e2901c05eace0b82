#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace congruence {

// Operand shapes do not line up (bad block sizes, inner-dimension mismatch, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Values violate a mathematical precondition (negative probability, row not
// summing to 1, non-finite entry, diverging training loss).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// External input (file, scene collection) is malformed.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. The universal carrier for attention
/// score blocks, probability matrices and losses; all arithmetic is 64-bit.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);  // zero-filled
  Matrix(int rows, int cols, std::vector<double> data);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;
  // Throws DomainError naming `what` if any entry is NaN or infinite.
  void require_finite(const std::string& what) const;

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool operator==(const Matrix& other) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

/// Standard matrix product. Throws DimensionError if a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

Matrix identity(int n);

/// Row-wise softmax with max-subtraction; every output row is a probability
/// distribution. Throws DimensionError on an empty matrix.
Matrix row_softmax(const Matrix& m);

/// Backprop through row_softmax: given the softmax output `p` and the
/// upstream gradient `dp`, returns the gradient w.r.t. the pre-softmax
/// scores: dx_ij = p_ij * (dp_ij - sum_k dp_ik p_ik).
Matrix row_softmax_backward(const Matrix& p, const Matrix& dp);

}  // namespace congruence
