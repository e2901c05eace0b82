#include "congruence/divergence.hpp"

#include <cmath>
#include <string>

namespace congruence {

namespace {

void require_distribution(std::span<const double> row, const char* name) {
  double sum = 0.0;
  for (double v : row) {
    if (!(v >= 0.0)) {  // catches negatives and NaN
      throw DomainError(std::string(name) + ": entries must be non-negative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowSumTolerance) {
    throw DomainError(std::string(name) + ": row must sum to 1 (got " +
                      std::to_string(sum) + ")");
  }
}

// The unchecked directed term, shared by kl_row and mkl.
double kl_term(std::span<const double> p, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) {
      acc += p[k] * std::log(p[k] / std::max(q[k], kKlEpsilon));
    }
  }
  return acc;
}

}  // namespace

double kl_row(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionError("kl_row: rows must have equal length");
  }
  if (p.empty()) {
    throw DimensionError("kl_row: rows must be non-empty");
  }
  require_distribution(p, "kl_row p");
  require_distribution(q, "kl_row q");
  return kl_term(p, q);
}

DivergenceValue mkl(const Matrix& s, const Matrix& s_prime) {
  if (!s.same_shape(s_prime)) {
    throw DimensionError("mkl: matrices must have identical shapes");
  }
  if (s.rows() == 0 || s.cols() == 0) {
    throw DimensionError("mkl: matrices must be non-empty");
  }
  const int n = s.cols();
  for (int i = 0; i < s.rows(); ++i) {
    require_distribution({&s.data()[static_cast<std::size_t>(i) * n], static_cast<std::size_t>(n)}, "mkl row of s");
    require_distribution({&s_prime.data()[static_cast<std::size_t>(i) * n], static_cast<std::size_t>(n)}, "mkl row of s_prime");
  }
  double total = 0.0;
  for (int i = 0; i < s.rows(); ++i) {
    std::span<const double> a{&s.data()[static_cast<std::size_t>(i) * n], static_cast<std::size_t>(n)};
    std::span<const double> b{&s_prime.data()[static_cast<std::size_t>(i) * n], static_cast<std::size_t>(n)};
    total += kl_term(a, b) + kl_term(b, a);
  }
  return DivergenceValue{total};
}

}  // namespace congruence
