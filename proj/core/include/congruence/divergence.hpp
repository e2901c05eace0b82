#pragma once

#include <span>

#include "congruence/matrix.hpp"

namespace congruence {

// Floor applied to the second argument inside the KL logarithm so the loss
// stays finite when a softmax saturates.
inline constexpr double kKlEpsilon = 1e-12;

// Tolerance on row sums when validating that a row is a distribution.
inline constexpr double kRowSumTolerance = 1e-6;

/// A non-negative divergence in nats.
struct DivergenceValue {
  double value = 0.0;
};

/// One directed KL term: sum_k p_k ln(p_k / q_k). Terms with p_k = 0
/// contribute 0; q_k is clamped below by kKlEpsilon. Both rows must be
/// probability distributions of equal length.
double kl_row(std::span<const double> p, std::span<const double> q);

/// Symmetric matrix KL: sum over rows i of kl_row(s_i, s'_i) + kl_row(s'_i, s_i).
/// Requires identical shapes and row-stochastic inputs.
DivergenceValue mkl(const Matrix& s, const Matrix& s_prime);

}  // namespace congruence
