#pragma once

#include "congruence/attention.hpp"
#include "congruence/congruence.hpp"

namespace congruence {

/// Gradients of a congruence loss with respect to every raw score entry of
/// every block. Shapes mirror the source partition.
struct BlockGradients {
  Matrix d_s_ll;
  Matrix d_s_lv;
  Matrix d_s_vl;
  Matrix d_s_vv;
};

enum class BlockId { kLL, kLV, kVL, kVV };

/// Analytic gradient of cacr_l(p) alone.
BlockGradients cacr_gradients_l(const BlockPartition& p);

/// Analytic gradient of cacr_v(p) alone.
BlockGradients cacr_gradients_v(const BlockPartition& p);

/// Analytic gradient of cacr_total(p).total, composed through the matmul,
/// row_softmax and mkl differentials.
BlockGradients cacr_gradients(const BlockPartition& p);

/// Central-difference probe of the same loss:
/// (L(entry + h) - L(entry - h)) / (2h) with L = cacr_total(.).total.
double finite_difference(const BlockPartition& p, BlockId block, int i, int j,
                         double h);

}  // namespace congruence
