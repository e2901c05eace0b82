#include "congruence/gradients.hpp"

#include <cmath>

#include "congruence/divergence.hpp"

namespace congruence {

namespace {

Matrix& add_into(Matrix& acc, const Matrix& m) {
  for (std::size_t k = 0; k < acc.data().size(); ++k) acc.data()[k] += m.data()[k];
  return acc;
}

// Gradients of the implemented symmetric row-KL (with its p=0 convention and
// epsilon floor on the log argument) w.r.t. both row-stochastic inputs.
// Away from the clamp, dF/dp = ln(p/q) + 1 - q/p and symmetrically for q.
void mkl_pair_gradients(const Matrix& p, const Matrix& q, Matrix& gp, Matrix& gq) {
  gp = Matrix(p.rows(), p.cols());
  gq = Matrix(p.rows(), p.cols());
  for (int i = 0; i < p.rows(); ++i) {
    for (int j = 0; j < p.cols(); ++j) {
      const double pv = p(i, j);
      const double qv = q(i, j);
      double dp = 0.0, dq = 0.0;
      if (pv > 0.0) {
        dp += std::log(pv) - std::log(std::max(qv, kKlEpsilon)) + 1.0;
      }
      if (qv > 0.0 && pv > kKlEpsilon) {
        dp -= qv / pv;
      }
      if (qv > 0.0) {
        dq += std::log(qv) - std::log(std::max(pv, kKlEpsilon)) + 1.0;
      }
      if (pv > 0.0 && qv > kKlEpsilon) {
        dq -= pv / qv;
      }
      gp(i, j) = dp;
      gq(i, j) = dq;
    }
  }
}

// One congruence side: loss = mkl(softmax(A B A^T), softmax(C)).
// Returns gradients w.r.t. A (cross block), B (projected intra block) and
// C (reference intra block).
struct SideGradients {
  Matrix d_cross;
  Matrix d_projected;
  Matrix d_reference;
};

SideGradients side_gradients(const Matrix& a, const Matrix& b, const Matrix& c) {
  const Matrix m = matmul(matmul(a, b), transpose(a));
  const Matrix p = row_softmax(m);
  const Matrix q = row_softmax(c);

  Matrix gp, gq;
  mkl_pair_gradients(p, q, gp, gq);

  const Matrix gm = row_softmax_backward(p, gp);

  SideGradients out;
  // d/dA of A B A^T with upstream G is G A B^T + G^T A B.
  out.d_cross = matmul(gm, matmul(a, transpose(b)));
  add_into(out.d_cross, matmul(transpose(gm), matmul(a, b)));
  out.d_projected = matmul(transpose(a), matmul(gm, a));
  out.d_reference = row_softmax_backward(q, gq);
  return out;
}

}  // namespace

BlockGradients cacr_gradients_l(const BlockPartition& p) {
  p.validate();
  const SideGradients side = side_gradients(p.s_lv, p.s_vv, p.s_ll);
  BlockGradients g;
  g.d_s_ll = side.d_reference;
  g.d_s_lv = side.d_cross;
  g.d_s_vl = Matrix(p.n_vis(), p.n_lang());
  g.d_s_vv = side.d_projected;
  return g;
}

BlockGradients cacr_gradients_v(const BlockPartition& p) {
  p.validate();
  const SideGradients side = side_gradients(p.s_vl, p.s_ll, p.s_vv);
  BlockGradients g;
  g.d_s_ll = side.d_projected;
  g.d_s_lv = Matrix(p.n_lang(), p.n_vis());
  g.d_s_vl = side.d_cross;
  g.d_s_vv = side.d_reference;
  return g;
}

BlockGradients cacr_gradients(const BlockPartition& p) {
  BlockGradients g = cacr_gradients_l(p);
  const BlockGradients gv = cacr_gradients_v(p);
  add_into(g.d_s_ll, gv.d_s_ll);
  add_into(g.d_s_lv, gv.d_s_lv);
  add_into(g.d_s_vl, gv.d_s_vl);
  add_into(g.d_s_vv, gv.d_s_vv);
  return g;
}

double finite_difference(const BlockPartition& p, BlockId block, int i, int j,
                         double h) {
  p.validate();
  if (h <= 0.0) {
    throw DomainError("finite_difference: h must be positive");
  }
  BlockPartition probe = p;
  Matrix* target = nullptr;
  switch (block) {
    case BlockId::kLL: target = &probe.s_ll; break;
    case BlockId::kLV: target = &probe.s_lv; break;
    case BlockId::kVL: target = &probe.s_vl; break;
    case BlockId::kVV: target = &probe.s_vv; break;
  }
  if (i < 0 || i >= target->rows() || j < 0 || j >= target->cols()) {
    throw DimensionError("finite_difference: entry index out of range");
  }
  const double original = (*target)(i, j);
  (*target)(i, j) = original + h;
  const double up = cacr_total(probe).total;
  (*target)(i, j) = original - h;
  const double down = cacr_total(probe).total;
  return (up - down) / (2.0 * h);
}

}  // namespace congruence
