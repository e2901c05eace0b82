#include "congruence/congruence.hpp"

#include <cmath>

#include "congruence/divergence.hpp"

namespace congruence {

namespace {

int row_argmax(const Matrix& m, int row) {
  int best = 0;
  for (int j = 1; j < m.cols(); ++j) {
    if (m(row, j) > m(row, best)) best = j;  // ties keep the lowest index
  }
  return best;
}

// out[i][j] = sum_k sum_p cross[i,k] * intra[k,p] * cross[j,p], by explicit
// loops. `cross` rows index the output side, columns the opposite modality.
Matrix weighted_equivalence(const Matrix& cross, const Matrix& intra,
                            WeightingForm form) {
  const int n_out = cross.rows();
  const int n_opp = cross.cols();
  Matrix out(n_out, n_out);
  for (int i = 0; i < n_out; ++i) {
    for (int j = 0; j < n_out; ++j) {
      double acc = 0.0;
      for (int k = 0; k < n_opp; ++k) {
        for (int p = 0; p < n_opp; ++p) {
          acc += cross(i, k) * intra(k, p) * cross(j, p);
        }
      }
      if (form == WeightingForm::kMean) {
        acc /= static_cast<double>(n_opp) * static_cast<double>(n_opp);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

}  // namespace

Matrix change_of_basis_l(const BlockPartition& p) {
  p.validate();
  return matmul(matmul(p.s_lv, p.s_vv), transpose(p.s_lv));
}

Matrix change_of_basis_v(const BlockPartition& p) {
  p.validate();
  return matmul(matmul(p.s_vl, p.s_ll), transpose(p.s_vl));
}

double cacr_l(const BlockPartition& p) {
  return mkl(row_softmax(change_of_basis_l(p)), row_softmax(p.s_ll)).value;
}

double cacr_v(const BlockPartition& p) {
  return mkl(row_softmax(change_of_basis_v(p)), row_softmax(p.s_vv)).value;
}

CacrLoss cacr_total(const BlockPartition& p) {
  CacrLoss loss;
  loss.loss_l = cacr_l(p);
  loss.loss_v = cacr_v(p);
  loss.total = loss.loss_l + loss.loss_v;
  return loss;
}

Matrix soft_equivalence_oracle_v(const BlockPartition& p, WeightingForm form) {
  p.validate();
  return weighted_equivalence(p.s_vl, p.s_ll, form);
}

Matrix soft_equivalence_oracle_l(const BlockPartition& p, WeightingForm form) {
  p.validate();
  return weighted_equivalence(p.s_lv, p.s_vv, form);
}

Matrix hard_equivalence_v(const BlockPartition& p) {
  p.validate();
  const int nv = p.n_vis();
  std::vector<int> counterpart(nv);
  for (int i = 0; i < nv; ++i) counterpart[i] = row_argmax(p.s_vl, i);
  Matrix out(nv, nv);
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nv; ++j) {
      out(i, j) = p.s_ll(counterpart[i], counterpart[j]);
    }
  }
  return out;
}

CorrespondenceMap argmax_correspondence(const BlockPartition& p) {
  p.validate();
  CorrespondenceMap map;
  map.lang_to_vis.resize(p.n_lang());
  map.vis_to_lang.resize(p.n_vis());
  for (int i = 0; i < p.n_lang(); ++i) map.lang_to_vis[i] = row_argmax(p.s_lv, i);
  for (int i = 0; i < p.n_vis(); ++i) map.vis_to_lang[i] = row_argmax(p.s_vl, i);
  return map;
}

}  // namespace congruence
