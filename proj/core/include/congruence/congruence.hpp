#pragma once

#include <vector>

#include "congruence/attention.hpp"

namespace congruence {

/// The two change-of-basis divergence losses and their sum.
struct CacrLoss {
  double loss_l = 0.0;
  double loss_v = 0.0;
  double total = 0.0;
};

/// Per-row argmax indices into the opposite modality.
struct CorrespondenceMap {
  std::vector<int> lang_to_vis;  // one entry per language token
  std::vector<int> vis_to_lang;  // one entry per visual token
};

/// How the soft-equivalence oracle combines the weighted terms. The sum form
/// matches the closed-form triple product; the mean form divides by the
/// number of weighted terms and exists for comparison only.
enum class WeightingForm { kSum, kMean };

/// S_LV * S_VV * S_LV^T: visual intra-modal structure projected into the
/// language index space. Shape n_lang x n_lang.
Matrix change_of_basis_l(const BlockPartition& p);

/// S_VL * S_LL * S_VL^T, the mirror projection. Shape n_vis x n_vis.
Matrix change_of_basis_v(const BlockPartition& p);

/// mkl(row_softmax(change_of_basis_l(p)), row_softmax(p.s_ll)).
double cacr_l(const BlockPartition& p);

/// mkl(row_softmax(change_of_basis_v(p)), row_softmax(p.s_vv)).
double cacr_v(const BlockPartition& p);

/// Both losses and their sum.
CacrLoss cacr_total(const BlockPartition& p);

/// Brute-force soft-equivalence target on the vision side, computed by
/// explicit loops: out[i][j] = sum_k sum_p S_VL[i,k] * S_LL[k,p] * S_VL[j,p].
/// This is the independent oracle the closed form change_of_basis_v is
/// tested against.
Matrix soft_equivalence_oracle_v(const BlockPartition& p,
                                 WeightingForm form = WeightingForm::kSum);

/// Language-side mirror: out[i][j] = sum_k sum_p S_LV[i,k] * S_VV[k,p] * S_LV[j,p].
Matrix soft_equivalence_oracle_l(const BlockPartition& p,
                                 WeightingForm form = WeightingForm::kSum);

/// Hard (argmax) equivalence target on the vision side: with
/// k_i = argmax of S_VL row i (ties to the lowest index),
/// out[i][j] = S_LL[k_i][k_j].
Matrix hard_equivalence_v(const BlockPartition& p);

/// Per-row argmax over s_lv and s_vl; ties break toward the lowest index.
CorrespondenceMap argmax_correspondence(const BlockPartition& p);

}  // namespace congruence
