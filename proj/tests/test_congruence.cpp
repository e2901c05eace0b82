#include <cmath>
#include <vector>

#include "congruence/congruence.hpp"
#include "congruence/divergence.hpp"
#include "congruence/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace congruence;
using test_util::matrix_rel_error;
using test_util::random_matrix;
using test_util::random_partition;
using test_util::random_permutation;

namespace {

// Entrywise triple-sum oracle for the change-of-basis product, written
// directly from the summation form.
Matrix triple_sum_oracle(const Matrix& cross, const Matrix& intra) {
  const int n = cross.rows();
  const int m = cross.cols();
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int k = 0; k < m; ++k) {
        for (int p = 0; p < m; ++p) {
          acc += cross(i, k) * intra(k, p) * cross(j, p);
        }
      }
      out(i, j) = acc;
    }
  }
  return out;
}

// Partition whose cross blocks are permutations aligned so both congruence
// losses vanish: S_LV = P, S_VL = P^T, S_VV = P^T S_LL P.
BlockPartition permutation_fixed_point(Rng& rng, int n) {
  std::vector<int> perm;
  const Matrix p = random_permutation(rng, n, perm);
  const Matrix s_ll = random_matrix(rng, n, n, -3.0, 3.0);
  const Matrix s_vv = matmul(matmul(transpose(p), s_ll), p);
  return BlockPartition{s_ll, p, transpose(p), s_vv};
}

Matrix one_hot_rows(Rng& rng, int rows, int cols, std::vector<int>& hot) {
  hot.resize(rows);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    hot[i] = rng.uniform_int(0, cols - 1);
    m(i, hot[i]) = 1.0;
  }
  return m;
}

}  // namespace

TEST_CASE("change_of_basis_l: permutation conjugation") {
  Rng rng(37);
  std::vector<int> perm;
  const Matrix p = random_permutation(rng, 4, perm);
  const Matrix s_vv = random_matrix(rng, 4, 4, -2.0, 2.0);
  BlockPartition part{Matrix(4, 4), p, transpose(p), s_vv};

  const Matrix projected = change_of_basis_l(part);
  // (P S P^T)[i][j] = S[perm[i]][perm[j]]
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(projected(i, j) == s_vv(perm[i], perm[j]));
    }
  }
}

TEST_CASE("change_of_basis_l: scalar case and triple-sum oracle") {
  const double w = 1.7, v = -0.4;
  BlockPartition scalar{Matrix(1, 1, {0.0}), Matrix(1, 1, {w}), Matrix(1, 1, {0.0}),
                        Matrix(1, 1, {v})};
  CHECK(change_of_basis_l(scalar)(0, 0) == doctest::Approx(w * w * v).epsilon(1e-15));

  Rng rng(41);
  const BlockPartition part = random_partition(rng, 2, 3, -3.0, 3.0);
  CHECK(matrix_rel_error(change_of_basis_l(part), triple_sum_oracle(part.s_lv, part.s_vv)) < 1e-12);
  CHECK(matrix_rel_error(change_of_basis_v(part), triple_sum_oracle(part.s_vl, part.s_ll)) < 1e-12);
}

TEST_CASE("cacr_l vanishes when the projection reproduces s_ll") {
  Rng rng(43);
  const Matrix s_ll = random_matrix(rng, 3, 3, -2.0, 2.0);
  // identity cross block, S_VV == S_LL
  BlockPartition ident{s_ll, identity(3), identity(3), s_ll};
  CHECK(cacr_l(ident) == 0.0);

  // permutation cross block with conjugated S_VV
  for (int c = 0; c < 10; ++c) {
    const BlockPartition part = permutation_fixed_point(rng, rng.uniform_int(2, 5));
    CHECK(std::abs(cacr_l(part)) < 1e-9);
    CHECK(std::abs(cacr_v(part)) < 1e-9);
  }
}

TEST_CASE("cacr_l recomposition oracle") {
  Rng rng(47);
  const BlockPartition part = random_partition(rng, 3, 4, -3.0, 3.0);
  const double recomposed =
      mkl(row_softmax(matmul(matmul(part.s_lv, part.s_vv), transpose(part.s_lv))),
          row_softmax(part.s_ll))
          .value;
  CHECK(cacr_l(part) == doctest::Approx(recomposed).epsilon(1e-15));
}

TEST_CASE("cacr_v scalar case is degenerate zero") {
  // 1-element softmax rows are always [1], so the divergence vanishes
  Rng rng(53);
  for (int c = 0; c < 5; ++c) {
    const BlockPartition part = random_partition(rng, 1, 1, -3.0, 3.0);
    CHECK(cacr_v(part) == 0.0);
    CHECK(cacr_l(part) == 0.0);
  }
}

TEST_CASE("cacr_total sums its parts") {
  Rng rng(59);
  BlockPartition p = permutation_fixed_point(rng, 3);
  CHECK(cacr_total(p).total == 0.0);

  const BlockPartition part = random_partition(rng, 3, 4, -3.0, 3.0);
  const CacrLoss loss = cacr_total(part);
  CHECK(loss.loss_l == doctest::Approx(cacr_l(part)).epsilon(1e-15));
  CHECK(loss.loss_v == doctest::Approx(cacr_v(part)).epsilon(1e-15));
  CHECK(loss.total == doctest::Approx(loss.loss_l + loss.loss_v).epsilon(1e-12));
  CHECK(loss.total >= 0.0);
}

TEST_CASE("soft equivalence oracle: one-hot rows collapse to the hard lookup") {
  Rng rng(61);
  std::vector<int> hot;
  const Matrix s_vl = one_hot_rows(rng, 4, 3, hot);
  BlockPartition part{random_matrix(rng, 3, 3, -2.0, 2.0), Matrix(3, 4), s_vl,
                      Matrix(4, 4)};
  const Matrix soft = soft_equivalence_oracle_v(part);
  const Matrix hard = hard_equivalence_v(part);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(soft(i, j) == part.s_ll(hot[i], hot[j]));
    }
  }
  CHECK(soft == hard);
}

TEST_CASE("soft equivalence oracle: scalar case") {
  const double s_vl = -1.3, s_ll = 0.7;
  BlockPartition part{Matrix(1, 1, {s_ll}), Matrix(1, 1, {0.0}), Matrix(1, 1, {s_vl}),
                      Matrix(1, 1, {0.0})};
  CHECK(soft_equivalence_oracle_v(part)(0, 0) ==
        doctest::Approx(s_vl * s_vl * s_ll).epsilon(1e-15));
}

TEST_CASE("equivalence theorem: loop oracle matches the closed form") {
  Rng rng(67);
  double worst_v = 0.0, worst_l = 0.0;
  for (int c = 0; c < 200; ++c) {
    const int nl = rng.uniform_int(1, 8);
    const int nv = rng.uniform_int(1, 8);
    const BlockPartition part = random_partition(rng, nl, nv, -3.0, 3.0);
    worst_v = std::max(worst_v, matrix_rel_error(soft_equivalence_oracle_v(part),
                                                 change_of_basis_v(part)));
    worst_l = std::max(worst_l, matrix_rel_error(soft_equivalence_oracle_l(part),
                                                 change_of_basis_l(part)));
  }
  CHECK(worst_v < 1e-10);
  CHECK(worst_l < 1e-10);
}

TEST_CASE("mean weighting form is the sum scaled by the term count") {
  Rng rng(71);
  const BlockPartition part = random_partition(rng, 3, 5, -3.0, 3.0);
  const Matrix sum_v = soft_equivalence_oracle_v(part);
  const Matrix mean_v = soft_equivalence_oracle_v(part, WeightingForm::kMean);
  const double scale = 3.0 * 3.0;  // n_lang^2 weighted terms per entry
  for (int i = 0; i < mean_v.rows(); ++i) {
    for (int j = 0; j < mean_v.cols(); ++j) {
      CHECK(mean_v(i, j) == doctest::Approx(sum_v(i, j) / scale).epsilon(1e-12));
    }
  }
}

TEST_CASE("hard equivalence: ties break to the lowest index") {
  BlockPartition part{Matrix(2, 2, {1.0, 2.0, 3.0, 4.0}), Matrix(2, 2),
                      Matrix(2, 2, {0.5, 0.5, 0.25, 0.75}), Matrix(2, 2)};
  // row 0 ties at 0.5 -> index 0; row 1 argmax -> index 1
  const Matrix target = hard_equivalence_v(part);
  CHECK(target(0, 0) == part.s_ll(0, 0));
  CHECK(target(0, 1) == part.s_ll(0, 1));
  CHECK(target(1, 0) == part.s_ll(1, 0));
  CHECK(target(1, 1) == part.s_ll(1, 1));
}

TEST_CASE("hard equivalence: uniform rows collapse to a constant target") {
  Rng rng(73);
  const Matrix s_ll = random_matrix(rng, 3, 3, -2.0, 2.0);
  Matrix uniform(4, 3);
  for (double& v : uniform.data()) v = 0.25;
  BlockPartition part{s_ll, Matrix(3, 4), uniform, Matrix(4, 4)};
  const Matrix target = hard_equivalence_v(part);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(target(i, j) == s_ll(0, 0));
    }
  }
}

TEST_CASE("argmax correspondence examples and linear-scan oracle") {
  BlockPartition part{Matrix(2, 2), Matrix(2, 2, {0.1, 0.9, 0.8, 0.2}),
                      Matrix(2, 2, {0.3, 0.3, 0.6, 0.1}), Matrix(2, 2)};
  const CorrespondenceMap map = argmax_correspondence(part);
  CHECK(map.lang_to_vis == std::vector<int>{1, 0});
  CHECK(map.vis_to_lang == std::vector<int>{0, 0});  // tie in row 0 -> index 0

  Rng rng(79);
  for (int c = 0; c < 20; ++c) {
    const BlockPartition rp = random_partition(rng, rng.uniform_int(1, 6),
                                               rng.uniform_int(1, 6), -5.0, 5.0);
    const CorrespondenceMap m = argmax_correspondence(rp);
    for (int i = 0; i < rp.n_lang(); ++i) {
      int best = 0;
      for (int j = 1; j < rp.n_vis(); ++j) {
        if (rp.s_lv(i, j) > rp.s_lv(i, best)) best = j;
      }
      CHECK(m.lang_to_vis[i] == best);
    }
    for (int i = 0; i < rp.n_vis(); ++i) {
      int best = 0;
      for (int j = 1; j < rp.n_lang(); ++j) {
        if (rp.s_vl(i, j) > rp.s_vl(i, best)) best = j;
      }
      CHECK(m.vis_to_lang[i] == best);
    }
  }
}

TEST_CASE("cacr stays finite and non-negative under cross-block scaling") {
  Rng rng(83);
  const BlockPartition base = random_partition(rng, 3, 4, -2.0, 2.0);
  for (double scale : {0.1, 0.5, 1.0, 2.0, 10.0}) {
    BlockPartition scaled = base;
    for (double& v : scaled.s_lv.data()) v *= scale;
    const double loss = cacr_l(scaled);
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
  }
}
