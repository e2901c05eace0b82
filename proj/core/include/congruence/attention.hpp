#pragma once

#include "congruence/matrix.hpp"

namespace congruence {

/// A joint self-attention score matrix over the concatenated language+vision
/// token sequence, plus the sequence lengths that define its block partition.
/// Language tokens occupy the leading indices; scores are raw (pre-softmax).
struct AttentionBundle {
  int n_lang = 0;
  int n_vis = 0;
  Matrix scores;  // (n_lang + n_vis) x (n_lang + n_vis)

  // Throws DimensionError / DomainError when the invariants don't hold.
  void validate() const;
};

/// The four submatrices of a joint score matrix, split at the modality
/// boundary: s_ll top-left, s_lv top-right, s_vl bottom-left, s_vv
/// bottom-right.
struct BlockPartition {
  Matrix s_ll;  // n_lang x n_lang
  Matrix s_lv;  // n_lang x n_vis
  Matrix s_vl;  // n_vis x n_lang
  Matrix s_vv;  // n_vis x n_vis

  int n_lang() const { return s_ll.rows(); }
  int n_vis() const { return s_vv.rows(); }

  // Throws DimensionError when block shapes are inconsistent.
  void validate() const;
};

/// Splits a bundle's scores into the four modality blocks.
BlockPartition partition(const AttentionBundle& bundle);

/// Inverse of partition: reassembles the joint score matrix.
AttentionBundle assemble(const BlockPartition& p);

}  // namespace congruence
