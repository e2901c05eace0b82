#include "congruence/attention.hpp"

#include <string>

namespace congruence {

void AttentionBundle::validate() const {
  if (n_lang < 1 || n_vis < 1) {
    throw DimensionError("AttentionBundle: n_lang and n_vis must be >= 1");
  }
  const int side = n_lang + n_vis;
  if (scores.rows() != side || scores.cols() != side) {
    throw DimensionError("AttentionBundle: scores must be square with side n_lang + n_vis (expected " +
                         std::to_string(side) + ", got " +
                         std::to_string(scores.rows()) + "x" +
                         std::to_string(scores.cols()) + ")");
  }
  scores.require_finite("AttentionBundle scores");
}

void BlockPartition::validate() const {
  const int nl = s_ll.rows();
  const int nv = s_vv.rows();
  if (nl < 1 || nv < 1) {
    throw DimensionError("BlockPartition: blocks must be non-empty");
  }
  if (s_ll.cols() != nl || s_vv.cols() != nv || s_lv.rows() != nl ||
      s_lv.cols() != nv || s_vl.rows() != nv || s_vl.cols() != nl) {
    throw DimensionError("BlockPartition: block shapes inconsistent with a single (n_lang, n_vis)");
  }
}

BlockPartition partition(const AttentionBundle& bundle) {
  bundle.validate();
  const int nl = bundle.n_lang;
  const int nv = bundle.n_vis;
  BlockPartition p{Matrix(nl, nl), Matrix(nl, nv), Matrix(nv, nl), Matrix(nv, nv)};
  const Matrix& s = bundle.scores;
  for (int i = 0; i < nl; ++i) {
    for (int j = 0; j < nl; ++j) p.s_ll(i, j) = s(i, j);
    for (int j = 0; j < nv; ++j) p.s_lv(i, j) = s(i, nl + j);
  }
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nl; ++j) p.s_vl(i, j) = s(nl + i, j);
    for (int j = 0; j < nv; ++j) p.s_vv(i, j) = s(nl + i, nl + j);
  }
  return p;
}

AttentionBundle assemble(const BlockPartition& p) {
  p.validate();
  const int nl = p.n_lang();
  const int nv = p.n_vis();
  AttentionBundle b{nl, nv, Matrix(nl + nv, nl + nv)};
  for (int i = 0; i < nl; ++i) {
    for (int j = 0; j < nl; ++j) b.scores(i, j) = p.s_ll(i, j);
    for (int j = 0; j < nv; ++j) b.scores(i, nl + j) = p.s_lv(i, j);
  }
  for (int i = 0; i < nv; ++i) {
    for (int j = 0; j < nl; ++j) b.scores(nl + i, j) = p.s_vl(i, j);
    for (int j = 0; j < nv; ++j) b.scores(nl + i, nl + j) = p.s_vv(i, j);
  }
  return b;
}

}  // namespace congruence
