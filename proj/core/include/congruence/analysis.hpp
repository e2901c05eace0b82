#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "congruence/attention.hpp"
#include "congruence/congruence.hpp"

namespace congruence {

/// Shannon entropy (nats) of the empirical distribution of argmax target
/// indices, one value per cross-modal direction.
struct EntropyReport {
  std::string id;
  double lang_to_vis_entropy = 0.0;
  double vis_to_lang_entropy = 0.0;
};

/// Throws DataError on an empty map.
EntropyReport argmax_entropy(const CorrespondenceMap& map, std::string id = {});

struct CongruenceRow {
  std::string id;
  double loss_l = 0.0;
  double loss_v = 0.0;
  double total = 0.0;
  double h_l2v = 0.0;
  double h_v2l = 0.0;
  double hard_soft_div = 0.0;  // m-KL between softmaxed hard and soft targets
};

struct CongruenceReport {
  std::vector<CongruenceRow> rows;
  CongruenceRow mean;
  CongruenceRow median;
};

/// Per-bundle congruence losses, argmax entropies and the divergence between
/// the hard (argmax) and soft (closed-form) vision-side target matrices.
CongruenceReport congruence_report(
    const std::vector<std::pair<std::string, AttentionBundle>>& bundles);

/// CSV with fixed columns id,loss_l,loss_v,total,h_l2v,h_v2l,hard_soft_div,
/// one row per bundle plus mean and median summary rows.
std::string report_to_csv(const CongruenceReport& report);

struct CorrelationResult {
  double r = 0.0;
  int n = 0;
  bool defined = false;  // false when either side has zero variance
};

/// Pearson correlation between two aligned samples; needs at least 3 pairs.
CorrelationResult correlation_probe(std::span<const double> x,
                                    std::span<const double> y);

enum class EntropyDirection { kLangToVis, kVisToLang };

/// Correlates one entropy direction against per-example scores.
CorrelationResult correlation_probe(std::span<const EntropyReport> reports,
                                    std::span<const double> scores,
                                    EntropyDirection direction);

}  // namespace congruence
