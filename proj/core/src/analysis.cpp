#include "congruence/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "congruence/divergence.hpp"

namespace congruence {

namespace {

double empirical_entropy(const std::vector<int>& indices) {
  std::map<int, int> counts;
  for (int v : indices) ++counts[v];
  const double n = static_cast<double>(indices.size());
  double h = 0.0;
  for (const auto& [idx, c] : counts) {
    const double p = c / n;
    h -= p * std::log(p);
  }
  return h;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void append_row(std::string& out, const CongruenceRow& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                r.id.c_str(), r.loss_l, r.loss_v, r.total, r.h_l2v, r.h_v2l,
                r.hard_soft_div);
  out += buf;
}

}  // namespace

EntropyReport argmax_entropy(const CorrespondenceMap& map, std::string id) {
  if (map.lang_to_vis.empty() || map.vis_to_lang.empty()) {
    throw DataError("argmax_entropy: empty correspondence map");
  }
  EntropyReport r;
  r.id = std::move(id);
  r.lang_to_vis_entropy = empirical_entropy(map.lang_to_vis);
  r.vis_to_lang_entropy = empirical_entropy(map.vis_to_lang);
  return r;
}

CongruenceReport congruence_report(
    const std::vector<std::pair<std::string, AttentionBundle>>& bundles) {
  if (bundles.empty()) {
    throw DataError("congruence_report: no bundles");
  }
  CongruenceReport report;
  report.rows.reserve(bundles.size());
  for (const auto& [id, bundle] : bundles) {
    const BlockPartition p = partition(bundle);
    const CacrLoss loss = cacr_total(p);
    const EntropyReport h = argmax_entropy(argmax_correspondence(p), id);
    CongruenceRow row;
    row.id = id;
    row.loss_l = loss.loss_l;
    row.loss_v = loss.loss_v;
    row.total = loss.total;
    row.h_l2v = h.lang_to_vis_entropy;
    row.h_v2l = h.vis_to_lang_entropy;
    row.hard_soft_div =
        mkl(row_softmax(hard_equivalence_v(p)), row_softmax(change_of_basis_v(p))).value;
    report.rows.push_back(std::move(row));
  }

  auto column_summary = [&](auto getter, double& mean_out, double& median_out) {
    std::vector<double> values;
    values.reserve(report.rows.size());
    double sum = 0.0;
    for (const CongruenceRow& r : report.rows) {
      values.push_back(getter(r));
      sum += values.back();
    }
    mean_out = sum / values.size();
    median_out = median_of(std::move(values));
  };
  report.mean.id = "mean";
  report.median.id = "median";
  column_summary([](const CongruenceRow& r) { return r.loss_l; }, report.mean.loss_l, report.median.loss_l);
  column_summary([](const CongruenceRow& r) { return r.loss_v; }, report.mean.loss_v, report.median.loss_v);
  column_summary([](const CongruenceRow& r) { return r.total; }, report.mean.total, report.median.total);
  column_summary([](const CongruenceRow& r) { return r.h_l2v; }, report.mean.h_l2v, report.median.h_l2v);
  column_summary([](const CongruenceRow& r) { return r.h_v2l; }, report.mean.h_v2l, report.median.h_v2l);
  column_summary([](const CongruenceRow& r) { return r.hard_soft_div; }, report.mean.hard_soft_div,
                 report.median.hard_soft_div);
  return report;
}

std::string report_to_csv(const CongruenceReport& report) {
  std::string out = "id,loss_l,loss_v,total,h_l2v,h_v2l,hard_soft_div\n";
  for (const CongruenceRow& r : report.rows) append_row(out, r);
  append_row(out, report.mean);
  append_row(out, report.median);
  return out;
}

CorrelationResult correlation_probe(std::span<const double> x,
                                    std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("correlation_probe: collections must be aligned");
  }
  if (x.size() < 3) {
    throw DataError("correlation_probe: need at least 3 examples");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  CorrelationResult r;
  r.n = static_cast<int>(x.size());
  if (sxx <= 0.0 || syy <= 0.0) {
    r.defined = false;
    r.r = std::nan("");
    return r;
  }
  r.defined = true;
  r.r = sxy / std::sqrt(sxx * syy);
  return r;
}

CorrelationResult correlation_probe(std::span<const EntropyReport> reports,
                                    std::span<const double> scores,
                                    EntropyDirection direction) {
  std::vector<double> entropies;
  entropies.reserve(reports.size());
  for (const EntropyReport& r : reports) {
    entropies.push_back(direction == EntropyDirection::kLangToVis
                            ? r.lang_to_vis_entropy
                            : r.vis_to_lang_entropy);
  }
  return correlation_probe(entropies, scores);
}

}  // namespace congruence
