/**
 * @file report.hpp
 * @brief Improvement arithmetic and the markdown results table.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arag/error.hpp"

namespace arag {

struct MetricPair {
  double ndcg = 0.0;
  double hit = 0.0;
};

/// Aggregates for one dataset, keyed by variant name
/// (recency, vanilla_rag, arag_no_nli_no_csa, arag_no_nli, arag).
struct DatasetMetrics {
  std::string name;
  std::map<std::string, MetricPair> rows;
};

/// 100 * (value - base) / base, or nullopt when base is not positive.
inline std::optional<double> relative_gain(double value, double base) {
  if (!(base > 0.0)) return std::nullopt;
  return 100.0 * (value - base) / base;
}

/// Percentage gain of arag over the strongest baseline.
inline std::optional<double> improvement_over_best_baseline(double arag, const std::vector<double>& baselines) {
  if (baselines.empty()) throw UsageError("improvement_over_best_baseline: no baselines");
  return relative_gain(arag, *std::max_element(baselines.begin(), baselines.end()));
}

inline std::string format_percent(std::optional<double> pct, int decimals = 2) {
  if (!pct) return "n/a";
  char buf[64];
  // Avoid printing "-0.00%" for tiny negative values.
  double v = *pct;
  if (std::fabs(v) < 0.5 * std::pow(10.0, -decimals)) v = 0.0;
  std::snprintf(buf, sizeof buf, "%.*f%%", decimals, v);
  return buf;
}

inline std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

/// Display label for a variant row.
inline std::string row_label(std::string_view variant) {
  if (variant == "recency") return "Recency-based Ranking";
  if (variant == "vanilla_rag") return "Vanilla RAG";
  if (variant == "arag_no_nli_no_csa") return "ARAG w/o NLI & CSA";
  if (variant == "arag_no_nli") return "ARAG w/o NLI";
  if (variant == "arag") return "ARAG";
  return std::string(variant);
}

struct ImprovementCell {
  std::string dataset;
  std::string metric;  ///< "ndcg@k" or "hit@k"
  std::optional<double> value;
  std::string text;  ///< two decimals
};

struct GainCell {
  std::string dataset;
  std::string row;
  std::string metric;
  std::optional<double> value;
  std::string text;  ///< one decimal
};

/// A cell printed in an external reference table, checked against our arithmetic.
struct PublishedCell {
  std::string dataset;
  std::string metric;
  std::string text;
};

struct TableReport {
  std::string markdown;
  std::vector<ImprovementCell> improvements;
  std::vector<GainCell> ablation_gains;
  std::vector<std::string> warnings;
};

namespace detail {

inline const MetricPair* row(const DatasetMetrics& d, const std::string& name) {
  auto it = d.rows.find(name);
  return it == d.rows.end() ? nullptr : &it->second;
}

inline double pick(const MetricPair& p, bool ndcg) { return ndcg ? p.ndcg : p.hit; }

inline void table_header(std::string& md, const std::vector<DatasetMetrics>& datasets, const std::string& nd,
                         const std::string& ht) {
  md += "| |";
  for (const auto& d : datasets) md += " " + d.name + " " + nd + " | " + d.name + " " + ht + " |";
  md += "\n|---|";
  for (std::size_t i = 0; i < datasets.size(); ++i) md += "---|---|";
  md += "\n";
}

}  // namespace detail

/// Builds the two-part results table: baselines vs ARAG with an improvement
/// row, then the ablation rows with their gain over vanilla RAG.
///
/// `published` cells are compared with the computed improvement text; every
/// mismatch becomes a warning and is listed under the table.
inline TableReport format_table1(const std::vector<DatasetMetrics>& datasets, std::size_t k = 5,
                                 const std::vector<PublishedCell>& published = {}) {
  TableReport out;
  const std::string nd = "ndcg@" + std::to_string(k);
  const std::string ht = "hit@" + std::to_string(k);
  const std::string nd_label = "NDCG@" + std::to_string(k);
  const std::string ht_label = "Hit@" + std::to_string(k);
  std::string& md = out.markdown;

  auto cells = [&](const std::string& name) {
    std::string line = "| " + row_label(name) + " |";
    for (const auto& d : datasets) {
      const MetricPair* p = detail::row(d, name);
      line += p ? " " + format_metric(p->ndcg) + " | " + format_metric(p->hit) + " |" : " - | - |";
    }
    return line + "\n";
  };
  auto present = [&](const std::string& name) {
    return std::any_of(datasets.begin(), datasets.end(),
                       [&](const DatasetMetrics& d) { return detail::row(d, name) != nullptr; });
  };

  md += "## Benchmarks vs ARAG\n\n";
  detail::table_header(md, datasets, nd_label, ht_label);
  for (const char* name : {"recency", "vanilla_rag", "arag"}) {
    if (present(name)) md += cells(name);
  }
  md += "| % Improvement |";
  for (const auto& d : datasets) {
    const MetricPair* arag = detail::row(d, "arag");
    std::vector<const MetricPair*> bases;
    for (const char* b : {"recency", "vanilla_rag"}) {
      if (const MetricPair* p = detail::row(d, b)) bases.push_back(p);
    }
    for (bool ndcg : {true, false}) {
      ImprovementCell c{d.name, ndcg ? nd : ht, std::nullopt, "n/a"};
      if (arag && !bases.empty()) {
        std::vector<double> values;
        for (const auto* b : bases) values.push_back(detail::pick(*b, ndcg));
        c.value = improvement_over_best_baseline(detail::pick(*arag, ndcg), values);
        c.text = format_percent(c.value);
      }
      md += " " + c.text + " |";
      out.improvements.push_back(std::move(c));
    }
  }
  md += "\n\n";

  md += "## Ablation\n\n";
  detail::table_header(md, datasets, nd_label, ht_label);
  for (const char* name : {"vanilla_rag", "arag_no_nli_no_csa", "arag_no_nli", "arag"}) {
    if (present(name)) md += cells(name);
  }
  md += "\nGain over Vanilla RAG:\n\n";
  detail::table_header(md, datasets, nd_label, ht_label);
  for (const char* name : {"arag_no_nli_no_csa", "arag_no_nli", "arag"}) {
    if (!present(name)) continue;
    md += "| " + row_label(name) + " |";
    for (const auto& d : datasets) {
      const MetricPair* vanilla = detail::row(d, "vanilla_rag");
      const MetricPair* r = detail::row(d, name);
      for (bool ndcg : {true, false}) {
        GainCell g{d.name, name, ndcg ? nd : ht, std::nullopt, "n/a"};
        if (vanilla && r) {
          g.value = relative_gain(detail::pick(*r, ndcg), detail::pick(*vanilla, ndcg));
          g.text = format_percent(g.value, 1);
        }
        md += " " + g.text + " |";
        out.ablation_gains.push_back(std::move(g));
      }
    }
    md += "\n";
  }

  for (const auto& p : published) {
    auto it = std::find_if(out.improvements.begin(), out.improvements.end(), [&](const ImprovementCell& c) {
      return c.dataset == p.dataset && c.metric == p.metric;
    });
    if (it == out.improvements.end()) continue;
    if (it->text != p.text) {
      out.warnings.push_back("published improvement for " + p.dataset + " " + p.metric + " is " + p.text +
                             " but the aggregates give " + it->text);
    }
  }
  if (!out.warnings.empty()) {
    md += "\nWarnings:\n\n";
    for (const auto& w : out.warnings) md += "- " + w + "\n";
  }
  return out;
}

}  // namespace arag
