#pragma once

// Five-number summaries per (model, optimizer, config, seed) group.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "lmmvar/dataset.hpp"
#include "lmmvar/errors.hpp"

namespace lmmvar {

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
inline double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile probability must lie in [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct BoxplotRow {
  std::string model;
  std::string optimizer;
  std::string hparam_config;
  std::string seed;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  std::size_t n = 0;
};

/// Groups sorted lexicographically by (model, optimizer, config, seed).
inline std::vector<BoxplotRow> boxplot_data(const Dataset& d) {
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : d.records()) groups[{r.model, r.optimizer, r.hparam_config, r.seed}].push_back(r.metric);
  if (groups.empty()) throw EmptyDatasetError();

  std::vector<BoxplotRow> out;
  out.reserve(groups.size());
  for (auto& [key, v] : groups) {
    std::sort(v.begin(), v.end());
    BoxplotRow row;
    std::tie(row.model, row.optimizer, row.hparam_config, row.seed) = key;
    row.min = v.front();
    row.q1 = quantile_type7(v, 0.25);
    row.median = quantile_type7(v, 0.5);
    row.q3 = quantile_type7(v, 0.75);
    row.max = v.back();
    row.n = v.size();
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace lmmvar
