#pragma once

// Experiment result tables: records, categorical factors, CSV ingestion.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lmmvar/csv.hpp"
#include "lmmvar/errors.hpp"

namespace lmmvar {

/// One leaf of the experiment tree. Seeds, configs and reruns are opaque
/// labels; a seed's numeric value is never interpreted.
struct ExperimentRecord {
  std::string model;
  std::string optimizer;
  std::string seed;
  std::string hparam_config;
  std::string rerun;
  double metric = 0.0;

  bool operator==(const ExperimentRecord&) const = default;
};

/// Column names of the five labels and the response.
struct ColumnMap {
  std::string model = "model";
  std::string optimizer = "optimizer";
  std::string seed = "seed";
  std::string hparam_config = "hparams";
  std::string rerun = "rerun";
  std::string metric = "accuracy";

  std::vector<std::string> label_columns() const {
    return {model, optimizer, seed, hparam_config, rerun};
  }
  bool operator==(const ColumnMap&) const = default;
};

enum class ContrastCoding { treatment, sum_to_zero };

/// Which factor enters as fixed effect and which as crossed random intercepts.
/// A fixed factor written "a:b" is the observed-pairs interaction of a and b.
struct ModelSpec {
  ColumnMap columns;
  std::string fixed_factor = "model:optimizer";
  std::vector<std::string> random_factors = {"seed", "hparams"};
  ContrastCoding contrast_coding = ContrastCoding::treatment;
  bool include_intercept = true;

  const std::string& response() const { return columns.metric; }

  void validate() const {
    if (fixed_factor.empty()) throw SchemaError("model spec: empty fixed factor name");
    for (std::size_t i = 0; i < random_factors.size(); ++i) {
      const auto& f = random_factors[i];
      if (f == fixed_factor)
        throw SchemaError("model spec: random factor '" + f + "' is also the fixed factor");
      for (std::size_t j = 0; j < i; ++j)
        if (random_factors[j] == f) throw SchemaError("model spec: duplicate random factor '" + f + "'");
    }
  }

  bool operator==(const ModelSpec&) const = default;
};

/// Immutable, validated collection of records with categorical factors.
/// Level order within each factor is lexicographic, so it does not depend on
/// input row order.
class Dataset {
 public:
  struct Factor {
    std::vector<std::string> levels;
    std::vector<int> codes;  // per record, index into levels
    bool operator==(const Factor&) const = default;
  };

  static Dataset from_records(std::vector<ExperimentRecord> records, ColumnMap columns = {}) {
    if (records.empty()) throw EmptyDatasetError();
    const auto names = columns.label_columns();
    for (std::size_t i = 0; i < names.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (names[i] == names[j]) throw SchemaError("duplicate column name '" + names[i] + "'");

    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      const std::string* labels[] = {&r.model, &r.optimizer, &r.seed, &r.hparam_config, &r.rerun};
      for (std::size_t k = 0; k < 5; ++k)
        if (labels[k]->empty()) throw RowError(i + 1, "empty label in column '" + names[k] + "'");
      if (!std::isfinite(r.metric)) throw RowError(i + 1, "non-finite metric");
    }

    Dataset d;
    d.records_ = std::move(records);
    d.columns_ = std::move(columns);
    const auto& rs = d.records_;
    d.add_factor(d.columns_.model, [&](std::size_t i) { return rs[i].model; });
    d.add_factor(d.columns_.optimizer, [&](std::size_t i) { return rs[i].optimizer; });
    d.add_factor(d.columns_.seed, [&](std::size_t i) { return rs[i].seed; });
    d.add_factor(d.columns_.hparam_config, [&](std::size_t i) { return rs[i].hparam_config; });
    d.add_factor(d.columns_.rerun, [&](std::size_t i) { return rs[i].rerun; });
    return d;
  }

  std::size_t n() const noexcept { return records_.size(); }
  const std::vector<ExperimentRecord>& records() const noexcept { return records_; }
  const ColumnMap& columns() const noexcept { return columns_; }

  bool has_factor(const std::string& name) const { return factors_.contains(name); }

  const Factor& factor(const std::string& name) const {
    auto it = factors_.find(name);
    if (it == factors_.end()) throw UnknownNameError("unknown factor '" + name + "'");
    return it->second;
  }
  const std::vector<std::string>& levels(const std::string& name) const { return factor(name).levels; }
  const std::vector<int>& codes(const std::string& name) const { return factor(name).codes; }
  const std::string& label(const std::string& name, std::size_t i) const {
    const auto& f = factor(name);
    return f.levels[static_cast<std::size_t>(f.codes[i])];
  }

  std::vector<std::string> factor_names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : factors_) out.push_back(k);
    return out;
  }

  std::vector<double> metrics() const {
    std::vector<double> y;
    y.reserve(records_.size());
    for (const auto& r : records_) y.push_back(r.metric);
    return y;
  }

  /// Adds the interaction of a and b, named "a:b", whose levels are the
  /// observed pairs only.
  Dataset cross(const std::string& a, const std::string& b) const {
    const auto& fa = factor(a);
    const auto& fb = factor(b);
    Dataset out = *this;
    out.add_factor(a + ":" + b, [&](std::size_t i) {
      return fa.levels[static_cast<std::size_t>(fa.codes[i])] + ":" +
             fb.levels[static_cast<std::size_t>(fb.codes[i])];
    });
    return out;
  }

  /// Resolves a factor name, building "a:b[:c...]" interactions on demand.
  Dataset with_factor(const std::string& name) const {
    if (has_factor(name)) return *this;
    auto pos = name.rfind(':');
    if (pos == std::string::npos || pos == 0 || pos + 1 == name.size())
      throw UnknownNameError("unknown factor '" + name + "'");
    Dataset base = with_factor(name.substr(0, pos));
    return base.cross(name.substr(0, pos), name.substr(pos + 1));
  }

  bool operator==(const Dataset&) const = default;

 private:
  template <typename LabelFn>
  void add_factor(const std::string& name, LabelFn&& label_of) {
    std::vector<std::string> labels;
    labels.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) labels.push_back(label_of(i));
    Factor f;
    f.levels = labels;
    std::sort(f.levels.begin(), f.levels.end());
    f.levels.erase(std::unique(f.levels.begin(), f.levels.end()), f.levels.end());
    f.codes.reserve(labels.size());
    for (const auto& l : labels) {
      auto it = std::lower_bound(f.levels.begin(), f.levels.end(), l);
      f.codes.push_back(static_cast<int>(it - f.levels.begin()));
    }
    factors_[name] = std::move(f);
  }

  std::vector<ExperimentRecord> records_;
  ColumnMap columns_;
  std::map<std::string, Factor> factors_;
};

inline Dataset cross_factor(const Dataset& d, const std::string& a, const std::string& b) {
  return d.cross(a, b);
}

inline Dataset parse_csv(std::string_view text, const ColumnMap& columns = {}) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw EmptyDatasetError();

  const auto& header = rows.front();
  auto find_col = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ci_model = find_col(columns.model);
  const std::size_t ci_opt = find_col(columns.optimizer);
  const std::size_t ci_seed = find_col(columns.seed);
  const std::size_t ci_cfg = find_col(columns.hparam_config);
  const std::size_t ci_rerun = find_col(columns.rerun);
  const std::size_t ci_metric = find_col(columns.metric);

  if (rows.size() < 2) throw EmptyDatasetError();

  std::vector<ExperimentRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw RowError(r, "expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(row.size()));
    ExperimentRecord rec{row[ci_model], row[ci_opt], row[ci_seed], row[ci_cfg], row[ci_rerun], 0.0};
    const auto& m = row[ci_metric];
    if (m.empty()) throw RowError(r, "missing value in column '" + columns.metric + "'");
    if (!csv::parse_double(m, rec.metric))
      throw RowError(r, "non-numeric value '" + m + "' in column '" + columns.metric + "'");
    if (!std::isfinite(rec.metric))
      throw RowError(r, "non-finite value '" + m + "' in column '" + columns.metric + "'");
    records.push_back(std::move(rec));
  }
  return Dataset::from_records(std::move(records), columns);
}

inline Dataset load_csv(const std::string& path, const ModelSpec& spec = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), spec.columns);
}

inline void write_csv(const Dataset& d, std::ostream& os) {
  const auto& c = d.columns();
  csv::write_row(os, {c.model, c.optimizer, c.seed, c.hparam_config, c.rerun, c.metric});
  for (const auto& r : d.records())
    csv::write_row(os, {r.model, r.optimizer, r.seed, r.hparam_config, r.rerun, csv::format_exact(r.metric)});
}

inline void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "write");
  write_csv(d, out);
  if (!out) throw IoError(path, "write");
}

}  // namespace lmmvar
