#pragma once

// Report tables with CSV and JSON renderings. Column names follow the
// conventional lme4/lmerTest printouts.

#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "lmmvar/boxplot.hpp"
#include "lmmvar/csv.hpp"
#include "lmmvar/hyperparams.hpp"
#include "lmmvar/inference.hpp"
#include "lmmvar/lmm.hpp"
#include "lmmvar/simulate.hpp"

namespace lmmvar {

using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

inline Cell cell(const std::optional<double>& v) { return v ? Cell{*v} : Cell{}; }

struct ReportTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

inline void write_table_csv(const ReportTable& t, std::ostream& os, int digits = 6) {
  csv::write_row(os, t.columns);
  for (const auto& row : t.rows) {
    csv::Row out;
    for (const auto& c : row) {
      if (std::holds_alternative<std::monostate>(c)) out.push_back("NA");
      else if (auto d = std::get_if<double>(&c)) out.push_back(csv::format_sig(*d, digits));
      else if (auto i = std::get_if<std::int64_t>(&c)) out.push_back(std::to_string(*i));
      else out.push_back(std::get<std::string>(c));
    }
    csv::write_row(os, out);
  }
}

inline nlohmann::ordered_json table_json(const ReportTable& t) {
  nlohmann::ordered_json j;
  j["table"] = t.name;
  j["columns"] = t.columns;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json r = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < t.columns.size() && i < row.size(); ++i) {
      const auto& c = row[i];
      auto& slot = r[t.columns[i]];
      if (std::holds_alternative<std::monostate>(c)) slot = nullptr;
      else if (auto d = std::get_if<double>(&c)) slot = std::isfinite(*d) ? nlohmann::ordered_json(*d) : nlohmann::ordered_json(nullptr);
      else if (auto n = std::get_if<std::int64_t>(&c)) slot = *n;
      else slot = std::get<std::string>(c);
    }
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  if (!t.meta.empty()) j["meta"] = t.meta;
  return j;
}

/// "Groups Name Variance Std.Dev." layout: one row per random factor, then
/// the residual.
inline ReportTable variance_table(const FittedLMM& f) {
  ReportTable t{"random_effects", {"Groups", "Name", "Variance", "Std.Dev."}, {}, {}};
  for (const auto& c : f.vc.factors) t.rows.push_back({c.factor, std::string("(Intercept)"), c.sigma2, c.sd()});
  t.rows.push_back({std::string("Residual"), std::string(""), f.vc.sigma2_eps, std::sqrt(f.vc.sigma2_eps)});
  t.meta["criterion"] = to_string(f.criterion);
  t.meta["logLik"] = f.loglik;
  t.meta["AIC"] = aic(f);
  t.meta["npar"] = f.npar;
  t.meta["converged"] = f.converged;
  t.meta["deviance_evals"] = f.deviance_profile_evals;
  return t;
}

inline ReportTable fixed_effects_table(const FittedLMM& f) {
  ReportTable t{"fixed_effects", {"term", "Estimate", "Std. Error"}, {}, {}};
  for (Eigen::Index i = 0; i < f.beta.size(); ++i) {
    const auto name = static_cast<std::size_t>(i) < f.column_map.size() ? f.column_map[static_cast<std::size_t>(i)]
                                                                         : std::to_string(i);
    t.rows.push_back({name, f.beta(i), std::sqrt(f.vcov_beta(i, i))});
  }
  return t;
}

inline ReportTable ranova_table(const RanovaResult& r) {
  ReportTable t{"ranova", {"term", "npar", "logLik", "AIC", "LRT", "Df", "Pr(>Chisq)"}, {}, {}};
  for (const auto& row : r.rows)
    t.rows.push_back({row.factor, std::int64_t{row.npar}, row.loglik, row.aic, row.lrt_stat, std::int64_t{row.df},
                      cell(row.p_value)});
  t.meta["full_model"] = {{"npar", r.npar_full}, {"logLik", r.loglik_full}, {"AIC", r.aic_full},
                          {"converged", r.full_converged}};
  return t;
}

inline ReportTable anova_table(const AnovaRow& a) {
  ReportTable t{"anova", {"term", "Sum Sq", "Mean Sq", "NumDF", "DenDF", "F value", "Pr(>F)"}, {}, {}};
  t.rows.push_back({a.term, a.sum_sq, a.mean_sq, std::int64_t{a.num_df}, cell(a.den_df), a.f_value, cell(a.p_value)});
  return t;
}

inline ReportTable contrasts_table(const std::vector<ContrastRow>& rows, double level) {
  ReportTable t{"contrasts", {"contrast", "Estimate", "Std. Error", "lower", "upper", "Pr(>|t|)", "df", "t value"}, {}, {}};
  for (const auto& r : rows)
    t.rows.push_back({r.label, r.estimate, r.std_error, r.lower, r.upper, r.p_value, r.df, r.t_value});
  t.meta["confidence"] = level;
  return t;
}

inline ReportTable boxplot_table(const std::vector<BoxplotRow>& rows) {
  ReportTable t{"boxplot", {"model", "optimizer", "hparams", "seed", "min", "q1", "median", "q3", "max", "n"}, {}, {}};
  for (const auto& r : rows)
    t.rows.push_back({r.model, r.optimizer, r.hparam_config, r.seed, r.min, r.q1, r.median, r.q3, r.max,
                      static_cast<std::int64_t>(r.n)});
  return t;
}

inline ReportTable hyperparams_table(const std::vector<HyperparamConfig>& configs, int index_width = 0) {
  ReportTable t{"hyperparams", {"config"}, {}, {}};
  if (!configs.empty())
    for (const auto& [k, v] : configs.front()) t.columns.push_back(k);
  const int n = static_cast<int>(configs.size());
  for (int i = 0; i < n; ++i) {
    std::vector<Cell> row{detail::indexed_label('c', i, index_width > 0 ? index_width : n)};
    for (const auto& [k, v] : configs[static_cast<std::size_t>(i)]) row.emplace_back(v);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace lmmvar
