#pragma once

// Test battery on a fitted mixed model: likelihood-ratio tests per random
// effect, F test of the fixed term with Satterthwaite denominator df, and
// contrast estimates with t-based confidence intervals.

#include <Eigen/Dense>

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lmmvar/design.hpp"
#include "lmmvar/distributions.hpp"
#include "lmmvar/lmm.hpp"
#include "lmmvar/satterthwaite.hpp"

namespace lmmvar {

/// One random-effect LRT. npar/loglik/aic describe the model with the factor
/// removed; the *_full fields the model with every factor.
struct LRTRow {
  std::string factor;
  int npar = 0;
  double loglik = 0.0;
  double aic = 0.0;
  int npar_full = 0;
  double loglik_full = 0.0;
  double lrt_stat = 0.0;
  int df = 0;
  std::optional<double> p_value;
  bool converged = true;
  bool clamped = false;  // raw statistic was negative and set to 0
};

struct AnovaRow {
  std::string term;
  double sum_sq = 0.0;
  double mean_sq = 0.0;
  int num_df = 0;
  std::optional<double> den_df;
  double f_value = 0.0;
  std::optional<double> p_value;
};

struct ContrastRow {
  std::string label;
  double estimate = 0.0;
  double std_error = 0.0;
  double df = 0.0;
  double t_value = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double p_value = 1.0;
};

struct RanovaOptions {
  Criterion criterion = Criterion::REML;
  bool boundary_correction = false;
  FitOptions fit;
};

struct RanovaResult {
  int npar_full = 0;
  double loglik_full = 0.0;
  double aic_full = 0.0;
  bool full_converged = true;
  std::vector<LRTRow> rows;
};

/// Upper-tail p-value of an LRT statistic. With the boundary correction the
/// reference is the 50:50 mixture of chi2(df - 1) and chi2(df).
inline double lrt_p_value(double stat, int df, bool boundary_correction) {
  if (!boundary_correction) return chisq_sf(stat, df);
  if (stat <= 0.0) return 1.0;
  const double lower = df > 1 ? chisq_sf(stat, df - 1) : 0.0;
  return 0.5 * lower + 0.5 * chisq_sf(stat, df);
}

inline LRTRow lrt_row(const std::string& factor, const FittedLMM& full, const FittedLMM& reduced,
                      bool boundary_correction) {
  LRTRow row;
  row.factor = factor;
  row.npar = reduced.npar;
  row.loglik = reduced.loglik;
  row.aic = aic(reduced);
  row.npar_full = full.npar;
  row.loglik_full = full.loglik;
  row.df = full.npar - reduced.npar;
  const double raw = 2.0 * (full.loglik - reduced.loglik);
  row.clamped = raw < 0.0;
  row.lrt_stat = row.clamped ? 0.0 : raw;
  row.converged = full.converged && reduced.converged;
  if (row.converged) row.p_value = lrt_p_value(row.lrt_stat, row.df, boundary_correction);
  return row;
}

inline RanovaResult ranova(const DesignMatrices& dm, const Eigen::VectorXd& y, const RanovaOptions& opts = {}) {
  if (dm.z_blocks.empty()) throw InsufficientDataError("model has no random factor to test");
  const FittedLMM full = fit_lmm(dm, y, opts.criterion, opts.fit);
  RanovaResult res;
  res.npar_full = full.npar;
  res.loglik_full = full.loglik;
  res.aic_full = aic(full);
  res.full_converged = full.converged;
  for (const auto& blk : dm.z_blocks) {
    const FittedLMM reduced = fit_lmm(without_random_factor(dm, blk.factor), y, opts.criterion, opts.fit);
    auto row = lrt_row("(1 | " + blk.factor + ")", full, reduced, opts.boundary_correction);
    const double raw = 2.0 * (full.loglik - reduced.loglik);
    // Differences at rounding level are not worth a notice.
    if (row.clamped && raw < -1e-8 * std::max(1.0, std::fabs(full.loglik)))
      std::clog << "lmmvar: negative LRT statistic " << raw << " for " << row.factor
                << " clamped to 0\n";
    res.rows.push_back(std::move(row));
  }
  return res;
}

inline RanovaResult ranova(const Dataset& d, const ModelSpec& spec, const RanovaOptions& opts = {}) {
  const auto dm = build_design(d, spec);
  const auto ys = d.metrics();
  return ranova(dm, Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size())), opts);
}

/// F test of H0: L beta = 0 with the multi-dimensional Satterthwaite
/// denominator df.
inline AnovaRow anova_fixed(const FittedLMM& f, const Eigen::MatrixXd& L, const std::string& term = "term") {
  const Eigen::Index k = L.rows();
  if (k == 0 || L.cols() != f.p()) throw DomainError("hypothesis matrix has the wrong shape");
  const auto engine = make_satterthwaite(f);

  const Eigen::MatrixXd lvl = L * f.vcov_beta * L.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (lvl + lvl.transpose()));
  const Eigen::VectorXd& d = eig.eigenvalues();
  if (d.minCoeff() <= 1e-12 * std::max(d.maxCoeff(), 0.0))
    throw RankDeficientError("hypothesis matrix for '" + term + "' is rank deficient");

  // Rotated contrasts P' L are uncorrelated with variances d_i.
  const Eigen::MatrixXd pl = eig.eigenvectors().transpose() * L;
  const Eigen::VectorXd est = pl * f.beta;
  const double f_value = (est.array().square() / d.array()).sum() / static_cast<double>(k);

  AnovaRow row;
  row.term = term;
  row.num_df = static_cast<int>(k);
  row.f_value = f_value;
  row.sum_sq = static_cast<double>(k) * f_value * f.vc.sigma2_eps;
  row.mean_sq = row.sum_sq / static_cast<double>(k);

  if (k == 1) {
    row.den_df = engine.df(pl.row(0));
  } else {
    double e = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double nu = engine.raw_df(pl.row(i));
      if (nu > 2.0) e += std::isinf(nu) ? 1.0 : nu / (nu - 2.0);
    }
    if (e > static_cast<double>(k)) row.den_df = engine.cap(2.0 * e / (e - static_cast<double>(k)));
  }
  if (row.den_df) row.p_value = f_sf(f_value, static_cast<double>(k), *row.den_df);
  return row;
}

inline AnovaRow anova_fixed(const FittedLMM& f, const DesignMatrices& dm) {
  return anova_fixed(f, term_hypothesis(dm).L, dm.fixed_factor);
}

/// Estimates, standard errors, Satterthwaite df, two-sided p-values and
/// confidence intervals for each row of L.
inline std::vector<ContrastRow> contrasts(const FittedLMM& f, const ContrastMatrix& cm, double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  if (cm.L.cols() != f.p()) throw DomainError("contrast matrix has the wrong number of columns");
  std::optional<Satterthwaite<LmmVarianceModel>> engine;
  std::vector<ContrastRow> rows;
  for (Eigen::Index i = 0; i < cm.L.rows(); ++i) {
    const Eigen::RowVectorXd c = cm.L.row(i);
    ContrastRow r;
    r.label = i < static_cast<Eigen::Index>(cm.labels.size()) ? cm.labels[static_cast<std::size_t>(i)] : std::to_string(i);
    if (c.cwiseAbs().maxCoeff() == 0.0) {
      r.df = static_cast<double>(f.n() - f.p());
      rows.push_back(r);
      continue;
    }
    if (!engine) engine.emplace(make_satterthwaite(f));
    r.estimate = c.dot(f.beta);
    r.std_error = std::sqrt(std::max((c * f.vcov_beta * c.transpose())(0, 0), 0.0));
    r.df = engine->df(c);
    r.t_value = r.estimate / r.std_error;
    r.p_value = t_two_sided(r.t_value, r.df);
    const double tcrit = t_quantile(0.5 + 0.5 * level, r.df);
    r.lower = r.estimate - tcrit * r.std_error;
    r.upper = r.estimate + tcrit * r.std_error;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace lmmvar
