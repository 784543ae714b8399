#pragma once

// Test-only fixtures and oracles. Nothing here calls into the estimation
// path it is used to check.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lmmvar/lmmvar.hpp"

namespace fixtures {

using lmmvar::Dataset;
using lmmvar::ExperimentRecord;

inline std::string lab(const char* prefix, int i) { return std::string(prefix) + std::to_string(10 + i); }

inline Eigen::VectorXd response(const Dataset& d) {
  const auto ys = d.metrics();
  return Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
}

/// 30 observations, fixed "model" with 2 levels, one random factor "seed"
/// with 5 levels (6 observations each), unequal spread.
inline Dataset fixture_a() {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> seed_eff(5);
  for (auto& b : seed_eff) b = 0.8 * z(rng);
  std::vector<ExperimentRecord> recs;
  for (int i = 0; i < 30; ++i) {
    const int s = i % 5, m = (i / 5) % 2;
    recs.push_back({lab("m", m), "sgd", lab("s", s), "c10", lab("r", i), 3.0 + 0.5 * m + seed_eff[static_cast<std::size_t>(s)] + z(rng)});
  }
  return Dataset::from_records(std::move(recs));
}

/// 60 observations, fixed "model" with 3 levels, crossed "seed" (4 levels)
/// and "hparams" (5 levels) assigned pseudo-randomly (unbalanced).
inline Dataset fixture_b() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> pick_s(0, 3), pick_c(0, 4);
  std::vector<double> se(4), ce(5);
  for (auto& b : se) b = 0.6 * z(rng);
  for (auto& b : ce) b = 1.2 * z(rng);
  std::vector<ExperimentRecord> recs;
  for (int i = 0; i < 60; ++i) {
    const int m = i % 3;
    const int s = i < 4 ? i : pick_s(rng);
    const int c = i < 5 ? i : pick_c(rng);
    recs.push_back({lab("m", m), "adam", lab("s", s), lab("c", c), lab("r", i),
                    10.0 - 1.0 * m + se[static_cast<std::size_t>(s)] + ce[static_cast<std::size_t>(c)] + 0.7 * z(rng)});
  }
  return Dataset::from_records(std::move(recs));
}

/// 48 observations, 2 fixed levels, crossed seed (6) x hparams (4) with two
/// replicates per cell, weak seed effect.
inline Dataset fixture_c() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> se(6), ce(4);
  for (auto& b : se) b = 0.3 * z(rng);
  for (auto& b : ce) b = 0.9 * z(rng);
  std::vector<ExperimentRecord> recs;
  int i = 0;
  for (int s = 0; s < 6; ++s)
    for (int c = 0; c < 4; ++c)
      for (int r = 0; r < 2; ++r, ++i)
        recs.push_back({lab("m", (s + c + r) % 2), "sgd", lab("s", s), lab("c", c), lab("r", r),
                        -2.0 + 0.4 * ((s + c + r) % 2) + se[static_cast<std::size_t>(s)] + ce[static_cast<std::size_t>(c)] + 0.5 * z(rng)});
  return Dataset::from_records(std::move(recs));
}

/// Balanced one-way layout: J groups ("seed") of n, intercept-only fixed part
/// (every record has model "m10").
inline Dataset balanced_one_way(int J, int n, double sigma_b, double sigma_e, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<ExperimentRecord> recs;
  for (int j = 0; j < J; ++j) {
    const double b = sigma_b * z(rng);
    for (int k = 0; k < n; ++k) recs.push_back({"m10", "sgd", lab("s", j), "c10", lab("r", k), 5.0 + b + sigma_e * z(rng)});
  }
  return Dataset::from_records(std::move(recs));
}

inline lmmvar::ModelSpec spec_model_only(std::vector<std::string> random) {
  lmmvar::ModelSpec spec;
  spec.fixed_factor = "model";
  spec.random_factors = std::move(random);
  return spec;
}

/// Dense REML deviance: V0 = Z Gamma Z' + I formed explicitly.
inline double dense_reml_deviance(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z, const std::vector<int>& block_of_col,
                                  const Eigen::VectorXd& y, const Eigen::VectorXd& theta) {
  const Eigen::Index n = X.rows(), p = X.cols();
  Eigen::VectorXd g(Z.cols());
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    const double t = theta(block_of_col[static_cast<std::size_t>(j)]);
    g(j) = t * t;
  }
  const Eigen::MatrixXd V = Z * g.asDiagonal() * Z.transpose() + Eigen::MatrixXd::Identity(n, n);
  Eigen::LDLT<Eigen::MatrixXd> vl(V);
  const Eigen::MatrixXd ViX = vl.solve(X);
  const Eigen::VectorXd Viy = vl.solve(y);
  const Eigen::MatrixXd XtViX = X.transpose() * ViX;
  const Eigen::VectorXd beta = XtViX.ldlt().solve(X.transpose() * Viy);
  const Eigen::VectorXd r = y - X * beta;
  const double s2 = r.dot(vl.solve(r)) / static_cast<double>(n - p);
  const double logdet_v = vl.vectorD().array().log().sum();
  const double logdet_x = XtViX.ldlt().vectorD().array().log().sum();
  return logdet_v + logdet_x + static_cast<double>(n - p) * (1.0 + std::log(2.0 * std::numbers::pi * s2));
}

inline std::vector<int> block_of_columns(const lmmvar::DesignMatrices& dm) {
  std::vector<int> out;
  for (std::size_t k = 0; k < dm.z_blocks.size(); ++k)
    for (Eigen::Index j = 0; j < dm.z_blocks[k].size; ++j) out.push_back(static_cast<int>(k));
  return out;
}

/// Minimum of the REML deviance over a per-dimension grid on [0, hi].
inline double grid_min_reml(const lmmvar::DesignMatrices& dm, const Eigen::VectorXd& y, int per_dim, double hi) {
  lmmvar::MixedModelProblem prob(dm, y);
  const auto k = static_cast<Eigen::Index>(dm.z_blocks.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<std::size_t>(k), 0);
  for (;;) {
    Eigen::VectorXd th(k);
    for (Eigen::Index j = 0; j < k; ++j) th(j) = hi * idx[static_cast<std::size_t>(j)] / (per_dim - 1);
    best = std::min(best, prob.deviance(th, lmmvar::Criterion::REML));
    Eigen::Index j = 0;
    while (j < k && ++idx[static_cast<std::size_t>(j)] == per_dim) idx[static_cast<std::size_t>(j++)] = 0;
    if (j == k) break;
  }
  return best;
}

/// Two independent normal samples with their own variances, expressed as a
/// variance-parameter model: omega = (sigma1^2, sigma2^2), the estimand is
/// the difference of means, and the deviance is the sum of the two groups'
/// REML deviances. This is exactly Welch's setting.
struct TwoGroupHeteroscedastic {
  std::vector<double> g1, g2;

  static double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }
  static double var(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  }

  Eigen::VectorXd omega_hat() const { return Eigen::Vector2d(var(g1), var(g2)); }

  // Fixed effects (mu1, mu2).
  Eigen::MatrixXd vcov(const Eigen::VectorXd& w) const {
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(2, 2);
    v(0, 0) = w(0) / static_cast<double>(g1.size());
    v(1, 1) = w(1) / static_cast<double>(g2.size());
    return v;
  }

  double deviance(const Eigen::VectorXd& w) const {
    auto group = [](const std::vector<double>& v, double s2) {
      const double n = static_cast<double>(v.size());
      const double m = mean(v);
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      // -2 restricted log-likelihood of one normal sample with known-form mean
      return (n - 1.0) * std::log(2.0 * std::numbers::pi * s2) + std::log(n) + ss / s2;
    };
    return group(g1, w(0)) + group(g2, w(1));
  }
};

inline double welch_df(const std::vector<double>& a, const std::vector<double>& b) {
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double v1 = TwoGroupHeteroscedastic::var(a) / n1, v2 = TwoGroupHeteroscedastic::var(b) / n2;
  return (v1 + v2) * (v1 + v2) / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
}

inline TwoGroupHeteroscedastic welch_fixture() {
  std::mt19937_64 rng(404);
  std::normal_distribution<double> z(0.0, 1.0);
  TwoGroupHeteroscedastic m;
  for (int i = 0; i < 9; ++i) m.g1.push_back(1.0 + 0.5 * z(rng));
  for (int i = 0; i < 23; ++i) m.g2.push_back(1.4 + 2.0 * z(rng));
  return m;
}

/// Balanced one-way ANOVA mean squares (between, within).
inline std::pair<double, double> one_way_mean_squares(const Dataset& d, const std::string& factor) {
  const auto& f = d.factor(factor);
  const auto J = f.levels.size();
  std::vector<double> sum(J, 0.0);
  std::vector<int> cnt(J, 0);
  double grand = 0.0;
  for (std::size_t i = 0; i < d.n(); ++i) {
    sum[static_cast<std::size_t>(f.codes[i])] += d.records()[i].metric;
    ++cnt[static_cast<std::size_t>(f.codes[i])];
    grand += d.records()[i].metric;
  }
  grand /= static_cast<double>(d.n());
  double ssb = 0.0, ssw = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    const double m = sum[j] / cnt[j];
    ssb += cnt[j] * (m - grand) * (m - grand);
  }
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto j = static_cast<std::size_t>(f.codes[i]);
    const double m = sum[j] / cnt[j];
    ssw += (d.records()[i].metric - m) * (d.records()[i].metric - m);
  }
  return {ssb / static_cast<double>(J - 1), ssw / static_cast<double>(d.n() - J)};
}

}  // namespace fixtures
