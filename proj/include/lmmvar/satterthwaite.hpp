#pragma once

// Satterthwaite degrees of freedom for linear functions of fixed effects.
//
// For a contrast c with variance v(omega) = c' V(omega) c, where V(omega) is
// the covariance of beta-hat as a function of the variance parameters omega,
//
//   df = 2 v^2 / (g' A g),   g = grad_omega v,   A = 2 H^-1,
//
// with H the Hessian of the deviance (-2 log-likelihood) in omega at the
// estimate. Both g and H come from central finite differences at steps h
// and 2h combined by Richardson extrapolation, which removes the O(h^2)
// term and lets the step be large enough to stay clear of rounding noise.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <vector>

#include "lmmvar/errors.hpp"
#include "lmmvar/lmm.hpp"

namespace lmmvar {

/// Anything with variance parameters, a covariance of the fixed effects as a
/// function of them, and a deviance to curve around the estimate.
template <typename M>
concept VarianceParameterModel = requires(const M& m, const Eigen::VectorXd& w) {
  { m.omega_hat() } -> std::convertible_to<Eigen::VectorXd>;
  { m.vcov(w) } -> std::convertible_to<Eigen::MatrixXd>;
  { m.deviance(w) } -> std::convertible_to<double>;
};

struct SatterthwaiteOptions {
  double rel_step = 1e-2;
  double floor = 1e-8;  // relative to the largest variance parameter
  std::optional<double> df_cap;
  std::vector<bool> active;  // empty: every parameter varies
};

template <VarianceParameterModel Model>
class Satterthwaite {
 public:
  explicit Satterthwaite(const Model& model, SatterthwaiteOptions opts = {}) : opts_(std::move(opts)) {
    omega_ = model.omega_hat();
    const Eigen::Index m = omega_.size();
    if (opts_.active.empty()) opts_.active.assign(static_cast<std::size_t>(m), true);
    for (Eigen::Index i = 0; i < m; ++i)
      if (opts_.active[static_cast<std::size_t>(i)]) idx_.push_back(i);
    const auto k = static_cast<Eigen::Index>(idx_.size());
    if (k == 0) throw DomainError("no variance parameters to differentiate");

    const double scale = omega_.cwiseAbs().maxCoeff();
    step_.resize(k);
    for (Eigen::Index a = 0; a < k; ++a)
      step_(a) = std::max(opts_.rel_step * std::fabs(omega_(idx_[static_cast<std::size_t>(a)])), opts_.floor * scale);

    vcov_ = model.vcov(omega_);
    auto shifted = [&](double m, Eigen::Index a, double sa, Eigen::Index b = -1, double sb = 0.0) {
      Eigen::VectorXd w = omega_;
      w(idx_[static_cast<std::size_t>(a)]) += m * sa * step_(a);
      if (b >= 0) w(idx_[static_cast<std::size_t>(b)]) += m * sb * step_(b);
      return w;
    };
    auto richardson = [](const auto& d1, const auto& d2) { return (4.0 * d1 - d2) / 3.0; };

    dvcov_.reserve(static_cast<std::size_t>(k));
    for (Eigen::Index a = 0; a < k; ++a) {
      auto central = [&](double m) -> Eigen::MatrixXd {
        return (model.vcov(shifted(m, a, 1.0)) - model.vcov(shifted(m, a, -1.0))) / (2.0 * m * step_(a));
      };
      dvcov_.push_back(richardson(central(1.0), central(2.0)));
    }

    const double f0 = model.deviance(omega_);
    auto second = [&](double m, Eigen::Index a, Eigen::Index b) {
      if (a == b)
        return (model.deviance(shifted(m, a, 1.0)) - 2.0 * f0 + model.deviance(shifted(m, a, -1.0))) /
               (m * m * step_(a) * step_(a));
      const double fpp = model.deviance(shifted(m, a, 1.0, b, 1.0));
      const double fpm = model.deviance(shifted(m, a, 1.0, b, -1.0));
      const double fmp = model.deviance(shifted(m, a, -1.0, b, 1.0));
      const double fmm = model.deviance(shifted(m, a, -1.0, b, -1.0));
      return (fpp - fpm - fmp + fmm) / (4.0 * m * m * step_(a) * step_(b));
    };
    Eigen::MatrixXd h(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b <= a; ++b) h(a, b) = h(b, a) = richardson(second(1.0, a, b), second(2.0, a, b));
    hessian_ = h;
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success || (h.diagonal().array() <= 0.0).any())
      throw BoundaryEstimateError(
          "deviance Hessian in the variance parameters is not positive definite; "
          "an estimate is likely on the boundary (some variance = 0)");
    acov_ = 2.0 * llt.solve(Eigen::MatrixXd::Identity(k, k));
  }

  const Eigen::MatrixXd& vcov() const { return vcov_; }
  const Eigen::MatrixXd& hessian() const { return hessian_; }
  const Eigen::MatrixXd& acov() const { return acov_; }

  double variance(const Eigen::RowVectorXd& c) const { return (c * vcov_ * c.transpose())(0, 0); }

  Eigen::VectorXd gradient(const Eigen::RowVectorXd& c) const {
    Eigen::VectorXd g(static_cast<Eigen::Index>(dvcov_.size()));
    for (std::size_t a = 0; a < dvcov_.size(); ++a)
      g(static_cast<Eigen::Index>(a)) = (c * dvcov_[a] * c.transpose())(0, 0);
    return g;
  }

  /// Uncapped 1-df Satterthwaite value; +inf if the variance does not depend
  /// on the estimated parameters.
  double raw_df(const Eigen::RowVectorXd& c) const {
    if (c.cwiseAbs().maxCoeff() == 0.0) throw DomainError("Satterthwaite df is undefined for a zero contrast");
    const double v = variance(c);
    const Eigen::VectorXd g = gradient(c);
    const double denom = g.dot(acov_ * g);
    if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
    return 2.0 * v * v / denom;
  }

  double df(const Eigen::RowVectorXd& c) const { return cap(raw_df(c)); }

  double cap(double df) const { return opts_.df_cap ? std::min(df, *opts_.df_cap) : df; }

 private:
  SatterthwaiteOptions opts_;
  Eigen::VectorXd omega_;
  std::vector<Eigen::Index> idx_;
  Eigen::VectorXd step_;
  Eigen::MatrixXd vcov_;
  std::vector<Eigen::MatrixXd> dvcov_;
  Eigen::MatrixXd hessian_;
  Eigen::MatrixXd acov_;
};

/// Adapts a fitted mixed model to the Satterthwaite engine.
class LmmVarianceModel {
 public:
  explicit LmmVarianceModel(const FittedLMM& f) : fit_(&f) {}
  Eigen::VectorXd omega_hat() const { return fit_->omega(); }
  Eigen::MatrixXd vcov(const Eigen::VectorXd& w) const { return fit_->problem->eval_omega(w, fit_->criterion).vcov; }
  double deviance(const Eigen::VectorXd& w) const { return fit_->problem->eval_omega(w, fit_->criterion).deviance; }

 private:
  const FittedLMM* fit_;
};

/// Relative standard deviation below which a variance component is treated
/// as sitting on the zero boundary and held fixed when differentiating.
inline constexpr double kBoundaryTheta = 1e-4;

inline Satterthwaite<LmmVarianceModel> make_satterthwaite(const FittedLMM& f, SatterthwaiteOptions opts = {}) {
  if (!f.problem) throw DomainError("fitted model carries no problem data");
  if (opts.active.empty()) {
    for (const auto& c : f.vc.factors) opts.active.push_back(c.theta >= kBoundaryTheta);
    opts.active.push_back(true);
  }
  if (!opts.df_cap) opts.df_cap = static_cast<double>(f.n() - f.p());
  return Satterthwaite<LmmVarianceModel>(LmmVarianceModel(f), std::move(opts));
}

inline double satterthwaite_df(const FittedLMM& f, const Eigen::RowVectorXd& c) {
  if (c.cwiseAbs().maxCoeff() == 0.0) throw DomainError("Satterthwaite df is undefined for a zero contrast");
  return make_satterthwaite(f).df(c);
}

}  // namespace lmmvar
