#pragma once

// Linear mixed model with crossed random intercepts,
//
//   y = X beta + Z b + eps,   b_q ~ N(0, sigma2_q I),   eps ~ N(0, sigma2_eps W^-1),
//
// fit by profiling the (restricted) deviance over the relative standard
// deviations theta_q = sigma_q / sigma_eps. Each evaluation solves the
// penalized least-squares system
//
//   [ L' Z'WZ L + I   L' Z'WX ] [u   ]   [L' Z'Wy]
//   [ X'WZ L          X'WX    ] [beta] = [X'Wy   ]
//
// by a blocked Cholesky factorization, with L = diag(theta) expanded over the
// factor blocks. V0 = Z Gamma Z' + W^-1 is never formed.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "lmmvar/design.hpp"
#include "lmmvar/errors.hpp"
#include "lmmvar/optimize.hpp"

namespace lmmvar {

enum class Criterion { REML, ML };

inline const char* to_string(Criterion c) { return c == Criterion::REML ? "REML" : "ML"; }

struct FitOptions {
  double tol = 1e-8;                         // on deviance change
  int max_evals_per_dim = 500;
  std::vector<double> multistart = {0.1, 1.0, 10.0};
  Eigen::VectorXd weights;                   // known precision weights; empty means 1
};

struct OLSFit {
  Eigen::VectorXd beta;
  double rss = 0.0;
  double sigma2 = 0.0;      // RSS / (N - p)
  double sigma2_ml = 0.0;   // RSS / N
  double loglik = 0.0;      // Gaussian log-likelihood at sigma2_ml
  Eigen::MatrixXd vcov_beta;
  Eigen::VectorXd residuals;
  bool degenerate = false;  // y lies in the column span of X
};

inline OLSFit fit_ols(const DesignMatrices& dm, const Eigen::VectorXd& y) {
  const Eigen::Index n = dm.n(), p = dm.p();
  if (y.size() != n) throw InsufficientDataError("response length does not match the design");
  if (n <= p)
    throw InsufficientDataError("need more observations (" + std::to_string(n) + ") than fixed effects (" +
                                std::to_string(p) + ")");
  OLSFit fit;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dm.X);
  fit.beta = qr.solve(y);
  fit.residuals = y - dm.X * fit.beta;
  fit.rss = fit.residuals.squaredNorm();
  fit.degenerate = fit.rss <= 1e-20 * std::max(y.squaredNorm(), 1e-300);
  if (fit.degenerate) fit.rss = 0.0;
  fit.sigma2 = fit.rss / static_cast<double>(n - p);
  fit.sigma2_ml = fit.rss / static_cast<double>(n);
  fit.loglik = fit.degenerate ? std::numeric_limits<double>::infinity()
                              : -0.5 * static_cast<double>(n) *
                                    (std::log(2.0 * std::numbers::pi * fit.sigma2_ml) + 1.0);
  fit.vcov_beta = fit.sigma2 * (dm.X.transpose() * dm.X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  return fit;
}

/// Cross-products of one (design, response, weights) triple, shared by every
/// deviance evaluation. The response is stored after removing its OLS fit,
/// which leaves the REML/ML criteria unchanged and avoids cancellation.
class MixedModelProblem {
 public:
  struct Solution {
    Eigen::VectorXd beta;      // fixed effects
    Eigen::VectorXd u;         // spherical random effects
    Eigen::VectorXd b;         // conditional modes, Lambda u
    double pwrss = 0.0;        // penalized weighted residual sum of squares
    double ld_l2 = 0.0;        // log|L' Z'WZ L + I| = log|V0| + sum log w
    double ld_rx2 = 0.0;       // log|X' V0^-1 X|
    Eigen::MatrixXd xtvx_inv;  // (X' V0^-1 X)^-1
  };

  MixedModelProblem(const DesignMatrices& dm, const Eigen::VectorXd& y, const Eigen::VectorXd& weights = {})
      : n_(dm.n()), p_(dm.p()), q_(dm.Q()) {
    if (y.size() != n_) throw InsufficientDataError("response length does not match the design");
    if (n_ <= p_)
      throw InsufficientDataError("need more observations (" + std::to_string(n_) + ") than fixed effects (" +
                                  std::to_string(p_) + ")");
    if (weights.size() != 0 && (weights.size() != n_ || (weights.array() <= 0.0).any() || !weights.allFinite()))
      throw DomainError("weights must be positive, finite and one per observation");

    // Observations are processed in a canonical order so that every
    // accumulated sum, and hence every estimate, is bitwise independent of
    // the input row order.
    const auto order = canonical_order(dm, y, weights);
    Eigen::MatrixXd x(n_, p_);
    Eigen::VectorXd ys(n_);
    sw_ = Eigen::VectorXd::Ones(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const auto src = order[static_cast<std::size_t>(i)];
      x.row(i) = dm.X.row(src);
      ys(i) = y(src);
      if (weights.size() != 0) {
        sw_(i) = std::sqrt(weights(src));
        sum_log_w_ += std::log(weights(src));
      }
    }
    xw_ = sw_.asDiagonal() * x;
    const Eigen::VectorXd yw = sw_.cwiseProduct(ys);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw_);
    beta0_ = qr.solve(yw);
    yc_ = yw - xw_ * beta0_;
    if (yc_.squaredNorm() <= 1e-20 * std::max(yw.squaredNorm(), 1e-300))
      throw DegenerateVarianceError("response is constant within the fixed-effects structure; no variance to decompose");

    for (const auto& blk : dm.z_blocks) {
      blocks_.push_back({blk.factor, blk.offset, blk.size});
      Eigen::VectorXi cols(n_);
      for (Eigen::Index i = 0; i < n_; ++i)
        cols(i) = static_cast<int>(blk.offset) + blk.codes[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      col_.push_back(std::move(cols));
    }

    xtx_ = xw_.transpose() * xw_;
    xty_ = xw_.transpose() * yc_;
    yty_ = yc_.squaredNorm();
    ztz_.setZero(q_, q_);
    ztx_.setZero(q_, p_);
    zty_.setZero(q_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double w = sw_(i) * sw_(i);
      for (std::size_t a = 0; a < col_.size(); ++a) {
        const int ca = col_[a](i);
        for (std::size_t c = 0; c < col_.size(); ++c) ztz_(ca, col_[c](i)) += w;
        ztx_.row(ca) += sw_(i) * xw_.row(i);
        zty_(ca) += sw_(i) * yc_(i);
      }
    }
  }

  Eigen::Index n() const { return n_; }
  Eigen::Index p() const { return p_; }
  Eigen::Index Q() const { return q_; }
  std::size_t n_factors() const { return blocks_.size(); }
  const std::string& factor_name(std::size_t k) const { return blocks_[k].name; }

  /// Expands per-factor values over the Q columns of Z.
  Eigen::VectorXd expand(const Eigen::VectorXd& per_factor) const {
    Eigen::VectorXd out(q_);
    for (std::size_t k = 0; k < blocks_.size(); ++k)
      out.segment(blocks_[k].offset, blocks_[k].size).setConstant(per_factor(static_cast<Eigen::Index>(k)));
    return out;
  }

  Solution solve(const Eigen::VectorXd& theta) const {
    check_theta(theta);
    Solution s;
    const Eigen::VectorXd lam = expand(theta);

    Eigen::MatrixXd a = lam.asDiagonal() * ztz_ * lam.asDiagonal();
    a.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> lz(a);
    if (lz.info() != Eigen::Success) throw StatsError("Cholesky factorization of the random-effects block failed");
    const auto Lz = lz.matrixL();

    const Eigen::VectorXd cu = Lz.solve(lam.cwiseProduct(zty_));
    const Eigen::MatrixXd rzx = Lz.solve(lam.asDiagonal() * ztx_);
    const Eigen::MatrixXd xtvx = xtx_ - rzx.transpose() * rzx;
    Eigen::LLT<Eigen::MatrixXd> lx(xtvx);
    if (lx.info() != Eigen::Success) throw StatsError("Cholesky factorization of the fixed-effects block failed");

    const Eigen::VectorXd beta_c = lx.solve(xty_ - rzx.transpose() * cu);
    s.u = Lz.transpose().solve(cu - rzx * beta_c);
    s.b = lam.cwiseProduct(s.u);
    s.beta = beta0_ + beta_c;

    Eigen::VectorXd r = yc_ - xw_ * beta_c;
    for (const auto& cols : col_)
      for (Eigen::Index i = 0; i < n_; ++i) r(i) -= sw_(i) * s.b(cols(i));
    s.pwrss = r.squaredNorm() + s.u.squaredNorm();

    s.ld_l2 = 2.0 * lz.matrixLLT().diagonal().array().log().sum();
    s.ld_rx2 = 2.0 * lx.matrixLLT().diagonal().array().log().sum();
    s.xtvx_inv = lx.solve(Eigen::MatrixXd::Identity(p_, p_));
    return s;
  }

  /// -2 log-likelihood (restricted or full) profiled over beta and sigma2_eps.
  double deviance(const Eigen::VectorXd& theta, Criterion crit) const { return deviance_of(solve(theta), crit); }

  double deviance_of(const Solution& s, Criterion crit) const {
    const double two_pi = 2.0 * std::numbers::pi;
    if (!(s.pwrss > 0.0) || !std::isfinite(s.pwrss)) throw StatsError("non-finite penalized residual sum of squares");
    double dev;
    if (crit == Criterion::REML) {
      const double nmp = static_cast<double>(n_ - p_);
      dev = s.ld_l2 + s.ld_rx2 + nmp * (1.0 + std::log(two_pi * s.pwrss / nmp));
    } else {
      const double nn = static_cast<double>(n_);
      dev = s.ld_l2 + nn * (1.0 + std::log(two_pi * s.pwrss / nn));
    }
    dev -= sum_log_w_;
    if (!std::isfinite(dev)) throw StatsError("deviance evaluation overflowed");
    return dev;
  }

  double sigma2_of(const Solution& s, Criterion crit) const {
    return s.pwrss / static_cast<double>(crit == Criterion::REML ? n_ - p_ : n_);
  }

  // --- absolute variance parameterization --------------------------------
  // omega = (sigma2_1, ..., sigma2_K, sigma2_eps). Valid for slightly negative
  // sigma2_q as long as V stays positive definite, which lets central finite
  // differences straddle a small estimate.

  struct OmegaEval {
    Eigen::MatrixXd vcov;   // (X' V^-1 X)^-1
    double deviance = 0.0;  // -2 log-likelihood (restricted or full), not profiled
  };

  OmegaEval eval_omega(const Eigen::VectorXd& omega, Criterion crit) const {
    const auto k = static_cast<Eigen::Index>(blocks_.size());
    if (omega.size() != k + 1) throw DomainError("variance parameter vector has the wrong length");
    const double s2 = omega(k);
    if (!(s2 > 0.0)) throw DomainError("residual variance must be positive");
    const Eigen::VectorXd d = expand(omega.head(k));

    // V^-1 = s2^-1 (I - Z M^-1 D Z'),  M = s2 I + D Z'Z
    Eigen::MatrixXd m = d.asDiagonal() * ztz_;
    m.diagonal().array() += s2;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    const Eigen::MatrixXd mdzx = lu.solve(d.asDiagonal() * ztx_);
    const Eigen::VectorXd mdzy = lu.solve(d.cwiseProduct(zty_));

    const Eigen::MatrixXd xvx = (xtx_ - ztx_.transpose() * mdzx) / s2;
    const Eigen::VectorXd xvy = (xty_ - ztx_.transpose() * mdzy) / s2;
    const double yvy = (yty_ - zty_.dot(mdzy)) / s2;

    Eigen::LLT<Eigen::MatrixXd> lx(xvx);
    if (lx.info() != Eigen::Success) throw StatsError("X' V^-1 X is not positive definite");
    OmegaEval out;
    out.vcov = lx.solve(Eigen::MatrixXd::Identity(p_, p_));

    double ld_m = 0.0;
    const Eigen::MatrixXd& lum = lu.matrixLU();
    for (Eigen::Index i = 0; i < q_; ++i) ld_m += std::log(std::fabs(lum(i, i)));
    const double nn = static_cast<double>(n_);
    const double log_det_v = nn * std::log(s2) + ld_m - static_cast<double>(q_) * std::log(s2) - sum_log_w_;
    const double quad = yvy - xvy.dot(lx.solve(xvy));
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    if (crit == Criterion::REML) {
      const double ld_x = 2.0 * lx.matrixLLT().diagonal().array().log().sum();
      out.deviance = log_det_v + ld_x + quad + static_cast<double>(n_ - p_) * log_2pi;
    } else {
      out.deviance = log_det_v + quad + nn * log_2pi;
    }
    return out;
  }

 private:
  struct Block {
    std::string name;
    Eigen::Index offset;
    Eigen::Index size;
  };

  static std::vector<Eigen::Index> canonical_order(const DesignMatrices& dm, const Eigen::VectorXd& y,
                                                   const Eigen::VectorXd& weights) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(dm.n()));
    for (Eigen::Index i = 0; i < dm.n(); ++i) order[static_cast<std::size_t>(i)] = i;
    auto less = [&](Eigen::Index a, Eigen::Index b) {
      for (Eigen::Index j = 0; j < dm.p(); ++j)
        if (dm.X(a, j) != dm.X(b, j)) return dm.X(a, j) < dm.X(b, j);
      for (const auto& blk : dm.z_blocks) {
        const int ca = blk.codes[static_cast<std::size_t>(a)], cb = blk.codes[static_cast<std::size_t>(b)];
        if (ca != cb) return ca < cb;
      }
      if (weights.size() != 0 && weights(a) != weights(b)) return weights(a) < weights(b);
      return y(a) < y(b);
    };
    std::stable_sort(order.begin(), order.end(), less);
    return order;
  }

  void check_theta(const Eigen::VectorXd& theta) const {
    if (theta.size() != static_cast<Eigen::Index>(blocks_.size()))
      throw DomainError("theta must have one entry per random factor");
    if ((theta.array() < 0.0).any() || !theta.allFinite()) throw DomainError("theta must be finite and >= 0");
  }

  Eigen::Index n_, p_, q_;
  std::vector<Block> blocks_;
  std::vector<Eigen::VectorXi> col_;
  Eigen::VectorXd sw_;
  double sum_log_w_ = 0.0;
  Eigen::MatrixXd xw_;
  Eigen::VectorXd beta0_, yc_;
  Eigen::MatrixXd xtx_, ztz_, ztx_;
  Eigen::VectorXd xty_, zty_;
  double yty_ = 0.0;
};

struct VarianceComponent {
  std::string factor;
  double sigma2 = 0.0;
  double theta = 0.0;
  double sd() const { return std::sqrt(sigma2); }
};

struct VarianceComponents {
  std::vector<VarianceComponent> factors;
  double sigma2_eps = 0.0;
};

struct FittedLMM {
  Eigen::VectorXd beta;
  VarianceComponents vc;
  Eigen::VectorXd theta;
  Eigen::VectorXd blups;
  double loglik = 0.0;
  double deviance = 0.0;
  Criterion criterion = Criterion::REML;
  Eigen::MatrixXd vcov_beta;
  int npar = 0;
  bool converged = true;
  int deviance_profile_evals = 0;
  std::vector<std::string> column_map;
  std::shared_ptr<const MixedModelProblem> problem;

  /// Variance parameters (sigma2_1, ..., sigma2_K, sigma2_eps).
  Eigen::VectorXd omega() const {
    Eigen::VectorXd w(static_cast<Eigen::Index>(vc.factors.size()) + 1);
    for (std::size_t k = 0; k < vc.factors.size(); ++k) w(static_cast<Eigen::Index>(k)) = vc.factors[k].sigma2;
    w(w.size() - 1) = vc.sigma2_eps;
    return w;
  }
  Eigen::Index n() const { return problem->n(); }
  Eigen::Index p() const { return problem->p(); }
};

inline double aic(int npar, double loglik) { return 2.0 * npar - 2.0 * loglik; }
inline double aic(const FittedLMM& f) { return aic(f.npar, f.loglik); }

inline double reml_deviance(const DesignMatrices& dm, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& weights = {}) {
  return MixedModelProblem(dm, y, weights).deviance(theta, Criterion::REML);
}

inline double ml_deviance(const DesignMatrices& dm, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& weights = {}) {
  return MixedModelProblem(dm, y, weights).deviance(theta, Criterion::ML);
}

namespace detail {

struct ThetaOptimum {
  Eigen::VectorXd theta;
  double deviance;
  int evals;
  bool converged;
};

inline ThetaOptimum optimize_theta(const MixedModelProblem& prob, Criterion crit, const FitOptions& opts) {
  const auto k = static_cast<Eigen::Index>(prob.n_factors());
  ThetaOptimum best{Eigen::VectorXd::Zero(k), 0.0, 0, true};
  if (k == 0) {
    best.deviance = prob.deviance(best.theta, crit);
    best.evals = 1;
    return best;
  }
  const int cap = opts.max_evals_per_dim * static_cast<int>(k);
  auto dev = [&](const Eigen::VectorXd& th) { return prob.deviance(th, crit); };
  best.deviance = dev(best.theta);
  best.evals = 1;
  std::vector<double> starts = opts.multistart.empty() ? std::vector<double>{1.0} : opts.multistart;

  // One-dimensional line search along coordinate j from the point x.
  auto line = [&](Eigen::VectorXd x, Eigen::Index j, double start, int budget) {
    auto f1 = [&](double t) {
      x(j) = t;
      return dev(x);
    };
    auto r = opt::golden_bounded(f1, start, 0.0, budget);
    x(j) = r.x;
    return std::pair{x, r};
  };

  if (k == 1) {
    for (double s : starts) {
      auto [x, r] = line(best.theta, 0, s, opts.max_evals_per_dim);
      best.evals += r.evals;
      if (!r.converged) best.converged = false;
      if (r.f < best.deviance) {
        best.deviance = r.f;
        best.theta = x;
      }
    }
    return best;
  }

  bool any_converged = false;
  for (double s : starts) {
    auto r = opt::nelder_mead_nonneg(dev, Eigen::VectorXd::Constant(k, s), cap, 0.1 * opts.tol);
    best.evals += r.evals;
    any_converged = any_converged || r.converged;
    if (r.f < best.deviance) {
      best.deviance = r.f;
      best.theta = r.x;
    }
  }
  // Coordinate-wise polish; settles components sitting on the boundary.
  for (int sweep = 0; sweep < 50; ++sweep) {
    const double before = best.deviance;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double s = best.theta(j) > 0.0 ? best.theta(j) : 0.1;
      auto [x, r] = line(best.theta, j, s, opts.max_evals_per_dim);
      best.evals += r.evals;
      if (r.f <= best.deviance) {
        best.deviance = r.f;
        best.theta = x;
      }
    }
    if (before - best.deviance <= opts.tol) break;
    if (best.evals > cap * static_cast<int>(starts.size() + 2)) {
      best.converged = false;
      break;
    }
  }
  best.converged = best.converged && any_converged;
  return best;
}

}  // namespace detail

/// Builds a FittedLMM at a given theta (no optimization).
inline FittedLMM fitted_at(std::shared_ptr<const MixedModelProblem> prob, const Eigen::VectorXd& theta,
                           Criterion crit) {
  FittedLMM f;
  const auto s = prob->solve(theta);
  f.criterion = crit;
  f.theta = theta;
  f.deviance = prob->deviance_of(s, crit);
  f.loglik = -0.5 * f.deviance;
  f.beta = s.beta;
  f.blups = s.b;
  f.vc.sigma2_eps = prob->sigma2_of(s, crit);
  for (std::size_t k = 0; k < prob->n_factors(); ++k) {
    const double th = theta(static_cast<Eigen::Index>(k));
    f.vc.factors.push_back({prob->factor_name(k), th * th * f.vc.sigma2_eps, th});
  }
  f.vcov_beta = f.vc.sigma2_eps * s.xtvx_inv;
  f.vcov_beta = 0.5 * (f.vcov_beta + f.vcov_beta.transpose()).eval();
  f.npar = static_cast<int>(prob->p() + static_cast<Eigen::Index>(prob->n_factors()) + 1);
  f.problem = std::move(prob);
  return f;
}

inline FittedLMM fit_lmm(const DesignMatrices& dm, const Eigen::VectorXd& y, Criterion crit = Criterion::REML,
                         const FitOptions& opts = {}) {
  auto prob = std::make_shared<const MixedModelProblem>(dm, y, opts.weights);
  const auto best = detail::optimize_theta(*prob, crit, opts);
  FittedLMM f = fitted_at(std::move(prob), best.theta, crit);
  f.converged = best.converged;
  f.deviance_profile_evals = best.evals;
  f.column_map = dm.column_map;
  return f;
}

inline FittedLMM fit_lmm(const Dataset& d, const ModelSpec& spec, Criterion crit = Criterion::REML,
                         const FitOptions& opts = {}) {
  const auto dm = build_design(d, spec);
  const auto ys = d.metrics();
  return fit_lmm(dm, Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size())), crit, opts);
}

inline ModelSpec drop_random_factor(ModelSpec spec, const std::string& factor) {
  auto it = std::find(spec.random_factors.begin(), spec.random_factors.end(), factor);
  if (it == spec.random_factors.end()) throw UnknownNameError("'" + factor + "' is not a random factor of the model");
  spec.random_factors.erase(it);
  return spec;
}

/// Inserts the factor at `position` (default: end). Dropping then re-adding
/// at the same position restores the original spec.
inline ModelSpec add_random_factor(ModelSpec spec, const std::string& factor,
                                   std::size_t position = static_cast<std::size_t>(-1)) {
  if (std::find(spec.random_factors.begin(), spec.random_factors.end(), factor) != spec.random_factors.end())
    throw SchemaError("'" + factor + "' is already a random factor");
  position = std::min(position, spec.random_factors.size());
  spec.random_factors.insert(spec.random_factors.begin() + static_cast<std::ptrdiff_t>(position), factor);
  spec.validate();
  return spec;
}

}  // namespace lmmvar
