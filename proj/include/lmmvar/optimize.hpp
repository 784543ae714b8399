#pragma once

// Derivative-free bounded minimizers used to profile the deviance over the
// relative standard deviations theta >= 0.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace lmmvar::opt {

struct Result1D {
  double x = 0.0;
  double f = std::numeric_limits<double>::infinity();
  int evals = 0;
  bool converged = true;
};

/// Minimizes f over [lower, inf) starting from `start`: expands a bracket
/// geometrically, then golden-section search inside it. The boundary value
/// f(lower) is always evaluated and wins ties.
template <typename F>
Result1D golden_bounded(F&& f, double start, double lower, int max_evals, double xtol = 1e-10) {
  Result1D res;
  auto eval = [&](double x) {
    ++res.evals;
    return f(x);
  };
  constexpr double kUpper = 1e8;
  start = std::max(start, lower + 1e-3);

  double lo = lower, hi;
  double x0 = start, f0 = eval(x0);
  double x1 = 2.0 * x0 - lower, f1 = eval(x1);
  if (f1 < f0) {
    // Expand upward until the function rises.
    lo = x0;
    for (;;) {
      const double x2 = 2.0 * x1 - lower;
      const double f2 = eval(x2);
      if (f2 >= f1) {
        hi = x2;
        break;
      }
      lo = x1;
      x1 = x2;
      f1 = f2;
      if (x1 > kUpper || res.evals >= max_evals) {
        res.converged = false;
        res.x = x1;
        res.f = f1;
        return res;
      }
    }
  } else {
    // Shrink toward the lower bound until the function rises.
    hi = x1;
    for (;;) {
      const double xm = lower + 0.5 * (x0 - lower);
      const double fm = eval(xm);
      if (fm >= f0) {
        lo = xm;
        break;
      }
      hi = x0;
      x0 = xm;
      f0 = fm;
      if (x0 - lower < 1e-9 || res.evals >= max_evals) {
        lo = lower;
        break;
      }
    }
  }

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = eval(c), fd = eval(d);
  while ((b - a) > xtol * (1.0 + std::fabs(c))) {
    if (res.evals >= max_evals) {
      res.converged = false;
      break;
    }
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = eval(d);
    }
  }
  if (fc < fd) {
    res.x = c;
    res.f = fc;
  } else {
    res.x = d;
    res.f = fd;
  }
  if (f0 < res.f) {
    res.x = x0;
    res.f = f0;
  }
  const double fb = eval(lower);
  if (fb <= res.f) {
    res.x = lower;
    res.f = fb;
  }
  return res;
}

struct ResultND {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int evals = 0;
  bool converged = true;
};

/// Nelder-Mead on the orthant x >= 0; trial points are clamped onto the box.
template <typename F>
ResultND nelder_mead_nonneg(F&& f, const Eigen::VectorXd& start, int max_evals, double ftol, double xtol = 1e-8) {
  const Eigen::Index n = start.size();
  ResultND res;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evals;
    return f(x);
  };
  auto clamp = [](Eigen::VectorXd x) { return x.cwiseMax(0.0).eval(); };

  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), start);
  std::vector<double> fv(static_cast<std::size_t>(n + 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& p = pts[static_cast<std::size_t>(i + 1)];
    p(i) += std::max(0.5 * std::fabs(p(i)), 0.05);
  }
  for (std::size_t i = 0; i < pts.size(); ++i) fv[i] = eval(pts[i] = clamp(pts[i]));

  std::vector<std::size_t> order(pts.size());
  for (;;) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
    const auto best = order.front(), worst = order.back(), second = order[order.size() - 2];

    double diam = 0.0;
    for (const auto& p : pts) diam = std::max(diam, (p - pts[best]).cwiseAbs().maxCoeff());
    if (fv[worst] - fv[best] <= ftol && diam <= xtol * (1.0 + pts[best].cwiseAbs().maxCoeff())) break;
    if (res.evals >= max_evals) {
      res.converged = false;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (auto i : order)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = clamp(centroid + (centroid - pts[worst]));
    const double fr = eval(xr);
    if (fr < fv[best]) {
      const Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - pts[worst]));
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        fv[worst] = fe;
      } else {
        pts[worst] = xr;
        fv[worst] = fr;
      }
      continue;
    }
    if (fr < fv[second]) {
      pts[worst] = xr;
      fv[worst] = fr;
      continue;
    }
    const bool outside = fr < fv[worst];
    const Eigen::VectorXd xc =
        outside ? clamp(centroid + 0.5 * (xr - centroid)) : clamp(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : fv[worst])) {
      pts[worst] = xc;
      fv[worst] = fc;
      continue;
    }
    // Shrink toward the best vertex.
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = clamp(pts[best] + 0.5 * (pts[i] - pts[best]));
      fv[i] = eval(pts[i]);
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = pts[best];
  res.f = fv[best];
  return res;
}

}  // namespace lmmvar::opt
