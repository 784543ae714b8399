#pragma once

// Fixed-effects contrast matrix X and random-effects indicator structure Z.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lmmvar/dataset.hpp"
#include "lmmvar/errors.hpp"

namespace lmmvar {

inline constexpr const char* kInterceptName = "(Intercept)";

/// One grouping factor's contiguous column range in Z.
struct ZBlock {
  std::string factor;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
  std::vector<std::string> levels;
  std::vector<int> codes;  // per observation, column within the block
};

/// Z is kept as per-factor level codes; dense_z() materializes the N x Q
/// indicator matrix when needed.
struct DesignMatrices {
  Eigen::MatrixXd X;
  std::vector<std::string> column_map;  // fixed column -> "(Intercept)" or level name
  std::vector<ZBlock> z_blocks;
  std::string fixed_factor;
  std::vector<std::string> fixed_levels;
  ContrastCoding coding = ContrastCoding::treatment;
  bool intercept = true;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index Q() const {
    Eigen::Index q = 0;
    for (const auto& b : z_blocks) q += b.size;
    return q;
  }

  Eigen::MatrixXd dense_z() const {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n(), Q());
    for (const auto& b : z_blocks)
      for (Eigen::Index i = 0; i < n(); ++i) Z(i, b.offset + b.codes[static_cast<std::size_t>(i)]) = 1.0;
    return Z;
  }

  std::size_t level_index(const std::string& level) const {
    auto it = std::find(fixed_levels.begin(), fixed_levels.end(), level);
    if (it == fixed_levels.end())
      throw UnknownNameError("unknown level '" + level + "' of factor '" + fixed_factor + "'");
    return static_cast<std::size_t>(it - fixed_levels.begin());
  }
};

namespace detail {

// Pivoted Cholesky of a PSD Gram matrix. Returns the index of the first
// column found linearly dependent on the others, or -1 if full rank.
inline Eigen::Index first_dependent_column(const Eigen::MatrixXd& gram, double rel_tol = 1e-10) {
  const Eigen::Index p = gram.rows();
  if (p == 0) return -1;
  Eigen::MatrixXd a = gram;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < p; ++i) perm[static_cast<std::size_t>(i)] = i;
  const double tol = rel_tol * a.diagonal().maxCoeff();
  for (Eigen::Index k = 0; k < p; ++k) {
    Eigen::Index piv;
    a.diagonal().tail(p - k).maxCoeff(&piv);
    piv += k;
    if (a(piv, piv) <= tol) {
      // Everything left is dependent; report the lowest original column.
      Eigen::Index worst = perm[static_cast<std::size_t>(k)];
      for (Eigen::Index j = k; j < p; ++j) worst = std::min(worst, perm[static_cast<std::size_t>(j)]);
      return worst;
    }
    if (piv != k) {
      a.row(k).swap(a.row(piv));
      a.col(k).swap(a.col(piv));
      std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(piv)]);
    }
    const double d = std::sqrt(a(k, k));
    a(k, k) = d;
    a.col(k).tail(p - k - 1) /= d;
    a.row(k).tail(p - k - 1) = a.col(k).tail(p - k - 1).transpose();
    const Eigen::VectorXd v = a.col(k).tail(p - k - 1);
    a.bottomRightCorner(p - k - 1, p - k - 1) -= v * v.transpose();
  }
  return -1;
}

}  // namespace detail

inline DesignMatrices build_design(const Dataset& data, const ModelSpec& spec) {
  spec.validate();
  const Dataset d = data.with_factor(spec.fixed_factor);
  const auto& fixed = d.factor(spec.fixed_factor);
  const auto n = static_cast<Eigen::Index>(d.n());
  const auto L = static_cast<Eigen::Index>(fixed.levels.size());

  DesignMatrices dm;
  dm.fixed_factor = spec.fixed_factor;
  dm.fixed_levels = fixed.levels;
  dm.coding = spec.contrast_coding;
  dm.intercept = spec.include_intercept;

  if (spec.include_intercept) {
    dm.X.setZero(n, L);
    dm.X.col(0).setOnes();
    dm.column_map.push_back(kInterceptName);
    for (Eigen::Index j = 1; j < L; ++j)
      dm.column_map.push_back(fixed.levels[static_cast<std::size_t>(spec.contrast_coding == ContrastCoding::treatment ? j : j - 1)]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = fixed.codes[static_cast<std::size_t>(i)];
      if (spec.contrast_coding == ContrastCoding::treatment) {
        if (c > 0) dm.X(i, c) = 1.0;
      } else if (c < L - 1) {
        dm.X(i, c + 1) = 1.0;
      } else {
        dm.X.row(i).tail(L - 1).setConstant(-1.0);
      }
    }
  } else {
    dm.X.setZero(n, L);
    dm.column_map = fixed.levels;
    for (Eigen::Index i = 0; i < n; ++i) dm.X(i, fixed.codes[static_cast<std::size_t>(i)]) = 1.0;
  }

  const Eigen::MatrixXd gram = dm.X.transpose() * dm.X;
  if (auto col = detail::first_dependent_column(gram); col >= 0) {
    throw RankDeficientError("fixed-effects design is rank deficient at column '" +
                             dm.column_map[static_cast<std::size_t>(col)] + "'");
  }

  Eigen::Index offset = 0;
  for (const auto& name : spec.random_factors) {
    const auto& f = d.factor(name);
    if (f.levels.size() < 2)
      throw InsufficientDataError("random factor '" + name + "' has a single level; its variance is not identifiable");
    ZBlock b{name, offset, static_cast<Eigen::Index>(f.levels.size()), f.levels, f.codes};
    offset += b.size;
    dm.z_blocks.push_back(std::move(b));
  }
  return dm;
}

/// Same design with one grouping factor removed from Z.
inline DesignMatrices without_random_factor(DesignMatrices dm, const std::string& factor) {
  auto it = std::find_if(dm.z_blocks.begin(), dm.z_blocks.end(), [&](const ZBlock& b) { return b.factor == factor; });
  if (it == dm.z_blocks.end()) throw UnknownNameError("'" + factor + "' is not a random factor of the design");
  dm.z_blocks.erase(it);
  Eigen::Index offset = 0;
  for (auto& b : dm.z_blocks) {
    b.offset = offset;
    offset += b.size;
  }
  return dm;
}

/// Coefficient row whose product with beta is the mean of one fixed level.
inline Eigen::RowVectorXd level_mean_row(const DesignMatrices& dm, const std::string& level) {
  const auto j = static_cast<Eigen::Index>(dm.level_index(level));
  const Eigen::Index L = static_cast<Eigen::Index>(dm.fixed_levels.size());
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(dm.p());
  if (!dm.intercept) {
    c(j) = 1.0;
    return c;
  }
  c(0) = 1.0;
  if (dm.coding == ContrastCoding::treatment) {
    if (j > 0) c(j) = 1.0;
  } else if (j < L - 1) {
    c(j + 1) = 1.0;
  } else {
    c.tail(L - 1).setConstant(-1.0);
  }
  return c;
}

/// Unweighted average of the level means.
inline Eigen::RowVectorXd grand_mean_row(const DesignMatrices& dm) {
  Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(dm.p());
  for (const auto& l : dm.fixed_levels) c += level_mean_row(dm, l);
  return c / static_cast<double>(dm.fixed_levels.size());
}

inline Eigen::RowVectorXd difference_row(const DesignMatrices& dm, const std::string& a, const std::string& b) {
  return level_mean_row(dm, a) - level_mean_row(dm, b);
}

enum class ContrastTarget { reference, grand_mean };

struct ContrastMatrix {
  Eigen::MatrixXd L;
  std::vector<std::string> labels;
};

/// One row per requested level: level mean minus the reference-level mean or
/// minus the grand mean.
inline ContrastMatrix contrast_rows(const DesignMatrices& dm, const std::vector<std::string>& levels,
                                    ContrastTarget target = ContrastTarget::grand_mean) {
  ContrastMatrix cm;
  cm.L.setZero(static_cast<Eigen::Index>(levels.size()), dm.p());
  const Eigen::RowVectorXd base =
      target == ContrastTarget::grand_mean ? grand_mean_row(dm) : level_mean_row(dm, dm.fixed_levels.front());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    cm.L.row(static_cast<Eigen::Index>(i)) = level_mean_row(dm, levels[i]) - base;
    cm.labels.push_back(levels[i]);
  }
  return cm;
}

/// Hypothesis matrix for "all fixed levels share one mean": k = levels - 1 rows.
inline ContrastMatrix term_hypothesis(const DesignMatrices& dm) {
  if (dm.fixed_levels.size() < 2)
    throw InsufficientDataError("fixed factor '" + dm.fixed_factor + "' has a single level: no testable fixed term");
  ContrastMatrix cm;
  const auto k = static_cast<Eigen::Index>(dm.fixed_levels.size()) - 1;
  cm.L.resize(k, dm.p());
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& lvl = dm.fixed_levels[static_cast<std::size_t>(j + 1)];
    cm.L.row(j) = difference_row(dm, lvl, dm.fixed_levels.front());
    cm.labels.push_back(lvl);
  }
  return cm;
}

}  // namespace lmmvar
