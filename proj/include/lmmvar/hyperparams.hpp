#pragma once

// Hyper-parameter search spaces and random configuration sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lmmvar/errors.hpp"

namespace lmmvar {

class HyperparamDistribution {
 public:
  enum class Kind { uniform, log_uniform, normal, discrete_uniform, constant };

  // Bounds given in either order are normalized to lo < hi.
  static HyperparamDistribution uniform(double lo, double hi) {
    auto [a, b] = std::minmax(lo, hi);
    if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) throw DomainError("uniform: need two distinct finite bounds");
    return {Kind::uniform, a, b, {}};
  }
  static HyperparamDistribution log_uniform(double lo, double hi) {
    auto [a, b] = std::minmax(lo, hi);
    if (!(a > 0.0)) throw DomainError("log_uniform: bounds must be > 0");
    if (!(a < b) || !std::isfinite(b)) throw DomainError("log_uniform: need two distinct finite bounds");
    return {Kind::log_uniform, a, b, {}};
  }
  /// Normal with mean and standard deviation (not variance).
  static HyperparamDistribution normal(double mean, double sd) {
    if (!(sd > 0.0) || !std::isfinite(mean) || !std::isfinite(sd)) throw DomainError("normal: sd must be > 0");
    return {Kind::normal, mean, sd, {}};
  }
  static HyperparamDistribution discrete_uniform(std::vector<double> values) {
    if (values.empty()) throw DomainError("discrete_uniform: value set is empty");
    return {Kind::discrete_uniform, 0.0, 0.0, std::move(values)};
  }
  static HyperparamDistribution constant(double v) { return {Kind::constant, v, v, {}}; }

  Kind kind() const { return kind_; }
  double lo() const { return a_; }
  double hi() const { return b_; }
  double mean() const { return a_; }
  double sd() const { return b_; }
  double value() const { return a_; }
  const std::vector<double>& values() const { return values_; }

  template <typename Rng>
  double sample(Rng& rng) const {
    switch (kind_) {
      case Kind::uniform:
        return std::uniform_real_distribution<double>(a_, b_)(rng);
      case Kind::log_uniform:
        return std::exp(std::uniform_real_distribution<double>(std::log(a_), std::log(b_))(rng));
      case Kind::normal:
        return std::normal_distribution<double>(a_, b_)(rng);
      case Kind::discrete_uniform:
        return values_[std::uniform_int_distribution<std::size_t>(0, values_.size() - 1)(rng)];
      case Kind::constant:
        return a_;
    }
    return a_;
  }

  bool operator==(const HyperparamDistribution&) const = default;

 private:
  HyperparamDistribution(Kind k, double a, double b, std::vector<double> v)
      : kind_(k), a_(a), b_(b), values_(std::move(v)) {}

  Kind kind_;
  double a_, b_;
  std::vector<double> values_;
};

using HyperparamSpace = std::map<std::string, HyperparamDistribution>;
using HyperparamConfig = std::map<std::string, double>;

/// n independent configurations; parameters are drawn in name order from one
/// Mersenne Twister stream seeded with `seed`.
inline std::vector<HyperparamConfig> sample_hyperparams(const HyperparamSpace& space, std::size_t n,
                                                        std::uint64_t seed) {
  if (space.empty()) throw DomainError("hyper-parameter space is empty");
  std::mt19937_64 rng(seed);
  std::vector<HyperparamConfig> out(n);
  for (auto& cfg : out)
    for (const auto& [name, dist] : space) cfg[name] = dist.sample(rng);
  return out;
}

/// Search spaces of the three few-shot learners studied with this method.
/// "tadam", "protonet", "matchingnet".
inline HyperparamSpace preset_space(const std::string& name) {
  using D = HyperparamDistribution;
  if (name == "tadam") {
    return {{"learning_rate", D::uniform(0.1, 0.02)},
            {"lr_decay_rate", D::normal(10.0, 1.0)},
            {"lr_decay_period", D::constant(2500)},
            {"query_shots_per_class", D::discrete_uniform({16, 64})},
            {"pretrain_batch_size", D::discrete_uniform({32, 64})},
            {"n_way", D::constant(5)},
            {"n_shot", D::constant(5)},
            {"tasks_per_batch", D::constant(2)},
            {"batch_size", D::constant(100)},
            {"training_steps", D::constant(21000)},
            {"test_episodes", D::constant(500)}};
  }
  if (name == "protonet") {
    return {{"learning_rate", D::normal(0.005, 0.0012)},
            {"lr_decay_rate", D::constant(0.5)},
            {"lr_decay_period", D::uniform(500, 2000)},
            {"query_shots_per_class", D::constant(15)},
            {"n_way", D::constant(5)},
            {"n_shot", D::constant(5)},
            {"tasks_per_batch", D::constant(1)},
            {"batch_size", D::constant(100)},
            {"training_steps", D::constant(10000)},
            {"test_episodes", D::constant(600)}};
  }
  if (name == "matchingnet") {
    return {{"learning_rate", D::log_uniform(0.0001, 0.1)},
            {"lr_decay_rate", D::log_uniform(0.00001, 0.01)},
            {"lr_decay_period", D::constant(1)},
            {"query_shots_per_class", D::uniform(5, 30)},
            {"n_way", D::constant(5)},
            {"n_shot", D::constant(5)},
            {"tasks_per_batch", D::constant(1)},
            {"batch_size", D::constant(500)},
            {"early_stop_epochs", D::constant(20)},
            {"training_steps", D::constant(75000)},
            {"test_episodes", D::constant(600)}};
  }
  throw UnknownNameError("unknown preset search space '" + name + "'");
}

}  // namespace lmmvar
