#pragma once

// Synthetic experiment trees: combo -> seed -> configuration -> rerun, with
//
//   y = mu_combo + b_seed + b_config + eps
//
// Every random draw comes from a Mersenne Twister substream keyed by the
// generator seed and the path of the node it belongs to, so any leaf can be
// regenerated independently.

#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lmmvar/dataset.hpp"
#include "lmmvar/errors.hpp"

namespace lmmvar {

struct Combo {
  std::string model;
  std::string optimizer;
  double mean = 0.0;
  bool operator==(const Combo&) const = default;
};

enum class RerunMode { deterministic, noisy };

struct TreeDesign {
  std::vector<Combo> combos;
  int n_seeds = 10;
  int n_configs = 15;
  int n_reruns = 10;
  double sigma_seed = 0.0;
  double sigma_hparam = 0.0;
  double sigma_eps = 0.0;
  RerunMode rerun_mode = RerunMode::noisy;
  std::uint64_t generator_seed = 0;
  bool nested = false;  // configurations drawn afresh for each seed

  void validate() const {
    if (combos.empty()) throw DomainError("tree design: no (model, optimizer) combinations");
    if (n_seeds < 1 || n_configs < 1 || n_reruns < 1) throw DomainError("tree design: all counts must be >= 1");
    if (!(sigma_seed >= 0.0) || !(sigma_hparam >= 0.0) || !(sigma_eps >= 0.0))
      throw DomainError("tree design: standard deviations must be >= 0");
    for (const auto& c : combos)
      if (c.model.empty() || c.optimizer.empty()) throw DomainError("tree design: empty model or optimizer label");
  }

  bool operator==(const TreeDesign&) const = default;
};

/// Realized random effects alongside the generated data.
struct SimulationTruth {
  std::map<std::string, double> seed_effects;
  std::map<std::string, double> config_effects;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::string indexed_label(char prefix, int i, int count) {
  const int width = static_cast<int>(std::to_string(count).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*d", prefix, width, i + 1);
  return buf;
}

}  // namespace detail

/// Independent standard-normal stream for one node of the tree.
inline std::mt19937_64 substream(std::uint64_t generator_seed, std::string_view path) {
  return std::mt19937_64(detail::splitmix64(generator_seed ^ detail::splitmix64(detail::fnv1a(path))));
}

inline double node_normal(std::uint64_t generator_seed, std::string_view path, double sd) {
  if (sd == 0.0) return 0.0;
  auto rng = substream(generator_seed, path);
  return sd * std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline Dataset generate(const TreeDesign& design, SimulationTruth* truth = nullptr, const ColumnMap& columns = {}) {
  design.validate();
  const auto gs = design.generator_seed;
  std::vector<std::string> seeds, configs, reruns;
  for (int j = 0; j < design.n_seeds; ++j) seeds.push_back(detail::indexed_label('s', j, design.n_seeds));
  for (int k = 0; k < design.n_configs; ++k) configs.push_back(detail::indexed_label('c', k, design.n_configs));
  for (int r = 0; r < design.n_reruns; ++r) reruns.push_back(detail::indexed_label('r', r, design.n_reruns));

  std::map<std::string, double> seed_eff, cfg_eff;
  for (const auto& s : seeds) seed_eff[s] = node_normal(gs, "seed/" + s, design.sigma_seed);
  auto config_label = [&](const std::string& s, const std::string& c) { return design.nested ? s + "-" + c : c; };
  for (const auto& s : seeds)
    for (const auto& c : configs) {
      const auto label = config_label(s, c);
      if (!cfg_eff.contains(label)) cfg_eff[label] = node_normal(gs, "config/" + label, design.sigma_hparam);
    }

  std::vector<ExperimentRecord> records;
  records.reserve(design.combos.size() * seeds.size() * configs.size() * reruns.size());
  for (const auto& combo : design.combos) {
    for (const auto& s : seeds) {
      for (const auto& c : configs) {
        const auto cl = config_label(s, c);
        const std::string leaf = "leaf/" + combo.model + "/" + combo.optimizer + "/" + s + "/" + cl;
        const double shared = design.rerun_mode == RerunMode::deterministic
                                  ? node_normal(gs, leaf, design.sigma_eps)
                                  : 0.0;
        for (const auto& r : reruns) {
          const double eps =
              design.rerun_mode == RerunMode::deterministic ? shared : node_normal(gs, leaf + "/" + r, design.sigma_eps);
          records.push_back({combo.model, combo.optimizer, s, cl, r, combo.mean + seed_eff[s] + cfg_eff[cl] + eps});
        }
      }
    }
  }
  if (truth) {
    truth->seed_effects = std::move(seed_eff);
    truth->config_effects = std::move(cfg_eff);
  }
  return Dataset::from_records(std::move(records), columns);
}

}  // namespace lmmvar
