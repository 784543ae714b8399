#pragma once

// JSON readers/writers for simulation designs and hyper-parameter spaces.
//
// Design file:
//   {"combos": [{"model": "protonet", "optimizer": "adam", "mean": 0.65}, ...],
//    "n_seeds": 10, "n_configs": 15, "n_reruns": 10,
//    "sigma_seed": 0.0056, "sigma_hparam": 0.042, "sigma_eps": 0.021,
//    "rerun_mode": "noisy" | "deterministic", "generator_seed": 1,
//    "nested": false,
//    "hparam_space": {"learning_rate": {"kind": "log_uniform", "lo": 1e-4, "hi": 0.1}, ...}}

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "lmmvar/errors.hpp"
#include "lmmvar/hyperparams.hpp"
#include "lmmvar/simulate.hpp"

namespace lmmvar {

using json = nlohmann::ordered_json;

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("invalid JSON in '" + path + "': " + e.what());
  }
}

inline void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "write");
  out << j.dump(2) << '\n';
  if (!out) throw IoError(path, "write");
}

namespace detail {

template <typename T>
T get_field(const json& j, const char* key, const char* ctx) {
  if (!j.contains(key)) throw SchemaError(std::string(ctx) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw SchemaError(std::string(ctx) + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const char* ctx) {
  return j.contains(key) ? get_field<T>(j, key, ctx) : fallback;
}

}  // namespace detail

inline HyperparamDistribution hyperparam_from_json(const json& j) {
  constexpr const char* ctx = "hyper-parameter distribution";
  if (!j.is_object()) throw SchemaError(std::string(ctx) + " must be an object");
  const auto kind = detail::get_field<std::string>(j, "kind", ctx);
  using D = HyperparamDistribution;
  if (kind == "uniform") return D::uniform(detail::get_field<double>(j, "lo", ctx), detail::get_field<double>(j, "hi", ctx));
  if (kind == "log_uniform")
    return D::log_uniform(detail::get_field<double>(j, "lo", ctx), detail::get_field<double>(j, "hi", ctx));
  if (kind == "normal") return D::normal(detail::get_field<double>(j, "mean", ctx), detail::get_field<double>(j, "sd", ctx));
  if (kind == "discrete_uniform") return D::discrete_uniform(detail::get_field<std::vector<double>>(j, "values", ctx));
  if (kind == "constant") return D::constant(detail::get_field<double>(j, "value", ctx));
  throw SchemaError("unknown distribution kind '" + kind + "'");
}

inline json to_json(const HyperparamDistribution& d) {
  using K = HyperparamDistribution::Kind;
  switch (d.kind()) {
    case K::uniform: return {{"kind", "uniform"}, {"lo", d.lo()}, {"hi", d.hi()}};
    case K::log_uniform: return {{"kind", "log_uniform"}, {"lo", d.lo()}, {"hi", d.hi()}};
    case K::normal: return {{"kind", "normal"}, {"mean", d.mean()}, {"sd", d.sd()}};
    case K::discrete_uniform: return {{"kind", "discrete_uniform"}, {"values", d.values()}};
    case K::constant: return {{"kind", "constant"}, {"value", d.value()}};
  }
  return {};
}

inline HyperparamSpace hyperparam_space_from_json(const json& j) {
  if (!j.is_object() || j.empty()) throw SchemaError("hyper-parameter space must be a non-empty object");
  HyperparamSpace space;
  for (const auto& [name, dist] : j.items()) space.emplace(name, hyperparam_from_json(dist));
  return space;
}

inline json to_json(const HyperparamSpace& space) {
  json j = json::object();
  for (const auto& [name, dist] : space) j[name] = to_json(dist);
  return j;
}

inline TreeDesign tree_design_from_json(const json& j) {
  constexpr const char* ctx = "tree design";
  if (!j.is_object()) throw SchemaError("tree design must be a JSON object");
  TreeDesign d;
  const auto& combos = j.contains("combos") ? j.at("combos") : throw SchemaError("tree design: missing field 'combos'");
  if (!combos.is_array()) throw SchemaError("tree design: 'combos' must be an array");
  for (const auto& c : combos)
    d.combos.push_back({detail::get_field<std::string>(c, "model", "combo"),
                        detail::get_field<std::string>(c, "optimizer", "combo"),
                        detail::get_or<double>(c, "mean", 0.0, "combo")});
  d.n_seeds = detail::get_or<int>(j, "n_seeds", d.n_seeds, ctx);
  d.n_configs = detail::get_or<int>(j, "n_configs", d.n_configs, ctx);
  d.n_reruns = detail::get_or<int>(j, "n_reruns", d.n_reruns, ctx);
  d.sigma_seed = detail::get_or<double>(j, "sigma_seed", d.sigma_seed, ctx);
  d.sigma_hparam = detail::get_or<double>(j, "sigma_hparam", d.sigma_hparam, ctx);
  d.sigma_eps = detail::get_or<double>(j, "sigma_eps", d.sigma_eps, ctx);
  const auto mode = detail::get_or<std::string>(j, "rerun_mode", "noisy", ctx);
  if (mode == "noisy") d.rerun_mode = RerunMode::noisy;
  else if (mode == "deterministic") d.rerun_mode = RerunMode::deterministic;
  else throw SchemaError("tree design: unknown rerun_mode '" + mode + "'");
  d.generator_seed = detail::get_or<std::uint64_t>(j, "generator_seed", d.generator_seed, ctx);
  d.nested = detail::get_or<bool>(j, "nested", d.nested, ctx);
  d.validate();
  return d;
}

inline json to_json(const TreeDesign& d) {
  json combos = json::array();
  for (const auto& c : d.combos) combos.push_back({{"model", c.model}, {"optimizer", c.optimizer}, {"mean", c.mean}});
  return {{"combos", combos},
          {"n_seeds", d.n_seeds},
          {"n_configs", d.n_configs},
          {"n_reruns", d.n_reruns},
          {"sigma_seed", d.sigma_seed},
          {"sigma_hparam", d.sigma_hparam},
          {"sigma_eps", d.sigma_eps},
          {"rerun_mode", d.rerun_mode == RerunMode::noisy ? "noisy" : "deterministic"},
          {"generator_seed", d.generator_seed},
          {"nested", d.nested}};
}

inline json truth_json(const TreeDesign& d, const SimulationTruth& t) {
  json j;
  j["design"] = to_json(d);
  j["variance"] = {{"seed", d.sigma_seed * d.sigma_seed},
                   {"hparams", d.sigma_hparam * d.sigma_hparam},
                   {"Residual", d.sigma_eps * d.sigma_eps}};
  j["seed_effects"] = t.seed_effects;
  j["config_effects"] = t.config_effects;
  return j;
}

}  // namespace lmmvar
