#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "lmmvar/config.hpp"
#include "support/fixtures.hpp"

using namespace lmmvar;
using Catch::Approx;

namespace {

TreeDesign small_design() {
  TreeDesign d;
  d.combos = {{"protonet", "adam", 0.6}, {"tadam", "sgd", 0.7}};
  d.n_seeds = 4;
  d.n_configs = 5;
  d.n_reruns = 3;
  d.sigma_seed = 0.01;
  d.sigma_hparam = 0.04;
  d.sigma_eps = 0.02;
  d.generator_seed = 42;
  return d;
}

}  // namespace

TEST_CASE("zero standard deviations give the combo means", "[simulate]") {
  auto d = small_design();
  d.sigma_seed = d.sigma_hparam = d.sigma_eps = 0.0;
  const auto data = generate(d);
  CHECK(data.n() == 2 * 4 * 5 * 3);
  for (const auto& r : data.records()) CHECK(r.metric == (r.model == "protonet" ? 0.6 : 0.7));
}

TEST_CASE("generation is deterministic in the generator seed", "[simulate]") {
  const auto d = small_design();
  CHECK(generate(d) == generate(d));
  auto other = d;
  other.generator_seed = 43;
  CHECK_FALSE(generate(other) == generate(d));
}

TEST_CASE("adding a combo leaves shared nodes untouched", "[simulate]") {
  auto d = small_design();
  SimulationTruth t1, t2;
  const auto a = generate(d, &t1);
  d.combos.push_back({"mnet", "adam", 0.5});
  const auto b = generate(d, &t2);
  CHECK(t1.seed_effects == t2.seed_effects);
  CHECK(t1.config_effects == t2.config_effects);
  for (std::size_t i = 0; i < a.n(); ++i) CHECK(a.records()[i] == b.records()[i]);
}

TEST_CASE("labels and structure", "[simulate]") {
  auto d = small_design();
  d.n_configs = 12;
  const auto data = generate(d);
  CHECK(data.levels("seed") == std::vector<std::string>{"s1", "s2", "s3", "s4"});
  CHECK(data.levels("hparams").front() == "c01");
  CHECK(data.levels("hparams").size() == 12);
  CHECK(data.levels("rerun") == std::vector<std::string>{"r1", "r2", "r3"});

  d.nested = true;
  const auto nested = generate(d);
  CHECK(nested.levels("hparams").size() == 4 * 12);
  CHECK(nested.levels("hparams").front() == "s1-c01");
}

TEST_CASE("deterministic reruns repeat the same value", "[simulate]") {
  auto d = small_design();
  d.rerun_mode = RerunMode::deterministic;
  const auto data = generate(d);
  std::map<std::string, std::set<double>> by_leaf;
  for (const auto& r : data.records()) by_leaf[r.model + r.optimizer + r.seed + r.hparam_config].insert(r.metric);
  for (const auto& [k, v] : by_leaf) CHECK(v.size() == 1);
}

TEST_CASE("truth effects are what the data contain", "[simulate]") {
  auto d = small_design();
  d.sigma_eps = 0.0;
  SimulationTruth t;
  const auto data = generate(d, &t);
  for (const auto& r : data.records()) {
    const double mean = r.model == "protonet" ? 0.6 : 0.7;
    CHECK(r.metric == Approx(mean + t.seed_effects.at(r.seed) + t.config_effects.at(r.hparam_config)).epsilon(1e-14));
  }
}

TEST_CASE("variance components are recovered on a large design", "[simulate][recovery]") {
  TreeDesign d;
  d.combos = {{"a", "x", 0.5}, {"b", "x", 0.55}};
  d.n_seeds = 30;
  d.n_configs = 30;
  d.n_reruns = 2;
  d.sigma_seed = 0.03;
  d.sigma_hparam = 0.05;
  d.sigma_eps = 0.02;
  d.generator_seed = 7;
  ModelSpec spec;
  spec.fixed_factor = "model";
  const auto f = fit_lmm(generate(d), spec);
  CHECK(f.vc.factors[0].sd() == Approx(0.03).epsilon(0.35));
  CHECK(f.vc.factors[1].sd() == Approx(0.05).epsilon(0.35));
  CHECK(f.vc.sigma2_eps == Approx(0.0004).epsilon(0.1));
}

TEST_CASE("design validation", "[simulate]") {
  auto d = small_design();
  d.n_seeds = 0;
  CHECK_THROWS_AS(generate(d), DomainError);
  d = small_design();
  d.sigma_eps = -1.0;
  CHECK_THROWS_AS(generate(d), DomainError);
  d = small_design();
  d.combos.clear();
  CHECK_THROWS_AS(generate(d), DomainError);
}

TEST_CASE("hyper-parameter sampling", "[simulate][hparams]") {
  using D = HyperparamDistribution;
  SECTION("log-uniform puts equal mass on each decade") {
    const auto cfgs = sample_hyperparams({{"lr", D::log_uniform(1e-4, 1e-1)}}, 30000, 11);
    int counts[3] = {0, 0, 0};
    for (const auto& c : cfgs) {
      const double v = c.at("lr");
      REQUIRE(v >= 1e-4);
      REQUIRE(v <= 1e-1);
      counts[std::min(2, static_cast<int>(std::floor(std::log10(v) + 4.0)))]++;
    }
    for (int k : counts) CHECK(k / 30000.0 == Approx(1.0 / 3.0).margin(0.02));
  }
  SECTION("discrete uniform") {
    const auto cfgs = sample_hyperparams({{"q", D::discrete_uniform({16, 64})}}, 4000, 12);
    int n16 = 0;
    for (const auto& c : cfgs) {
      REQUIRE((c.at("q") == 16.0 || c.at("q") == 64.0));
      n16 += c.at("q") == 16.0;
    }
    CHECK(n16 / 4000.0 == Approx(0.5).margin(0.05));
  }
  SECTION("normal takes a standard deviation") {
    const auto cfgs = sample_hyperparams({{"x", D::normal(10.0, 2.0)}}, 20000, 13);
    double s = 0.0, ss = 0.0;
    for (const auto& c : cfgs) {
      s += c.at("x");
      ss += c.at("x") * c.at("x");
    }
    const double m = s / 20000.0;
    CHECK(m == Approx(10.0).margin(0.05));
    CHECK(std::sqrt(ss / 20000.0 - m * m) == Approx(2.0).margin(0.05));
  }
  SECTION("uniform bounds in either order") {
    CHECK(D::uniform(0.1, 0.02) == D::uniform(0.02, 0.1));
    for (const auto& c : sample_hyperparams(preset_space("tadam"), 200, 14)) {
      CHECK(c.at("learning_rate") >= 0.02);
      CHECK(c.at("learning_rate") <= 0.1);
      CHECK(c.at("n_way") == 5.0);
    }
  }
  SECTION("same seed, same configurations") {
    CHECK(sample_hyperparams(preset_space("matchingnet"), 15, 3) == sample_hyperparams(preset_space("matchingnet"), 15, 3));
  }
  SECTION("invalid distributions") {
    CHECK_THROWS_AS(D::log_uniform(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(D::uniform(1.0, 1.0), DomainError);
    CHECK_THROWS_AS(D::normal(0.0, 0.0), DomainError);
    CHECK_THROWS_AS(D::discrete_uniform({}), DomainError);
    CHECK_THROWS_AS(preset_space("resnet"), UnknownNameError);
  }
}

TEST_CASE("design and space JSON round trip", "[simulate][config]") {
  auto d = small_design();
  d.rerun_mode = RerunMode::deterministic;
  d.nested = true;
  CHECK(tree_design_from_json(to_json(d)) == d);
  const auto space = preset_space("protonet");
  CHECK(hyperparam_space_from_json(to_json(space)) == space);
  CHECK_THROWS_AS(tree_design_from_json(json::parse(R"({"n_seeds": 3})")), SchemaError);
  CHECK_THROWS_AS(hyperparam_from_json(json::parse(R"({"kind": "beta"})")), SchemaError);
}
