#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "support/fixtures.hpp"

using namespace lmmvar;
using Catch::Approx;

namespace {

struct Case {
  Dataset data;
  ModelSpec spec;
};

std::vector<Case> cases() {
  return {{fixtures::fixture_a(), fixtures::spec_model_only({"seed"})},
          {fixtures::fixture_b(), fixtures::spec_model_only({"seed", "hparams"})},
          {fixtures::fixture_c(), fixtures::spec_model_only({"seed", "hparams"})}};
}

}  // namespace

TEST_CASE("OLS on a two-group example", "[lmm][ols]") {
  const auto d = Dataset::from_records({{"a", "x", "1", "c", "r1", 1.0},
                                        {"a", "x", "2", "c", "r2", 3.0},
                                        {"b", "x", "1", "c", "r3", 4.0},
                                        {"b", "x", "2", "c", "r4", 8.0}});
  const auto dm = build_design(d, fixtures::spec_model_only({}));
  const auto ols = fit_ols(dm, fixtures::response(d));
  CHECK(ols.beta(0) == Approx(2.0));
  CHECK(ols.beta(1) == Approx(4.0));
  CHECK(ols.rss == Approx(10.0));
  CHECK(ols.sigma2 == Approx(5.0));
  CHECK(ols.loglik == Approx(-2.0 * (std::log(2.0 * std::numbers::pi * 2.5) + 1.0)));
}

TEST_CASE("OLS solves the normal equations", "[lmm][ols]") {
  const auto d = fixtures::fixture_b();
  const auto dm = build_design(d, fixtures::spec_model_only({}));
  const auto y = fixtures::response(d);
  const auto ols = fit_ols(dm, y);
  const Eigen::VectorXd ne = (dm.X.transpose() * dm.X).ldlt().solve(dm.X.transpose() * y);
  CHECK((ols.beta - ne).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("REML deviance matches the dense formula", "[lmm][oracle]") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (const auto& c : cases()) {
    const auto dm = build_design(c.data, c.spec);
    const auto y = fixtures::response(c.data);
    const auto blocks = fixtures::block_of_columns(dm);
    const auto Z = dm.dense_z();
    const auto k = static_cast<Eigen::Index>(dm.z_blocks.size());
    CHECK(reml_deviance(dm, y, Eigen::VectorXd::Ones(k)) ==
          Approx(fixtures::dense_reml_deviance(dm.X, Z, blocks, y, Eigen::VectorXd::Ones(k))).epsilon(1e-10));
    for (int i = 0; i < 10; ++i) {
      Eigen::VectorXd th(k);
      for (Eigen::Index j = 0; j < k; ++j) th(j) = u(rng);
      CHECK(std::fabs(reml_deviance(dm, y, th) - fixtures::dense_reml_deviance(dm.X, Z, blocks, y, th)) < 1e-8);
    }
  }
}

TEST_CASE("theta = 0 reduces to the linear model", "[lmm]") {
  const auto d = fixtures::fixture_a();
  const auto dm = build_design(d, fixtures::spec_model_only({"seed"}));
  const auto y = fixtures::response(d);
  const auto ols = fit_ols(dm, y);
  const double n = static_cast<double>(dm.n()), p = static_cast<double>(dm.p());
  const double ml = n * (1.0 + std::log(2.0 * std::numbers::pi * ols.rss / n));
  CHECK(ml_deviance(dm, y, Eigen::VectorXd::Zero(1)) == Approx(ml).epsilon(1e-12));
  CHECK(-0.5 * ml == Approx(ols.loglik).epsilon(1e-12));
  const double logdet_xtx = (dm.X.transpose() * dm.X).ldlt().vectorD().array().log().sum();
  const double reml = logdet_xtx + (n - p) * (1.0 + std::log(2.0 * std::numbers::pi * ols.rss / (n - p)));
  CHECK(reml_deviance(dm, y, Eigen::VectorXd::Zero(1)) == Approx(reml).epsilon(1e-12));
}

TEST_CASE("fitted deviance beats a grid search", "[lmm][oracle]") {
  for (const auto& c : cases()) {
    const auto dm = build_design(c.data, c.spec);
    const auto y = fixtures::response(c.data);
    const auto f = fit_lmm(dm, y);
    CHECK(f.converged);
    CHECK(f.deviance <= fixtures::grid_min_reml(dm, y, 50, 5.0) + 1e-6);
    CHECK(f.deviance == Approx(reml_deviance(dm, y, f.theta)).epsilon(1e-14));
    CHECK(f.loglik == Approx(-0.5 * f.deviance));
  }
}

TEST_CASE("balanced one-way REML equals method of moments", "[lmm][oracle]") {
  const auto d = fixtures::balanced_one_way(6, 5, 1.0, 0.7, 3);
  const auto [msb, msw] = fixtures::one_way_mean_squares(d, "seed");
  REQUIRE(msb > msw);
  const auto f = fit_lmm(d, fixtures::spec_model_only({"seed"}));
  CHECK(f.vc.sigma2_eps == Approx(msw).epsilon(1e-6));
  CHECK(f.vc.factors[0].sigma2 == Approx((msb - msw) / 5.0).epsilon(1e-6));
  CHECK(f.npar == 3);
}

TEST_CASE("no between-group signal gives a zero variance", "[lmm]") {
  // Group means identical by construction.
  std::vector<ExperimentRecord> recs;
  const double offs[] = {-1.0, 0.5, 0.5};
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 3; ++k) recs.push_back({"m", "o", "s" + std::to_string(j), "c", "r" + std::to_string(k), 2.0 + offs[k] * (j % 2 ? 1 : -1)});
  const auto f = fit_lmm(Dataset::from_records(recs), fixtures::spec_model_only({"seed"}));
  CHECK(f.vc.factors[0].sigma2 == Approx(0.0).margin(1e-10));
  CHECK(f.vc.sigma2_eps > 0.0);
}

TEST_CASE("AIC", "[lmm]") {
  CHECK(aic(14, 2493.680) == Approx(-4959.361).margin(1e-3));
  CHECK(aic(14, 1854.749) == Approx(-3681.498).margin(1e-3));
  CHECK(aic(3, 0.0) == 6.0);
}

TEST_CASE("dropping and re-adding a random factor", "[lmm]") {
  ModelSpec spec;
  const auto dropped = drop_random_factor(spec, "seed");
  CHECK(dropped.random_factors == std::vector<std::string>{"hparams"});
  CHECK(add_random_factor(dropped, "seed", 0).random_factors == spec.random_factors);
  CHECK_THROWS_AS(drop_random_factor(spec, "rerun"), UnknownNameError);
  CHECK_THROWS_AS(add_random_factor(spec, "seed"), SchemaError);
}

TEST_CASE("invariances of the fit", "[lmm][property]") {
  const auto base = fixtures::fixture_b();
  const auto spec = fixtures::spec_model_only({"seed", "hparams"});
  const auto f0 = fit_lmm(base, spec);

  SECTION("shift") {
    auto recs = base.records();
    for (auto& r : recs) r.metric += 123.0;
    const auto f = fit_lmm(Dataset::from_records(recs), spec);
    CHECK(f.vc.factors[0].sigma2 == Approx(f0.vc.factors[0].sigma2).epsilon(1e-6));
    CHECK(f.vc.factors[1].sigma2 == Approx(f0.vc.factors[1].sigma2).epsilon(1e-6));
    CHECK(f.beta(0) == Approx(f0.beta(0) + 123.0).epsilon(1e-9));
    CHECK(f.beta(1) == Approx(f0.beta(1)).epsilon(1e-6));
  }
  SECTION("scale") {
    auto recs = base.records();
    for (auto& r : recs) r.metric *= 0.01;
    const auto f = fit_lmm(Dataset::from_records(recs), spec);
    CHECK(f.vc.sigma2_eps == Approx(1e-4 * f0.vc.sigma2_eps).epsilon(1e-6));
    CHECK(f.vc.factors[1].sigma2 == Approx(1e-4 * f0.vc.factors[1].sigma2).epsilon(1e-6));
    CHECK(f.theta(1) == Approx(f0.theta(1)).epsilon(1e-5));
  }
  SECTION("row permutation") {
    auto recs = base.records();
    std::mt19937_64 rng(1);
    std::shuffle(recs.begin(), recs.end(), rng);
    const auto f = fit_lmm(Dataset::from_records(recs), spec);
    CHECK(f.deviance == Approx(f0.deviance).epsilon(1e-10));
    CHECK((f.beta - f0.beta).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("no random factor: the fit is OLS", "[lmm]") {
  const auto d = fixtures::fixture_a();
  const auto dm = build_design(d, fixtures::spec_model_only({}));
  const auto y = fixtures::response(d);
  const auto f = fit_lmm(dm, y, Criterion::ML);
  const auto ols = fit_ols(dm, y);
  CHECK((f.beta - ols.beta).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(f.loglik == Approx(ols.loglik).epsilon(1e-12));
  CHECK(f.npar == static_cast<int>(dm.p()) + 1);
}

TEST_CASE("BLUPs", "[lmm]") {
  const auto d = fixtures::balanced_one_way(6, 5, 1.0, 0.7, 3);
  const auto f = fit_lmm(d, fixtures::spec_model_only({"seed"}));
  REQUIRE(f.blups.size() == 6);
  // Balanced, intercept-only: modes sum to zero and shrink group deviations.
  CHECK(std::fabs(f.blups.sum()) < 1e-8);
  std::vector<double> means(6, 0.0);
  for (std::size_t i = 0; i < d.n(); ++i) means[static_cast<std::size_t>(d.codes("seed")[i])] += d.records()[i].metric / 5.0;
  const double grand = f.beta(0);
  const double shrink = f.vc.factors[0].sigma2 / (f.vc.factors[0].sigma2 + f.vc.sigma2_eps / 5.0);
  for (int j = 0; j < 6; ++j) CHECK(f.blups(j) == Approx(shrink * (means[static_cast<std::size_t>(j)] - grand)).epsilon(1e-8));
}

TEST_CASE("ML and REML differ by the fixed-effects correction", "[lmm]") {
  const auto d = fixtures::fixture_a();
  const auto reml = fit_lmm(d, fixtures::spec_model_only({"seed"}), Criterion::REML);
  const auto ml = fit_lmm(d, fixtures::spec_model_only({"seed"}), Criterion::ML);
  CHECK(ml.vc.sigma2_eps < reml.vc.sigma2_eps);
  CHECK(ml.criterion == Criterion::ML);
}

TEST_CASE("constant weights only rescale the residual variance", "[lmm]") {
  const auto d = fixtures::fixture_a();
  const auto dm = build_design(d, fixtures::spec_model_only({"seed"}));
  const auto y = fixtures::response(d);
  FitOptions o;
  o.weights = Eigen::VectorXd::Constant(dm.n(), 4.0);
  const auto fw = fit_lmm(dm, y, Criterion::REML, o);
  const auto f = fit_lmm(dm, y);
  CHECK(fw.vc.sigma2_eps == Approx(4.0 * f.vc.sigma2_eps).epsilon(1e-6));
  CHECK(fw.theta(0) == Approx(0.5 * f.theta(0)).epsilon(1e-5));
  CHECK((fw.beta - f.beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("estimation errors", "[lmm]") {
  SECTION("constant response") {
    std::vector<ExperimentRecord> recs;
    for (int i = 0; i < 6; ++i) recs.push_back({"m", "o", "s" + std::to_string(i % 3), "c", "r" + std::to_string(i), 0.5});
    CHECK_THROWS_AS(fit_lmm(Dataset::from_records(recs), fixtures::spec_model_only({"seed"})), DegenerateVarianceError);
  }
  SECTION("as many fixed effects as observations") {
    const auto d = Dataset::from_records({{"a", "o", "1", "c", "r", 0.1}, {"b", "o", "2", "c", "r", 0.2}});
    CHECK_THROWS_AS(fit_lmm(d, fixtures::spec_model_only({"seed"})), InsufficientDataError);
  }
}
