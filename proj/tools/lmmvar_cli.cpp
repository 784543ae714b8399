// lmmvar: variance-source analysis of machine-learning experiment results.
//
//   lmmvar fit           --input runs.csv --output-dir out/
//   lmmvar ranova        --input runs.csv
//   lmmvar anova         --input runs.csv
//   lmmvar contrasts     --input runs.csv [--vs reference] [--levels a:x,b:y] [--pair "a:x,b:x"]
//   lmmvar simulate      --input design.json --output-dir out/ [--seed 7]
//   lmmvar sample-hparams (--space space.json | --preset matchingnet) -n 15 --seed 3
//   lmmvar boxplot-data  --input runs.csv
//
// Exit codes: 0 success, 1 statistical or convergence failure, 2 I/O or schema error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lmmvar/lmmvar.hpp"

namespace fs = std::filesystem;
using namespace lmmvar;

namespace {

struct Settings {
  std::string input;
  std::string output_dir = ".";
  std::string format = "both";
  std::optional<std::uint64_t> seed;
  std::string criterion = "reml";
  double tol = 1e-8;
  int max_evals = 500;
  std::vector<double> multistart = {0.1, 1.0, 10.0};
  bool boundary_correction = false;
  double confidence = 0.95;
  std::string config_path;

  std::string fixed = "model:optimizer";
  std::vector<std::string> random = {"seed", "hparams"};
  std::string coding = "treatment";
  bool no_intercept = false;
  ColumnMap columns;

  // contrasts
  std::string vs = "grand-mean";
  std::vector<std::string> levels;
  std::vector<std::string> pairs;

  // sample-hparams
  std::string space_path;
  std::string preset;
  int n_configs = 15;
};

// Values present in the config file replace whatever the flags set.
void apply_config(Settings& s, const json& j) {
  auto take = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw SchemaError(std::string("config: field '") + key + "' has the wrong type");
    }
  };
  take("input", s.input);
  take("output_dir", s.output_dir);
  take("format", s.format);
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  take("criterion", s.criterion);
  take("tol", s.tol);
  take("max_evals", s.max_evals);
  take("multistart", s.multistart);
  take("boundary_correction", s.boundary_correction);
  take("confidence", s.confidence);
  take("fixed", s.fixed);
  take("random", s.random);
  take("coding", s.coding);
  if (j.contains("intercept")) s.no_intercept = !j.at("intercept").get<bool>();
  take("vs", s.vs);
  take("levels", s.levels);
  take("pairs", s.pairs);
  take("space", s.space_path);
  take("preset", s.preset);
  take("n", s.n_configs);
  if (j.contains("columns")) {
    const auto& c = j.at("columns");
    auto col = [&](const char* key, std::string& field) {
      if (c.contains(key)) field = c.at(key).get<std::string>();
    };
    col("model", s.columns.model);
    col("optimizer", s.columns.optimizer);
    col("seed", s.columns.seed);
    col("hparams", s.columns.hparam_config);
    col("rerun", s.columns.rerun);
    col("response", s.columns.metric);
  }
}

ModelSpec model_spec(const Settings& s) {
  ModelSpec spec;
  spec.columns = s.columns;
  spec.fixed_factor = s.fixed;
  spec.random_factors = s.random;
  if (s.coding == "treatment") spec.contrast_coding = ContrastCoding::treatment;
  else if (s.coding == "sum") spec.contrast_coding = ContrastCoding::sum_to_zero;
  else throw SchemaError("unknown contrast coding '" + s.coding + "' (expected treatment or sum)");
  spec.include_intercept = !s.no_intercept;
  spec.validate();
  return spec;
}

Criterion criterion(const Settings& s) {
  if (s.criterion == "reml") return Criterion::REML;
  if (s.criterion == "ml") return Criterion::ML;
  throw SchemaError("unknown criterion '" + s.criterion + "' (expected reml or ml)");
}

FitOptions fit_options(const Settings& s) {
  FitOptions o;
  o.tol = s.tol;
  o.max_evals_per_dim = s.max_evals;
  o.multistart = s.multistart;
  return o;
}

void check_settings(const Settings& s) {
  if (s.format != "csv" && s.format != "json" && s.format != "both")
    throw SchemaError("unknown format '" + s.format + "' (expected csv, json or both)");
  if (!(s.confidence > 0.0 && s.confidence < 1.0)) throw SchemaError("--confidence must lie in (0, 1)");
}

fs::path out_dir(const Settings& s) {
  fs::path dir(s.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(s.output_dir, "create directory");
  return dir;
}

void emit(const Settings& s, const ReportTable& t, const std::string& stem) {
  const auto dir = out_dir(s);
  if (s.format == "csv" || s.format == "both") {
    const auto path = (dir / (stem + ".csv")).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path, "write");
    write_table_csv(t, out);
  }
  if (s.format == "json" || s.format == "both") write_json_file(table_json(t), (dir / (stem + ".json")).string());
  write_table_csv(t, std::cout);
}

struct Loaded {
  Dataset data;
  DesignMatrices dm;
  Eigen::VectorXd y;
};

Loaded load(const Settings& s) {
  if (s.input.empty()) throw SchemaError("--input is required");
  const auto spec = model_spec(s);
  auto d = load_csv(s.input, spec);
  auto dm = build_design(d, spec);
  const auto ys = d.metrics();
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  return {std::move(d), std::move(dm), std::move(y)};
}

int warn_unconverged(bool converged, const char* what) {
  if (converged) return 0;
  std::cerr << "warning: " << what << " hit the evaluation cap before converging\n";
  return 1;
}

int cmd_fit(const Settings& s) {
  auto in = load(s);
  const auto f = fit_lmm(in.dm, in.y, criterion(s), fit_options(s));
  emit(s, variance_table(f), "random_effects");
  emit(s, fixed_effects_table(f), "fixed_effects");
  return warn_unconverged(f.converged, "fit");
}

int cmd_ranova(const Settings& s) {
  auto in = load(s);
  RanovaOptions o;
  o.criterion = criterion(s);
  o.boundary_correction = s.boundary_correction;
  o.fit = fit_options(s);
  const auto r = ranova(in.dm, in.y, o);
  emit(s, ranova_table(r), "ranova");
  bool ok = r.full_converged;
  for (const auto& row : r.rows) ok = ok && row.converged;
  return warn_unconverged(ok, "ranova");
}

int cmd_anova(const Settings& s) {
  auto in = load(s);
  const auto hyp = term_hypothesis(in.dm);
  const auto f = fit_lmm(in.dm, in.y, criterion(s), fit_options(s));
  emit(s, anova_table(anova_fixed(f, hyp.L, in.dm.fixed_factor)), "anova");
  return warn_unconverged(f.converged, "fit");
}

int cmd_contrasts(const Settings& s) {
  auto in = load(s);
  ContrastMatrix cm;
  if (!s.pairs.empty()) {
    cm.L.resize(static_cast<Eigen::Index>(s.pairs.size()), in.dm.p());
    for (std::size_t i = 0; i < s.pairs.size(); ++i) {
      const auto& pr = s.pairs[i];
      const auto comma = pr.find(',');
      if (comma == std::string::npos) throw SchemaError("--pair expects 'LEVEL_A,LEVEL_B', got '" + pr + "'");
      const auto a = pr.substr(0, comma), b = pr.substr(comma + 1);
      cm.L.row(static_cast<Eigen::Index>(i)) = difference_row(in.dm, a, b);
      cm.labels.push_back(a + " - " + b);
    }
  } else {
    ContrastTarget target;
    if (s.vs == "grand-mean") target = ContrastTarget::grand_mean;
    else if (s.vs == "reference") target = ContrastTarget::reference;
    else throw SchemaError("unknown --vs '" + s.vs + "' (expected grand-mean or reference)");
    cm = contrast_rows(in.dm, s.levels.empty() ? in.dm.fixed_levels : s.levels, target);
  }
  const auto f = fit_lmm(in.dm, in.y, criterion(s), fit_options(s));
  emit(s, contrasts_table(contrasts(f, cm, s.confidence), s.confidence), "contrasts");
  return warn_unconverged(f.converged, "fit");
}

int cmd_simulate(const Settings& s) {
  if (s.input.empty()) throw SchemaError("--input (design JSON) is required");
  const auto j = read_json_file(s.input);
  auto design = tree_design_from_json(j);
  if (s.seed) design.generator_seed = *s.seed;
  SimulationTruth truth;
  const auto data = generate(design, &truth, s.columns);
  const auto dir = out_dir(s);
  write_csv(data, (dir / "data.csv").string());
  write_json_file(truth_json(design, truth), (dir / "truth.json").string());
  if (j.contains("hparam_space")) {
    const auto space = hyperparam_space_from_json(j.at("hparam_space"));
    const auto n = static_cast<std::size_t>(design.nested ? design.n_seeds * design.n_configs : design.n_configs);
    const auto configs = sample_hyperparams(space, n, design.generator_seed);
    auto t = hyperparams_table(configs);
    if (design.nested) {
      // Labels follow the nested "sNN-cMM" convention of the generated data.
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const int si = static_cast<int>(i) / design.n_configs, ci = static_cast<int>(i) % design.n_configs;
        t.rows[i][0] = detail::indexed_label('s', si, design.n_seeds) + "-" +
                       detail::indexed_label('c', ci, design.n_configs);
      }
    }
    write_json_file(table_json(t), (dir / "hparams.json").string());
  }
  std::cout << "wrote " << data.n() << " records to " << (dir / "data.csv").string() << "\n";
  return 0;
}

int cmd_sample_hparams(const Settings& s) {
  HyperparamSpace space;
  if (!s.space_path.empty()) space = hyperparam_space_from_json(read_json_file(s.space_path));
  else if (!s.preset.empty()) space = preset_space(s.preset);
  else throw SchemaError("sample-hparams needs --space FILE or --preset NAME");
  if (s.n_configs < 1) throw SchemaError("-n must be >= 1");
  const auto configs = sample_hyperparams(space, static_cast<std::size_t>(s.n_configs), s.seed.value_or(0));
  emit(s, hyperparams_table(configs), "hparams");
  return 0;
}

int cmd_boxplot_data(const Settings& s) {
  if (s.input.empty()) throw SchemaError("--input is required");
  const auto d = load_csv(s.input, model_spec(s));
  emit(s, boxplot_table(boxplot_data(d)), "boxplot");
  return 0;
}

void report_error(const char* kind, const std::string& msg) {
  json j = {{"error", {{"kind", kind}, {"message", msg}}}};
  std::cerr << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variance-source analysis of ML experiment results with linear mixed models"};
  app.require_subcommand(1);
  app.fallthrough();
  Settings s;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--input,-i", s.input, "Input file (results CSV, or design JSON for simulate)");
    sub->add_option("--output-dir,-o", s.output_dir, "Directory for report files");
    sub->add_option("--format", s.format, "Report format: csv, json or both");
    sub->add_option("--seed", s.seed, "Generator seed");
    sub->add_option("--config", s.config_path, "JSON config file; its values override flags");
  };
  auto add_model = [&](CLI::App* sub) {
    sub->add_option("--criterion", s.criterion, "reml or ml");
    sub->add_option("--tol", s.tol, "Convergence tolerance on the deviance");
    sub->add_option("--max-evals", s.max_evals, "Deviance evaluation cap per variance parameter");
    sub->add_option("--multistart", s.multistart, "Starting values of the relative standard deviations")->delimiter(',');
    sub->add_option("--confidence", s.confidence, "Confidence level for intervals");
    sub->add_flag("--boundary-correction", s.boundary_correction, "Use the 50:50 chi-square mixture for random-effect LRTs");
    sub->add_option("--fixed", s.fixed, "Fixed factor; 'a:b' builds the interaction of a and b");
    sub->add_option("--random", s.random, "Random grouping factors")->delimiter(',');
    sub->add_option("--coding", s.coding, "Contrast coding: treatment or sum");
    sub->add_flag("--no-intercept", s.no_intercept, "Cell-means parameterization");
    sub->add_option("--col-model", s.columns.model, "Model column");
    sub->add_option("--col-optimizer", s.columns.optimizer, "Optimizer column");
    sub->add_option("--col-seed", s.columns.seed, "Seed column");
    sub->add_option("--col-hparams", s.columns.hparam_config, "Hyper-parameter configuration column");
    sub->add_option("--col-rerun", s.columns.rerun, "Rerun column");
    sub->add_option("--response", s.columns.metric, "Response column");
  };

  auto* fit = app.add_subcommand("fit", "Fit the mixed model; report variance components and fixed effects");
  auto* ran = app.add_subcommand("ranova", "Likelihood-ratio test for each random effect");
  auto* ano = app.add_subcommand("anova", "F test of the fixed factor with Satterthwaite df");
  auto* con = app.add_subcommand("contrasts", "Level contrasts with standard errors and confidence intervals");
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic experiment tree");
  auto* hp = app.add_subcommand("sample-hparams", "Sample hyper-parameter configurations");
  auto* box = app.add_subcommand("boxplot-data", "Five-number summaries per (model, optimizer, config, seed)");
  // Global flags: accepted before or after the subcommand.
  add_common(&app);
  add_model(&app);
  con->add_option("--vs", s.vs, "grand-mean or reference");
  con->add_option("--levels", s.levels, "Levels to contrast (default: all)")->delimiter(',');
  con->add_option("--pair", s.pairs, "Pairwise difference 'LEVEL_A,LEVEL_B' (repeatable)");
  hp->add_option("--space", s.space_path, "JSON hyper-parameter space");
  hp->add_option("--preset", s.preset, "Built-in space: tadam, protonet, matchingnet");
  hp->add_option("-n", s.n_configs, "Number of configurations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!s.config_path.empty()) apply_config(s, read_json_file(s.config_path));
    check_settings(s);
    if (fit->parsed()) return cmd_fit(s);
    if (ran->parsed()) return cmd_ranova(s);
    if (ano->parsed()) return cmd_anova(s);
    if (con->parsed()) return cmd_contrasts(s);
    if (sim->parsed()) return cmd_simulate(s);
    if (hp->parsed()) return cmd_sample_hparams(s);
    if (box->parsed()) return cmd_boxplot_data(s);
  } catch (const DataError& e) {
    report_error("data", e.what());
    return 2;
  } catch (const StatsError& e) {
    report_error("statistical", e.what());
    return 1;
  } catch (const json::exception& e) {
    report_error("data", e.what());
    return 2;
  }
  return 0;
}
