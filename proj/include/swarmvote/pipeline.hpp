#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "ensemble.hpp"
#include "error.hpp"
#include "io.hpp"
#include "learners.hpp"
#include "metrics.hpp"
#include "rng.hpp"
#include "woa.hpp"

namespace swarmvote {

using Logger = std::function<void(const std::string&)>;

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path schema;
  std::filesystem::path output_dir = "out";
  double train_fraction = 0.75;
  std::size_t folds = 10;
  WoaParams woa;
  FitnessWeights fitness;
  LearnerParams learners;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // Tune on out-of-fold votes (grid retrained per fold) instead of votes the
  // final learners cast on their own training regions.
  bool retrain_per_fold = true;

  void validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw UsageError("cli", "train_fraction must lie in (0, 1)");
    if (folds < 2) throw UsageError("cli", "K must be ≥ 2");
    woa.validate();
    fitness.validate();
    learners.validate();
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw UsageError("cli", "unknown config key '" + where + key + "'");
  }
}

}  // namespace detail

/// Reads a JSON run config. Relative paths resolve against `base_dir`.
/// Every key is optional except dataset and schema (checked at run time).
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  try {
    detail::reject_unknown(j, {"dataset", "schema", "output_dir", "train_fraction", "folds",
                               "seed", "threads", "retrain_per_fold", "woa", "fitness", "learners"},
                           "");
    auto path = [&](const char* key, std::filesystem::path& out) {
      if (!j.contains(key)) return;
      std::filesystem::path p = j.at(key).get<std::string>();
      out = p.is_absolute() ? p : base_dir / p;
    };
    path("dataset", c.dataset);
    path("schema", c.schema);
    path("output_dir", c.output_dir);
    detail::read_opt(j, "train_fraction", c.train_fraction);
    detail::read_opt(j, "folds", c.folds);
    detail::read_opt(j, "seed", c.seed);
    detail::read_opt(j, "threads", c.threads);
    detail::read_opt(j, "retrain_per_fold", c.retrain_per_fold);
    if (j.contains("woa")) {
      const auto& w = j.at("woa");
      detail::reject_unknown(w, {"pop_size", "max_iter", "b"}, "woa.");
      detail::read_opt(w, "pop_size", c.woa.pop_size);
      detail::read_opt(w, "max_iter", c.woa.max_iter);
      detail::read_opt(w, "b", c.woa.b);
    }
    if (j.contains("fitness")) {
      const auto& f = j.at("fitness");
      detail::reject_unknown(f, {"w_accuracy", "w_precision", "w_recall"}, "fitness.");
      detail::read_opt(f, "w_accuracy", c.fitness.accuracy);
      detail::read_opt(f, "w_precision", c.fitness.precision);
      detail::read_opt(f, "w_recall", c.fitness.recall);
    }
    if (j.contains("learners")) {
      const auto& l = j.at("learners");
      detail::reject_unknown(l, {"knn", "svm", "mlp", "c45", "nb"}, "learners.");
      if (l.contains("knn")) detail::read_opt(l["knn"], "k", c.learners.knn.k);
      if (l.contains("svm")) {
        detail::read_opt(l["svm"], "lambda", c.learners.svm.lambda);
        detail::read_opt(l["svm"], "eta0", c.learners.svm.eta0);
        detail::read_opt(l["svm"], "epochs", c.learners.svm.epochs);
      }
      if (l.contains("mlp")) {
        detail::read_opt(l["mlp"], "hidden", c.learners.mlp.hidden);
        detail::read_opt(l["mlp"], "learning_rate", c.learners.mlp.learning_rate);
        detail::read_opt(l["mlp"], "epochs", c.learners.mlp.epochs);
      }
      if (l.contains("c45")) {
        detail::read_opt(l["c45"], "max_depth", c.learners.tree.max_depth);
        detail::read_opt(l["c45"], "min_samples_leaf", c.learners.tree.min_samples_leaf);
      }
      if (l.contains("nb")) detail::read_opt(l["nb"], "var_floor", c.learners.nb.var_floor);
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("cli", std::string("invalid config: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const auto text = io::read_file(path, "cli");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("cli", "config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

/// Every tunable value, for the report. Excludes threads and output_dir so
/// reports do not depend on where or how wide a run executes.
inline nlohmann::json config_echo(const RunConfig& c) {
  const auto& l = c.learners;
  return {
      {"dataset", c.dataset.filename().string()},
      {"schema", c.schema.filename().string()},
      {"train_fraction", c.train_fraction},
      {"folds", c.folds},
      {"seed", c.seed},
      {"retrain_per_fold", c.retrain_per_fold},
      {"woa", {{"pop_size", c.woa.pop_size}, {"max_iter", c.woa.max_iter}, {"b", c.woa.b}}},
      {"fitness",
       {{"w_accuracy", c.fitness.accuracy},
        {"w_precision", c.fitness.precision},
        {"w_recall", c.fitness.recall}}},
      {"learners",
       {{"knn", {{"k", l.knn.k}}},
        {"svm", {{"lambda", l.svm.lambda}, {"eta0", l.svm.eta0}, {"epochs", l.svm.epochs}}},
        {"mlp",
         {{"hidden", l.mlp.hidden},
          {"learning_rate", l.mlp.learning_rate},
          {"epochs", l.mlp.epochs}}},
        {"c45", {{"max_depth", l.tree.max_depth}, {"min_samples_leaf", l.tree.min_samples_leaf}}},
        {"nb", {{"var_floor", l.nb.var_floor}}}}}};
}

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t regions = 500;
  int class_count = 4;
  std::vector<std::size_t> channel_dims = {8, 6, 4};
  // Spread of class centres per channel; one value per channel.
  std::vector<double> separation = {1.0, 1.0, 1.0};
  double background_share = 0.3;
  std::uint64_t seed = 0;
};

/// Gaussian blobs: per channel, each class has a random centre drawn with
/// that channel's separation and unit-variance isotropic noise around it.
/// Background takes background_share of the regions, object classes split
/// the rest evenly.
inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.class_count < 1 || spec.channel_dims.empty() || spec.regions < 2)
    throw UsageError("cli", "synthetic generator needs >= 1 class, >= 1 channel, >= 2 regions");
  if (spec.separation.size() != spec.channel_dims.size())
    throw UsageError("cli", "synthetic generator needs one separation per channel");
  const auto classes = static_cast<std::size_t>(spec.class_count) + 1;

  std::vector<std::vector<std::vector<double>>> centres(spec.channel_dims.size());
  for (std::size_t i = 0; i < spec.channel_dims.size(); ++i) {
    auto rng = Xoshiro256::derive(spec.seed, {0x63656eULL, i});
    centres[i].assign(classes, std::vector<double>(spec.channel_dims[i]));
    for (auto& centre : centres[i])
      for (auto& v : centre) v = spec.separation[i] * rng.normal();
  }

  const auto background = static_cast<std::size_t>(
      std::floor(static_cast<double>(spec.regions) * spec.background_share + 0.5));
  std::vector<Label> labels;
  for (std::size_t n = 0; n < background; ++n) labels.push_back(0);
  for (std::size_t n = 0; labels.size() < spec.regions; ++n)
    labels.push_back(static_cast<Label>(1 + n % static_cast<std::size_t>(spec.class_count)));
  auto order_rng = Xoshiro256::derive(spec.seed, {0x6f7264ULL});
  shuffle(std::span<Label>(labels), order_rng);

  std::vector<LabeledRegion> regions;
  regions.reserve(spec.regions);
  for (std::size_t k = 0; k < spec.regions; ++k) {
    auto rng = Xoshiro256::derive(spec.seed, {0x72676eULL, k});
    LabeledRegion r;
    char id[32];
    std::snprintf(id, sizeof(id), "r%05zu", k);
    r.region_id = id;
    r.label = labels[k];
    for (std::size_t i = 0; i < spec.channel_dims.size(); ++i) {
      std::vector<double> x(spec.channel_dims[i]);
      const auto& centre = centres[i][static_cast<std::size_t>(r.label)];
      for (std::size_t f = 0; f < x.size(); ++f) x[f] = centre[f] + rng.normal();
      r.features.push_back(std::move(x));
    }
    regions.push_back(std::move(r));
  }
  return make_dataset(std::move(regions), spec.channel_dims, spec.class_count);
}

// ---------------------------------------------------------------------------
// Commands

/// Seeds for each pipeline stage, derived from the master seed.
struct StageSeeds {
  std::uint64_t split, learners, folds, woa;

  explicit StageSeeds(std::uint64_t master)
      : split(Xoshiro256::derive(master, {1}).next()),
        learners(Xoshiro256::derive(master, {2}).next()),
        folds(Xoshiro256::derive(master, {3}).next()),
        woa(Xoshiro256::derive(master, {4}).next()) {}
};

/// Votes for every training region from a grid that never saw it: for each
/// fold, the grid is trained on the other folds and predicts that fold.
inline PredictionCube build_out_of_fold_cube(const Dataset& train, const FoldPlan& folds,
                                             const LearnerParams& params, std::uint64_t seed,
                                             unsigned threads = 1) {
  std::vector<std::string> ids;
  for (const auto& r : train.regions) ids.push_back(r.region_id);
  PredictionCube cube(train.channel_count(), kDefaultKinds.size(), train.class_count, ids,
                      train.labels());
  for (std::size_t f = 0; f < folds.k; ++f) {
    std::vector<std::size_t> fit_idx, held_idx;
    for (std::size_t n = 0; n < folds.fold_of.size(); ++n)
      (folds.fold_of[n] == f ? held_idx : fit_idx).push_back(n);
    const auto fit_part = subset(train, fit_idx);
    const auto held_part = subset(train, held_idx);
    const auto grid = train_grid(fit_part, kDefaultKinds, params,
                                 Xoshiro256::derive(seed, {0x6f6f66ULL, f}).next(), threads);
    const auto part = build_prediction_cube(grid, held_part, threads);
    for (std::size_t n = 0; n < held_idx.size(); ++n)
      for (std::size_t i = 0; i < cube.n_fe(); ++i)
        for (std::size_t j = 0; j < cube.n_cl(); ++j)
          cube.set_label(i, j, held_idx[n], part.label(i, j, n));
  }
  return cube;
}

struct RunOutcome {
  nlohmann::json report;
  Solution solution;
  WoaResult woa;
  PredictionCube train_cube;  // votes the WOA objective was scored on
  PredictionCube test_cube;
  double test_fitness = 0.0;
  double uniform_test_fitness = 0.0;
  double best_single_test_fitness = 0.0;
};

/// Uniform weights, threshold 0.5: the unoptimized reference ensemble.
inline Solution uniform_solution(std::size_t n_fe, std::size_t n_cl) {
  return Solution{WeightMatrix(n_fe, n_cl, 1.0), 0.5};
}

inline std::vector<std::size_t> label_histogram(std::span<const Label> labels, int class_count) {
  std::vector<std::size_t> h(static_cast<std::size_t>(class_count) + 1, 0);
  for (auto l : labels) ++h[static_cast<std::size_t>(l)];
  return h;
}

/// Split, train the grid, build the training cube, tune with WOA under
/// stratified K-fold, then score the frozen ensemble on the held-out split.
/// The test cube is built only after optimization has finished.
inline RunOutcome run_on_dataset(const Dataset& data, const RunConfig& config,
                                 const Logger& log = {}) {
  config.validate();
  auto note = [&](const std::string& m) {
    if (log) log(m);
  };
  const StageSeeds seeds(config.seed);
  RunOutcome out;

  auto split = split_holdout(data, config.train_fraction, seeds.split);
  for (const auto& w : split.warnings) note("warning: " + w);
  note("split: " + std::to_string(split.train.size()) + " train / " +
       std::to_string(split.test.size()) + " test");

  const auto grid = train_grid(split.train, kDefaultKinds, config.learners, seeds.learners,
                               config.threads);
  note("trained " + std::to_string(grid.cells.size()) + " base learners");

  const auto folds = stratified_kfold(split.train, config.folds, seeds.folds);
  out.train_cube = config.retrain_per_fold
                       ? build_out_of_fold_cube(split.train, folds, config.learners,
                                                seeds.learners, config.threads)
                       : build_prediction_cube(grid, split.train, config.threads);
  const CvObjective objective(out.train_cube, folds, config.fitness);
  for (const auto& w : objective.warnings()) note("warning: " + w);

  WoaParams woa = config.woa;
  woa.seed = seeds.woa;
  woa.threads = config.threads;
  out.woa = optimize(objective, objective.dims(), woa);
  out.solution = Solution::from_flat(out.woa.best_position, grid.n_fe, grid.n_cl);
  note("woa: best cv fitness " + io::format_double(out.woa.best_fitness));

  out.test_cube = build_prediction_cube(grid, split.test, config.threads);
  const auto& truth = out.test_cube.truth();
  const int classes = data.class_count;
  const auto predicted = classify_all(out.test_cube, out.solution.weights, out.solution.threshold);
  const auto cm = confusion_matrix(predicted, truth, classes);
  out.test_fitness = fitness(cm, config.fitness);

  const auto uniform = uniform_solution(grid.n_fe, grid.n_cl);
  const auto uniform_cm = confusion_matrix(
      classify_all(out.test_cube, uniform.weights, uniform.threshold), truth, classes);
  out.uniform_test_fitness = fitness(uniform_cm, config.fitness);

  nlohmann::json singles = nlohmann::json::array();
  nlohmann::json best_single;
  out.best_single_test_fitness = -1.0;
  for (std::size_t i = 0; i < grid.n_fe; ++i)
    for (std::size_t j = 0; j < grid.n_cl; ++j) {
      std::vector<Label> votes(out.test_cube.region_count());
      for (std::size_t k = 0; k < votes.size(); ++k) votes[k] = out.test_cube.label(i, j, k);
      const auto single_cm = confusion_matrix(votes, truth, classes);
      nlohmann::json entry = {{"extractor", i},
                              {"classifier", j},
                              {"kind", to_string(kDefaultKinds[j])},
                              {"accuracy", accuracy(single_cm)},
                              {"fitness", fitness(single_cm, config.fitness)}};
      if (entry["fitness"].get<double>() > out.best_single_test_fitness) {
        out.best_single_test_fitness = entry["fitness"].get<double>();
        best_single = entry;
      }
      singles.push_back(std::move(entry));
    }

  nlohmann::json warnings = split.warnings;
  for (const auto& w : objective.warnings()) warnings.push_back(w);

  auto& r = out.report;
  r["config"] = config_echo(config);
  r["dataset"] = {{"regions", data.size()},
                  {"channels", data.channel_dims},
                  {"class_count", data.class_count},
                  {"class_counts", data.class_counts},
                  {"train_counts", split.train.class_counts},
                  {"test_counts", split.test.class_counts}};
  r["warnings"] = warnings;
  r["optimization"] = {{"cv_fitness", out.woa.best_fitness},
                       {"evaluations", out.woa.trace.evaluations},
                       {"iterations", out.woa.trace.records.size()}};
  r["solution"] = solution_to_json(out.solution);
  r["test"] = metrics_report(cm, config.fitness);
  r["baselines"] = {{"uniform_weights", {{"dth", uniform.threshold},
                                         {"accuracy", accuracy(uniform_cm)},
                                         {"fitness", out.uniform_test_fitness}}},
                    {"best_single_learner", best_single},
                    {"single_learners", singles}};
  return out;
}

inline std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

/// Full `run`: loads the dataset, runs the pipeline and writes report.json,
/// trace.csv, solution.json, cube.csv (training votes) and test_cube.csv.
inline RunOutcome cmd_run(const RunConfig& config, const Logger& log = {}) {
  config.validate();
  if (config.dataset.empty()) throw UsageError("cli", "config does not name a dataset");
  if (config.schema.empty()) throw UsageError("cli", "config does not name a schema");
  const auto schema = load_schema(config.schema);
  const auto data = load_dataset(config.dataset, schema);
  auto out = run_on_dataset(data, config, log);

  std::filesystem::create_directories(config.output_dir);
  const auto& dir = config.output_dir;
  io::write_file(dir / "report.json", dump_json(out.report), "cli");
  io::write_file(dir / "trace.csv",
                 trace_to_csv(out.woa.trace, out.train_cube.n_fe(), out.train_cube.n_cl()), "cli");
  io::write_file(dir / "solution.json", dump_json(solution_to_json(out.solution)), "cli");
  io::write_file(dir / "cube.csv", cube_to_csv(out.train_cube), "cli");
  io::write_file(dir / "test_cube.csv", cube_to_csv(out.test_cube), "cli");
  return out;
}

struct OptimizeOutcome {
  Solution solution;
  WoaResult woa;
  nlohmann::json report;
};

/// WOA tuning on an existing cube. With fewer regions than folds the fold
/// count shrinks to the region count; a single region is scored on itself.
inline OptimizeOutcome cmd_optimize(const PredictionCube& cube, std::size_t folds,
                                    std::uint64_t seed, const WoaParams& woa_params,
                                    const FitnessWeights& fw, const Logger& log = {}) {
  if (folds < 2) throw UsageError("cli", "K must be ≥ 2");
  woa_params.validate();
  fw.validate();
  auto note = [&](const std::string& m) {
    if (log) log(m);
  };
  const StageSeeds seeds(seed);
  std::vector<std::string> warnings;

  FoldPlan plan;
  const std::size_t k = std::min(folds, cube.region_count());
  if (k < folds)
    warnings.push_back("fold count reduced from " + std::to_string(folds) + " to " +
                       std::to_string(k) + " (cube has " + std::to_string(cube.region_count()) +
                       " regions)");
  if (k < 2) {
    plan = FoldPlan::single(cube.region_ids());
    warnings.push_back("single region: solution scored on the region itself");
  } else {
    plan = stratified_kfold(cube.truth(), cube.region_ids(), cube.class_count(), k, seeds.folds);
  }
  const CvObjective objective(cube, plan, fw);
  for (const auto& w : objective.warnings()) warnings.push_back(w);
  for (const auto& w : warnings) note("warning: " + w);

  OptimizeOutcome out;
  WoaParams p = woa_params;
  p.seed = seeds.woa;
  out.woa = optimize(objective, objective.dims(), p);
  out.solution = Solution::from_flat(out.woa.best_position, cube.n_fe(), cube.n_cl());
  out.report = {{"folds", plan.k},
                {"seed", seed},
                {"woa", {{"pop_size", p.pop_size}, {"max_iter", p.max_iter}, {"b", p.b}}},
                {"fitness",
                 {{"w_accuracy", fw.accuracy},
                  {"w_precision", fw.precision},
                  {"w_recall", fw.recall}}},
                {"cv_fitness", out.woa.best_fitness},
                {"evaluations", out.woa.trace.evaluations},
                {"warnings", warnings},
                {"solution", solution_to_json(out.solution)}};
  return out;
}

/// Applies a frozen solution to a cube and reports the metrics.
inline nlohmann::json cmd_evaluate(const PredictionCube& cube, const Solution& solution,
                                   const FitnessWeights& fw) {
  if (solution.weights.n_fe() != cube.n_fe() || solution.weights.n_cl() != cube.n_cl())
    throw DataError("cli", "solution grid " + std::to_string(solution.weights.n_fe()) + "x" +
                               std::to_string(solution.weights.n_cl()) +
                               " does not match cube grid " + std::to_string(cube.n_fe()) + "x" +
                               std::to_string(cube.n_cl()));
  const auto predicted = classify_all(cube, solution.weights, solution.threshold);
  const auto cm = confusion_matrix(predicted, cube.truth(), cube.class_count());
  return metrics_report(cm, fw);
}

}  // namespace swarmvote
