// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>

#include "oracle.hpp"
#include "test_support.hpp"

using namespace swarmvote;
using swarmvote::testing::fixture;
using swarmvote::testing::random_cube;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const FitnessWeights kDefaultWeights{0.5, 0.3, 0.2};

Outcome score_normalization() {
  const auto t0 = Clock::now();
  Xoshiro256 rng(101);
  double worst = 0.0;
  const int instances = 2000;
  for (int n = 0; n < instances; ++n) {
    const int classes = 1 + static_cast<int>(rng.below(6));
    const auto cube = random_cube(rng, 1 + rng.below(4), 1 + rng.below(6), classes, 20);
    std::vector<double> w(cube.learner_count());
    for (auto& v : w) v = rng.uniform();
    w[rng.below(w.size())] = std::max(w[0], 1e-3);
    const WeightMatrix weights(cube.n_fe(), cube.n_cl(), w);
    for (std::size_t k = 0; k < cube.region_count(); ++k) {
      double sum = 0.0;
      for (double s : aggregate_scores(cube, k, weights)) sum += s;
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && secs < 5.0,
          std::to_string(instances) + " instances, max |sum-1| = " + fmt("%.3g", worst) +
              ", " + fmt("%.2f", secs) + " s (limit 1e-12, 5 s)"};
}

Outcome scale_invariance() {
  Xoshiro256 rng(202);
  int mismatches = 0, trials = 0;
  for (int n = 0; n < 1000; ++n) {
    const auto cube = random_cube(rng, 3, 5, 4, 30);
    std::vector<double> w(15);
    for (auto& v : w) v = rng.uniform();
    const double dth = rng.uniform();
    const auto base = classify_all(cube, WeightMatrix(3, 5, w), dth);
    for (double lambda : {0.1, 0.5, 2.0}) {
      auto scaled = w;
      if (lambda > 1.0)
        for (auto& v : scaled) v *= 0.5;  // keep λ·w inside [0, 1]
      const auto reference = lambda > 1.0 ? classify_all(cube, WeightMatrix(3, 5, scaled), dth) : base;
      for (auto& v : scaled) v *= lambda;
      ++trials;
      if (classify_all(cube, WeightMatrix(3, 5, scaled), dth) != reference) ++mismatches;
    }
  }
  return {mismatches == 0,
          std::to_string(trials) + " scaled comparisons, " + std::to_string(mismatches) +
              " mismatches (exact match required)"};
}

Outcome metrics_fixture() {
  const auto cube = ingest_prediction_cube(fixture("fixture12_cube.csv"));
  const auto sol = load_solution(fixture("fixture12_solution.json"));
  const auto predicted = classify_all(cube, sol.weights, sol.threshold);
  const auto cm = confusion_matrix(predicted, cube.truth(), cube.class_count());
  // Hand-computed from the fixture with exact fractions.
  const double want[4] = {2.0 / 3.0, 19.0 / 30.0, 5.0 / 8.0, 389.0 / 600.0};
  const double got[4] = {accuracy(cm), precision_avg(cm), recall_avg(cm), fitness(cm, kDefaultWeights)};
  double worst = 0.0;
  for (int n = 0; n < 4; ++n) worst = std::max(worst, std::abs(got[n] - want[n]));
  return {worst <= 1e-12, "accuracy " + fmt("%.15g", got[0]) + ", precision " +
                              fmt("%.15g", got[1]) + ", recall " + fmt("%.15g", got[2]) +
                              ", fitness " + fmt("%.15g", got[3]) + ", max error " +
                              fmt("%.3g", worst) + " (limit 1e-12)"};
}

Outcome woa_sphere() {
  const auto t0 = Clock::now();
  int reached = 0, non_monotone = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    WoaParams p;
    p.pop_size = 50;
    p.max_iter = 500;
    p.b = 1.0;
    p.seed = seed;
    const auto r = optimize(
        [](std::span<const double> x) {
          double s = 0;
          for (double v : x) s += (v - 0.5) * (v - 0.5);
          return -s;
        },
        16, p);
    const double objective = -r.best_fitness;
    worst = std::max(worst, objective);
    if (objective <= 1e-3) ++reached;
    for (std::size_t t = 1; t < r.trace.records.size(); ++t)
      if (r.trace.records[t].best_fitness < r.trace.records[t - 1].best_fitness) {
        ++non_monotone;
        break;
      }
  }
  const double secs = seconds_since(t0);
  return {reached >= 95 && non_monotone == 0 && secs < 60.0,
          std::to_string(reached) + "/100 runs reach <= 1e-3 (worst " + fmt("%.3g", worst) +
              "), " + std::to_string(non_monotone) + " non-monotone traces, " +
              fmt("%.2f", secs) + " s (need >= 95, limit 60 s)"};
}

Outcome woa_vs_grid_oracle() {
  const auto t0 = Clock::now();
  const auto cube = ingest_prediction_cube(fixture("fixture12_cube.csv"));
  const auto plan = oracle::fixture_folds(cube);
  const auto best = oracle::grid_search(cube, plan, kDefaultWeights);
  const CvObjective objective(cube, plan, kDefaultWeights);
  int hits = 0;
  double worst = 1.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    WoaParams p;
    p.pop_size = 50;
    p.max_iter = 200;
    p.seed = seed;
    const auto r = optimize(objective, objective.dims(), p);
    worst = std::min(worst, r.best_fitness);
    if (r.best_fitness >= best.fitness - 0.01) ++hits;
  }
  const double secs = seconds_since(t0);
  return {hits >= 95 && secs < 120.0,
          "oracle " + fmt("%.6f", best.fitness) + ", " + std::to_string(hits) +
              "/100 seeds within 0.01 (worst " + fmt("%.6f", worst) + "), " + fmt("%.2f", secs) +
              " s (need >= 95, limit 120 s)"};
}

Outcome ensemble_direction() {
  bool pass = true;
  std::string detail;
  double slowest = 0.0, worst_single = 1.0, worst_uniform = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto t0 = Clock::now();
    SyntheticSpec spec;
    spec.seed = seed;
    const auto data = generate_synthetic(spec);
    RunConfig config;
    config.seed = seed;
    const auto out = run_on_dataset(data, config);
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);
    const double d_single = out.test_fitness - out.best_single_test_fitness;
    const double d_uniform = out.test_fitness - out.uniform_test_fitness;
    worst_single = std::min(worst_single, d_single);
    worst_uniform = std::min(worst_uniform, d_uniform);
    const bool ok = d_single >= -0.01 && d_uniform >= -0.01 && secs < 300.0;
    pass = pass && ok;
    if (!ok)
      detail += " seed " + std::to_string(seed) + " failed (woa " + fmt("%.4f", out.test_fitness) +
                ", best single " + fmt("%.4f", out.best_single_test_fitness) + ", uniform " +
                fmt("%.4f", out.uniform_test_fitness) + ");";
  }
  return {pass, "10 seeds, min(woa - best single) " + fmt("%+.4f", worst_single) +
                    ", min(woa - uniform) " + fmt("%+.4f", worst_uniform) + ", slowest seed " +
                    fmt("%.2f", slowest) + " s (margin -0.01, limit 300 s)" + detail};
}

Outcome split_accounting() {
  // Per-class region counts, background first.
  const std::vector<std::size_t> counts = {4905, 4479, 780, 2629, 82};
  const auto ds = swarmvote::testing::counts_dataset(counts, 7);
  const auto split = split_holdout(ds, 0.75, 99);
  bool conserved = true;
  for (std::size_t c = 0; c < counts.size(); ++c)
    conserved = conserved && split.train.class_counts[c] + split.test.class_counts[c] == counts[c];
  const double train = static_cast<double>(split.train.regions.size());
  const double test = static_cast<double>(split.test.regions.size());
  const double train_dev = std::abs(train - 9657.0) / 9657.0;
  const double test_dev = std::abs(test - 3218.0) / 3218.0;
  return {conserved && train_dev <= 0.005 && test_dev <= 0.005,
          "train " + fmt("%.0f", train) + " (" + fmt("%.3f", 100 * train_dev) + "%), test " +
              fmt("%.0f", test) + " (" + fmt("%.3f", 100 * test_dev) +
              "%), per-class conservation " + (conserved ? "exact" : "BROKEN") +
              " (limit 0.5%)"};
}

Outcome run_determinism() {
  const auto dir = swarmvote::testing::scratch_dir("acceptance_determinism");
  SyntheticSpec spec;
  spec.seed = 42;
  const auto ds = generate_synthetic(spec);
  io::write_file(dir / "dataset.csv", dataset_to_csv(ds), "test");
  io::write_file(dir / "schema.json", schema_to_json(Schema{ds.channel_dims, ds.class_count}).dump(2), "test");
  RunConfig config;
  config.dataset = dir / "dataset.csv";
  config.schema = dir / "schema.json";
  config.seed = 42;
  config.woa.max_iter = 100;

  const unsigned wide = std::max(2u, std::min(8u, std::thread::hardware_concurrency()));
  std::vector<std::pair<std::string, std::string>> outputs;
  for (unsigned threads : {1u, 1u, wide, wide}) {
    config.threads = threads;
    config.output_dir = dir / ("out" + std::to_string(outputs.size()));
    cmd_run(config);
    outputs.emplace_back(io::read_file(config.output_dir / "report.json", "test"),
                         io::read_file(config.output_dir / "trace.csv", "test"));
  }
  bool same = true;
  for (const auto& o : outputs) same = same && o == outputs.front();
  return {same, "4 runs (threads 1, 1, " + std::to_string(wide) + ", " + std::to_string(wide) +
                    "): report.json and trace.csv " + (same ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"score normalization", score_normalization},
      {"scale invariance", scale_invariance},
      {"metrics fixture", metrics_fixture},
      {"woa sphere", woa_sphere},
      {"woa vs grid oracle", woa_vs_grid_oracle},
      {"ensemble vs single and uniform", ensemble_direction},
      {"split accounting", split_accounting},
      {"run determinism", run_determinism},
  };
  int failures = 0, id = 0;
  for (const auto& [name, check] : criteria) {
    ++id;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d %-32s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", id - failures, id);
  return failures == 0 ? 0 : 1;
}
