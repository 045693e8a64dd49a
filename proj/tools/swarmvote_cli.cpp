#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "swarmvote/swarmvote.hpp"

namespace fs = std::filesystem;
using namespace swarmvote;

namespace {

void log_line(const std::string& message) { std::cerr << message << '\n'; }

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  for (auto part : io::split(text)) {
    long long v = 0;
    if (!io::parse_long(part, v) || v <= 0)
      throw UsageError("cli", "invalid channel list '" + text + "'");
    dims.push_back(static_cast<std::size_t>(v));
  }
  return dims;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted-vote ensemble tuned by the whale optimization algorithm"};
  app.require_subcommand(1);

  std::string config_path, out_dir, cube_path, solution_path;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::size_t folds = 10;

  auto* run = app.add_subcommand("run", "split, train, tune and evaluate end to end");
  run->add_option("--config", config_path, "run config JSON")->required();
  auto* run_seed = run->add_option("--seed", seed, "master seed (overrides config)");
  auto* run_threads = run->add_option("--threads", threads, "worker threads");
  auto* run_out = run->add_option("--out", out_dir, "output directory (overrides config)");

  auto* opt = app.add_subcommand("optimize", "tune weights and threshold on a vote cube");
  opt->add_option("--cube", cube_path, "cube CSV")->required();
  opt->add_option("--config", config_path, "config JSON for woa/fitness/folds settings");
  auto* opt_folds = opt->add_option("--folds", folds, "K for stratified K-fold");
  auto* opt_seed = opt->add_option("--seed", seed, "seed");
  opt->add_option("--threads", threads, "worker threads");
  opt->add_option("--out", out_dir, "output directory")->required();
  std::size_t pop = 0, iters = 0;
  opt->add_option("--pop", pop, "population size (overrides config)");
  opt->add_option("--iter", iters, "iterations (overrides config)");

  auto* eval = app.add_subcommand("evaluate", "apply a solution to a vote cube");
  eval->add_option("--cube", cube_path, "cube CSV")->required();
  eval->add_option("--solution", solution_path, "solution JSON")->required();
  eval->add_option("--config", config_path, "config JSON for fitness weights");
  eval->add_option("--out", out_dir, "directory for report.json (default: stdout only)");

  auto* gen = app.add_subcommand("gen-synthetic", "write a seeded Gaussian-blob dataset");
  SyntheticSpec spec;
  std::string channels = "8,6,4";
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", spec.seed, "seed");
  gen->add_option("--regions", spec.regions, "number of regions");
  gen->add_option("--classes", spec.class_count, "object classes (labels 1..C)");
  gen->add_option("--channels", channels, "comma-separated channel dimensionalities");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      RunConfig config = load_run_config(config_path);
      if (*run_seed) config.seed = seed;
      if (*run_threads) config.threads = threads;
      if (*run_out) config.output_dir = out_dir;
      const auto outcome = cmd_run(config, log_line);
      std::cout << "test fitness " << io::format_double(outcome.test_fitness) << ", report in "
                << (config.output_dir / "report.json").string() << '\n';
    } else if (*opt) {
      RunConfig config;
      if (!config_path.empty()) config = load_run_config(config_path);
      if (*opt_folds) config.folds = folds;
      if (*opt_seed) config.seed = seed;
      if (pop) config.woa.pop_size = pop;
      if (iters) config.woa.max_iter = iters;
      config.woa.threads = threads;
      const auto cube = ingest_prediction_cube(cube_path);
      const auto outcome =
          cmd_optimize(cube, config.folds, config.seed, config.woa, config.fitness, log_line);
      fs::create_directories(out_dir);
      io::write_file(fs::path(out_dir) / "solution.json",
                     dump_json(solution_to_json(outcome.solution)), "cli");
      io::write_file(fs::path(out_dir) / "trace.csv",
                     trace_to_csv(outcome.woa.trace, cube.n_fe(), cube.n_cl()), "cli");
      io::write_file(fs::path(out_dir) / "report.json", dump_json(outcome.report), "cli");
      std::cout << "cv fitness " << io::format_double(outcome.woa.best_fitness) << '\n';
    } else if (*eval) {
      FitnessWeights fw;
      if (!config_path.empty()) fw = load_run_config(config_path).fitness;
      const auto cube = ingest_prediction_cube(cube_path);
      const auto report = cmd_evaluate(cube, load_solution(solution_path), fw);
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        io::write_file(fs::path(out_dir) / "report.json", dump_json(report), "cli");
      }
      std::cout << dump_json(report);
    } else if (*gen) {
      spec.channel_dims = parse_dims(channels);
      spec.separation.assign(spec.channel_dims.size(), 1.0);
      const auto data = generate_synthetic(spec);
      fs::create_directories(out_dir);
      const fs::path dir = out_dir;
      io::write_file(dir / "dataset.csv", dataset_to_csv(data), "cli");
      io::write_file(dir / "schema.json",
                     dump_json(schema_to_json(Schema{data.channel_dims, data.class_count})),
                     "cli");
      const nlohmann::json config = {
          {"dataset", "dataset.csv"}, {"schema", "schema.json"}, {"seed", spec.seed}};
      io::write_file(dir / "config.json", dump_json(config), "cli");
      std::cout << "wrote " << data.size() << " regions to " << (dir / "dataset.csv").string()
                << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: cli: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
