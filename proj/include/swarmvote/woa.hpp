#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "ensemble.hpp"
#include "error.hpp"
#include "io.hpp"
#include "learners.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace swarmvote {

/// Ensemble hyperparameters: the weight matrix plus the decision threshold.
/// Flattened as [w_0_0, ..., w_{NFE-1}_{NCL-1}, threshold].
struct Solution {
  WeightMatrix weights;
  double threshold = 0.5;

  std::size_t dims() const { return weights.size() + 1; }

  std::vector<double> flatten() const {
    std::vector<double> x(weights.values().begin(), weights.values().end());
    x.push_back(threshold);
    return x;
  }

  static Solution from_flat(std::span<const double> x, std::size_t n_fe, std::size_t n_cl) {
    if (x.size() != n_fe * n_cl + 1)
      throw DataError("woa", "flat solution has " + std::to_string(x.size()) +
                                 " coordinates, expected " + std::to_string(n_fe * n_cl + 1));
    Solution s;
    s.weights = WeightMatrix(n_fe, n_cl, std::vector<double>(x.begin(), x.end() - 1));
    s.threshold = x.back();
    if (!(s.threshold >= 0.0 && s.threshold <= 1.0))
      throw DataError("woa", "threshold must lie in [0, 1]");
    return s;
  }
};

inline nlohmann::json solution_to_json(const Solution& s) {
  return {{"n_fe", s.weights.n_fe()},
          {"n_cl", s.weights.n_cl()},
          {"weights", std::vector<double>(s.weights.values().begin(), s.weights.values().end())},
          {"dth", s.threshold}};
}

inline Solution solution_from_json(const nlohmann::json& j) {
  try {
    const auto n_fe = j.at("n_fe").get<std::size_t>();
    const auto n_cl = j.at("n_cl").get<std::size_t>();
    auto w = j.at("weights").get<std::vector<double>>();
    w.push_back(j.at("dth").get<double>());
    return Solution::from_flat(w, n_fe, n_cl);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("woa", std::string("invalid solution file: ") + e.what());
  }
}

inline Solution load_solution(const std::filesystem::path& path) {
  const auto text = io::read_file(path, "woa");
  try {
    return solution_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("woa", "solution '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

struct WoaParams {
  std::size_t pop_size = 50;
  std::size_t max_iter = 500;
  double b = 1.0;  // logarithmic spiral shape
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const {
    if (pop_size < 2) throw UsageError("woa", "pop_size must be >= 2");
    if (max_iter < 1) throw UsageError("woa", "max_iter must be >= 1");
    if (!(b > 0.0) || !std::isfinite(b)) throw UsageError("woa", "b must be positive");
  }
};

struct TraceRecord {
  std::size_t iteration = 0;
  double best_fitness = 0.0;
  std::vector<double> best_position;
};

struct WoaTrace {
  std::vector<TraceRecord> records;
  std::size_t evaluations = 0;
};

struct WoaResult {
  std::vector<double> best_position;
  double best_fitness = 0.0;
  WoaTrace trace;
};

/// Linear schedule of the encircling coefficient a: 2 at the first
/// iteration, 0 at the last.
inline double woa_a(std::size_t iter, std::size_t max_iter) {
  if (max_iter <= 1) return 0.0;
  return 2.0 * (1.0 - static_cast<double>(iter) / static_cast<double>(max_iter - 1));
}

/// Uniform draws in [0,1]^dims. When dims >= 2 the leading dims-1
/// coordinates (the weight block) are redrawn if all are zero.
inline std::vector<std::vector<double>> init_population(const WoaParams& params,
                                                        std::size_t dims) {
  params.validate();
  if (dims == 0) throw UsageError("woa", "dimensionality must be positive");
  std::vector<std::vector<double>> pop(params.pop_size, std::vector<double>(dims));
  for (std::size_t w = 0; w < params.pop_size; ++w) {
    auto rng = Xoshiro256::derive(params.seed, {0x696e6974ULL, w});
    for (;;) {
      for (auto& x : pop[w]) x = rng.uniform();
      if (dims < 2 ||
          std::any_of(pop[w].begin(), pop[w].end() - 1, [](double v) { return v > 0.0; }))
        break;
    }
  }
  return pop;
}

/// Per-whale random draws for one step.
struct WhaleDraws {
  double r1 = 0.0;  // A = 2a r1 - a
  double r2 = 0.0;  // C = 2 r2
  double p = 0.0;   // < 0.5 encircle/explore, >= 0.5 spiral
  double l = 0.0;   // spiral parameter in [-1, 1]
  std::size_t peer = 0;
};

inline WhaleDraws draw_whale(const WoaParams& params, std::size_t iter, std::size_t whale) {
  auto rng = Xoshiro256::derive(params.seed, {0x73746570ULL, iter, whale});
  WhaleDraws d;
  d.r1 = rng.uniform();
  d.r2 = rng.uniform();
  d.p = rng.uniform();
  d.l = rng.uniform(-1.0, 1.0);
  d.peer = static_cast<std::size_t>(rng.below(params.pop_size));
  return d;
}

/// Standard whale position update, clamped to [0, 1] per coordinate.
///   p < 0.5, |A| < 1:  X <- X* - A |C X* - X|        (encircling)
///   p < 0.5, |A| >= 1: X <- Xr - A |C Xr - X|        (search toward a peer)
///   p >= 0.5:          X <- |X* - X| e^{bl} cos(2 pi l) + X*  (spiral)
inline std::vector<double> update_whale(std::span<const double> x, std::span<const double> best,
                                        std::span<const double> peer, const WhaleDraws& d,
                                        double a, double b) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  const double A = 2.0 * a * d.r1 - a;
  const double C = 2.0 * d.r2;
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < x.size(); ++n) {
    double v;
    if (d.p < 0.5) {
      const double target = std::abs(A) >= 1.0 ? peer[n] : best[n];
      v = target - A * std::abs(C * target - x[n]);
    } else {
      v = std::abs(best[n] - x[n]) * std::exp(b * d.l) * std::cos(kTwoPi * d.l) + best[n];
    }
    out[n] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

/// Moves every whale once. Draws come from (seed, iter, whale) substreams.
inline std::vector<std::vector<double>> woa_step(const std::vector<std::vector<double>>& population,
                                                 std::span<const double> best, std::size_t iter,
                                                 const WoaParams& params) {
  if (population.empty()) throw UsageError("woa", "empty population");
  if (iter >= params.max_iter) throw UsageError("woa", "iteration index beyond max_iter");
  const double a = woa_a(iter, params.max_iter);
  std::vector<std::vector<double>> next(population.size());
  for (std::size_t w = 0; w < population.size(); ++w) {
    auto d = draw_whale(params, iter, w);
    d.peer %= population.size();
    next[w] = update_whale(population[w], best, population[d.peer], d, a, params.b);
  }
  return next;
}

namespace detail {

inline std::string describe_position(std::span<const double> x) {
  std::string s = "[";
  for (std::size_t n = 0; n < x.size(); ++n) s += (n ? "," : "") + io::format_double(x[n]);
  return s + "]";
}

template <typename Objective>
std::vector<double> evaluate_population(const std::vector<std::vector<double>>& pop,
                                        Objective& objective, unsigned threads) {
  std::vector<double> fit(pop.size());
  parallel_for(pop.size(), threads, [&](std::size_t w) { fit[w] = objective(pop[w]); });
  for (std::size_t w = 0; w < pop.size(); ++w)
    if (!std::isfinite(fit[w]))
      throw NumericError("woa", "objective returned a non-finite value for solution " +
                                    describe_position(pop[w]));
  return fit;
}

}  // namespace detail

/// Maximizes `objective` over [0,1]^dims. The objective must be safe to call
/// concurrently when params.threads > 1. Evaluations: pop_size at
/// initialization plus pop_size per iteration.
template <typename Objective>
WoaResult optimize(Objective&& objective, std::size_t dims, const WoaParams& params) {
  params.validate();
  WoaResult result;
  auto pop = init_population(params, dims);
  auto fit = detail::evaluate_population(pop, objective, params.threads);
  result.trace.evaluations += pop.size();

  std::size_t leader = static_cast<std::size_t>(std::max_element(fit.begin(), fit.end()) - fit.begin());
  result.best_position = pop[leader];
  result.best_fitness = fit[leader];

  for (std::size_t t = 0; t < params.max_iter; ++t) {
    pop = woa_step(pop, result.best_position, t, params);
    fit = detail::evaluate_population(pop, objective, params.threads);
    result.trace.evaluations += pop.size();
    for (std::size_t w = 0; w < pop.size(); ++w)
      if (fit[w] > result.best_fitness) {
        result.best_fitness = fit[w];
        result.best_position = pop[w];
      }
    result.trace.records.push_back({t + 1, result.best_fitness, result.best_position});
  }
  return result;
}

/// Mean per-fold fitness of a solution over a frozen prediction cube. Folds
/// without object-class regions are scored by accuracy alone.
class CvObjective {
 public:
  CvObjective(const PredictionCube& cube, const FoldPlan& folds, FitnessWeights fw)
      : n_fe_(cube.n_fe()), n_cl_(cube.n_cl()), fw_(fw) {
    fw_.validate();
    if (folds.region_ids.size() != folds.fold_of.size())
      throw DataError("woa", "fold plan is inconsistent");
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t k = 0; k < cube.region_count(); ++k) pos.emplace(cube.region_ids()[k], k);
    std::vector<std::vector<std::size_t>> members(folds.k);
    for (std::size_t n = 0; n < folds.region_ids.size(); ++n) {
      auto it = pos.find(folds.region_ids[n]);
      if (it == pos.end())
        throw DataError("woa", "cube has no votes for region " + folds.region_ids[n]);
      if (folds.fold_of[n] >= folds.k) throw DataError("woa", "fold index out of range");
      members[folds.fold_of[n]].push_back(it->second);
    }
    bool any_scorable = false;
    for (std::size_t f = 0; f < folds.k; ++f) {
      if (members[f].empty()) throw DataError("woa", "fold " + std::to_string(f) + " is empty");
      folds_.push_back(cube.select(members[f]));
      const auto& truth = folds_.back().truth();
      const bool has_objects = std::any_of(truth.begin(), truth.end(), [](Label l) { return l > 0; });
      degenerate_.push_back(!has_objects);
      if (has_objects) {
        any_scorable = true;
      } else {
        warnings_.push_back("fold " + std::to_string(f) +
                            " has no object-class regions; scored by accuracy only");
      }
    }
    if (!any_scorable) throw DataError("woa", "every fold lacks object-class regions");
  }

  std::size_t dims() const { return n_fe_ * n_cl_ + 1; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  double operator()(std::span<const double> x) const {
    if (x.size() != dims()) throw DataError("woa", "solution dimensionality mismatch");
    const auto weights = x.first(x.size() - 1);
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (!(sum > 0.0)) return 0.0;
    const double threshold = x.back();
    std::vector<Label> predicted;
    double total = 0.0;
    for (std::size_t f = 0; f < folds_.size(); ++f) {
      const auto& cube = folds_[f];
      classify_all_into(cube, weights, threshold, predicted);
      const auto cm = confusion_matrix(predicted, cube.truth(), cube.class_count());
      total += degenerate_[f] ? accuracy(cm) : fitness(cm, fw_);
    }
    return total / static_cast<double>(folds_.size());
  }

  double operator()(const Solution& s) const { return (*this)(s.flatten()); }

 private:
  std::size_t n_fe_, n_cl_;
  FitnessWeights fw_;
  std::vector<PredictionCube> folds_;
  std::vector<bool> degenerate_;
  std::vector<std::string> warnings_;
};

inline double evaluate_solution_cv(const Solution& sol, const PredictionCube& cube,
                                   const FoldPlan& folds, const FitnessWeights& fw) {
  if (sol.weights.n_fe() != cube.n_fe() || sol.weights.n_cl() != cube.n_cl())
    throw DataError("woa", "solution grid does not match cube grid");
  return CvObjective(cube, folds, fw)(sol);
}

/// `iteration,best_fitness,dth,w_0_0,...` with one row per iteration.
inline std::string trace_to_csv(const WoaTrace& trace, std::size_t n_fe, std::size_t n_cl) {
  std::string out = "iteration,best_fitness,dth";
  for (std::size_t i = 0; i < n_fe; ++i)
    for (std::size_t j = 0; j < n_cl; ++j)
      out += ",w_" + std::to_string(i) + "_" + std::to_string(j);
  out += '\n';
  for (const auto& r : trace.records) {
    out += std::to_string(r.iteration) + ',' + io::format_double(r.best_fitness) + ',' +
           io::format_double(r.best_position.back());
    for (std::size_t n = 0; n + 1 < r.best_position.size(); ++n)
      out += ',' + io::format_double(r.best_position[n]);
    out += '\n';
  }
  return out;
}

}  // namespace swarmvote
