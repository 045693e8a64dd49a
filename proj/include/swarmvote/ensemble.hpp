#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "learners.hpp"

namespace swarmvote {

/// Base-learner weights w_ij in [0, 1], row-major (extractor i, classifier j).
class WeightMatrix {
 public:
  WeightMatrix() = default;
  WeightMatrix(std::size_t n_fe, std::size_t n_cl, double fill = 1.0)
      : n_fe_(n_fe), n_cl_(n_cl), w_(n_fe * n_cl, fill) {
    check();
  }
  WeightMatrix(std::size_t n_fe, std::size_t n_cl, std::vector<double> values)
      : n_fe_(n_fe), n_cl_(n_cl), w_(std::move(values)) {
    if (w_.size() != n_fe * n_cl)
      throw DataError("ensemble", "weight count does not match " + std::to_string(n_fe) + "x" +
                                      std::to_string(n_cl) + " grid");
    check();
  }

  std::size_t n_fe() const { return n_fe_; }
  std::size_t n_cl() const { return n_cl_; }
  std::size_t size() const { return w_.size(); }
  double operator()(std::size_t i, std::size_t j) const { return w_[i * n_cl_ + j]; }
  std::span<const double> values() const { return w_; }

  double sum() const {
    double s = 0.0;
    for (double v : w_) s += v;
    return s;
  }

  bool operator==(const WeightMatrix&) const = default;

 private:
  void check() const {
    for (double v : w_)
      if (!(v >= 0.0 && v <= 1.0))
        throw DataError("ensemble", "weights must lie in [0, 1]");
  }

  std::size_t n_fe_ = 0, n_cl_ = 0;
  std::vector<double> w_;
};

/// Normalized weighted vote: scores[c] = sum_ij w_ij [vote_ij == c] / sum_ij w_ij.
/// `votes` holds each learner's predicted label, row-major like the weights.
inline void aggregate_scores_into(std::span<const Label> votes, std::span<const double> weights,
                                  std::span<double> scores) {
  if (votes.size() != weights.size())
    throw DataError("ensemble", "vote slice and weight matrix differ in size");
  std::fill(scores.begin(), scores.end(), 0.0);
  double total = 0.0;
  for (std::size_t l = 0; l < votes.size(); ++l) {
    scores[static_cast<std::size_t>(votes[l])] += weights[l];
    total += weights[l];
  }
  if (!(total > 0.0)) throw NumericError("ensemble", "degenerate weights");
  for (auto& s : scores) s /= total;
}

inline std::vector<double> aggregate_scores(std::span<const Label> votes,
                                            std::span<const double> weights, int class_count) {
  std::vector<double> scores(static_cast<std::size_t>(class_count) + 1, 0.0);
  aggregate_scores_into(votes, weights, scores);
  return scores;
}

inline std::vector<double> aggregate_scores(const PredictionCube& cube, std::size_t region,
                                            const WeightMatrix& weights) {
  if (weights.n_fe() != cube.n_fe() || weights.n_cl() != cube.n_cl())
    throw DataError("ensemble", "weight matrix shape does not match cube grid");
  return aggregate_scores(cube.region_votes(region), weights.values(), cube.class_count());
}

/// Highest-scoring object class (1..C, ties to the smaller index) if its score
/// is strictly above the threshold; background (0) otherwise.
inline Label decide_label(std::span<const double> scores, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw UsageError("ensemble", "decision threshold must lie in [0, 1]");
  if (scores.size() < 2) return 0;
  std::size_t best = 1;
  for (std::size_t c = 2; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return scores[best] > threshold ? static_cast<Label>(best) : 0;
}

/// Batch decision over every region of the cube, in cube order. `out` is
/// resized to the region count.
inline void classify_all_into(const PredictionCube& cube, std::span<const double> weights,
                              double threshold, std::vector<Label>& out) {
  if (weights.size() != cube.learner_count())
    throw DataError("ensemble", "weight matrix shape does not match cube grid");
  std::vector<double> scores(static_cast<std::size_t>(cube.class_count()) + 1);
  out.resize(cube.region_count());
  for (std::size_t k = 0; k < cube.region_count(); ++k) {
    aggregate_scores_into(cube.region_votes(k), weights, scores);
    out[k] = decide_label(scores, threshold);
  }
}

inline std::vector<Label> classify_all(const PredictionCube& cube, const WeightMatrix& weights,
                                       double threshold) {
  if (weights.n_fe() != cube.n_fe() || weights.n_cl() != cube.n_cl())
    throw DataError("ensemble", "weight matrix shape does not match cube grid");
  if (!(weights.sum() > 0.0)) throw NumericError("ensemble", "degenerate weights");
  std::vector<Label> out;
  classify_all_into(cube, weights.values(), threshold, out);
  return out;
}

}  // namespace swarmvote
