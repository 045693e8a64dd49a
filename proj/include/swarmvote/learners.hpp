#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dataset.hpp"
#include "error.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace swarmvote {

using FeatureMatrix = std::vector<std::vector<double>>;

enum class LearnerKind { KNN, LinearSVM, MLP, DecisionTreeC45, GaussianNB };

/// Classifier column order of the default grid.
inline constexpr std::array<LearnerKind, 5> kDefaultKinds = {
    LearnerKind::KNN, LearnerKind::LinearSVM, LearnerKind::MLP, LearnerKind::DecisionTreeC45,
    LearnerKind::GaussianNB};

inline const char* to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::KNN:
      return "knn";
    case LearnerKind::LinearSVM:
      return "svm";
    case LearnerKind::MLP:
      return "mlp";
    case LearnerKind::DecisionTreeC45:
      return "c45";
    case LearnerKind::GaussianNB:
      return "nb";
  }
  return "?";
}

struct KnnParams {
  std::size_t k = 5;
};

// One-vs-rest hinge loss, L2 penalty `lambda`, step eta0 / (1 + eta0 * lambda * t).
struct SvmParams {
  double lambda = 1e-3;
  double eta0 = 0.5;
  std::size_t epochs = 60;
};

struct MlpParams {
  std::size_t hidden = 16;
  double learning_rate = 0.1;
  std::size_t epochs = 150;
};

struct TreeParams {
  std::size_t max_depth = 8;
  std::size_t min_samples_leaf = 1;
};

struct NbParams {
  double var_floor = 1e-9;  // relative to the largest feature variance
};

struct LearnerParams {
  KnnParams knn;
  SvmParams svm;
  MlpParams mlp;
  TreeParams tree;
  NbParams nb;

  void validate() const {
    if (knn.k < 1) throw UsageError("learners", "knn.k must be >= 1");
    if (!(svm.lambda > 0) || !(svm.eta0 > 0) || svm.epochs < 1)
      throw UsageError("learners", "svm lambda, eta0 and epochs must be positive");
    if (mlp.hidden < 1 || !(mlp.learning_rate > 0) || mlp.epochs < 1)
      throw UsageError("learners", "mlp hidden, learning_rate and epochs must be positive");
    if (tree.max_depth < 1 || tree.min_samples_leaf < 1)
      throw UsageError("learners", "tree max_depth and min_samples_leaf must be >= 1");
    if (!(nb.var_floor > 0)) throw UsageError("learners", "nb.var_floor must be positive");
  }
};

namespace detail {

/// Index of the largest value; ties go to the smaller index.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < values.size(); ++c)
    if (values[c] > values[best]) best = c;
  return best;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Per-feature z-score fitted on training rows. Constant features keep scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const FeatureMatrix& rows) {
    const std::size_t d = rows.front().size();
    Standardizer z;
    z.mean.assign(d, 0.0);
    z.scale.assign(d, 0.0);
    for (const auto& r : rows)
      for (std::size_t f = 0; f < d; ++f) z.mean[f] += r[f];
    for (auto& m : z.mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows)
      for (std::size_t f = 0; f < d; ++f) z.scale[f] += (r[f] - z.mean[f]) * (r[f] - z.mean[f]);
    for (auto& s : z.scale) {
      s = std::sqrt(s / static_cast<double>(rows.size()));
      if (!(s > 1e-12)) s = 1.0;
    }
    return z;
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t f = 0; f < x.size(); ++f) out[f] = (x[f] - mean[f]) / scale[f];
    return out;
  }

  FeatureMatrix apply_all(const FeatureMatrix& rows) const {
    FeatureMatrix out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(apply(r));
    return out;
  }
};

}  // namespace detail

class KnnModel {
 public:
  KnnModel(const FeatureMatrix& rows, std::span<const Label> labels, int class_count,
           const KnnParams& p)
      : z_(detail::Standardizer::fit(rows)),
        rows_(z_.apply_all(rows)),
        labels_(labels.begin(), labels.end()),
        class_count_(class_count),
        k_(std::min(p.k, rows.size())) {}

  Label predict(std::span<const double> x) const {
    const auto q = z_.apply(x);
    std::vector<std::pair<double, std::size_t>> dist(rows_.size());
    for (std::size_t n = 0; n < rows_.size(); ++n) {
      double s = 0.0;
      for (std::size_t f = 0; f < q.size(); ++f) s += (rows_[n][f] - q[f]) * (rows_[n][f] - q[f]);
      dist[n] = {s, n};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
    return vote(std::span(dist).first(k_));
  }

  /// Majority over the given neighbours; ties go to the smaller label.
  Label vote(std::span<const std::pair<double, std::size_t>> neighbours) const {
    std::vector<double> counts(static_cast<std::size_t>(class_count_) + 1, 0.0);
    for (const auto& [d, n] : neighbours) counts[static_cast<std::size_t>(labels_[n])] += 1.0;
    return static_cast<Label>(detail::argmax(counts));
  }

 private:
  detail::Standardizer z_;
  FeatureMatrix rows_;
  std::vector<Label> labels_;
  int class_count_;
  std::size_t k_;
};

/// One-vs-rest linear SVM trained by stochastic subgradient descent on the
/// regularized hinge loss. Classes absent from training are never predicted.
class LinearSvmModel {
 public:
  LinearSvmModel(const FeatureMatrix& rows, std::span<const Label> labels, int class_count,
                 const SvmParams& p, std::uint64_t seed)
      : z_(detail::Standardizer::fit(rows)) {
    const auto x = z_.apply_all(rows);
    const std::size_t d = x.front().size();
    const std::size_t classes = static_cast<std::size_t>(class_count) + 1;
    weights_.assign(classes, std::vector<double>(d, 0.0));
    bias_.assign(classes, 0.0);
    present_.assign(classes, false);
    for (auto l : labels) present_[static_cast<std::size_t>(l)] = true;

    std::vector<std::size_t> order(x.size());
    for (std::size_t c = 0; c < classes; ++c) {
      if (!present_[c]) continue;
      auto rng = Xoshiro256::derive(seed, {0x73766dULL, c});
      auto& w = weights_[c];
      double& b = bias_[c];
      std::size_t t = 0;
      for (std::size_t epoch = 0; epoch < p.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(std::span<std::size_t>(order), rng);
        for (auto n : order) {
          const double eta = p.eta0 / (1.0 + p.eta0 * p.lambda * static_cast<double>(t++));
          const double y = static_cast<std::size_t>(labels[n]) == c ? 1.0 : -1.0;
          double margin = b;
          for (std::size_t f = 0; f < d; ++f) margin += w[f] * x[n][f];
          margin *= y;
          const double shrink = 1.0 - eta * p.lambda;
          for (auto& wf : w) wf *= shrink;
          if (margin < 1.0) {
            for (std::size_t f = 0; f < d; ++f) w[f] += eta * y * x[n][f];
            b += eta * y;
          }
        }
      }
    }
  }

  std::vector<double> scores(std::span<const double> raw) const {
    const auto x = z_.apply(raw);
    std::vector<double> out(weights_.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < weights_.size(); ++c) {
      if (!present_[c]) continue;
      double s = bias_[c];
      for (std::size_t f = 0; f < x.size(); ++f) s += weights_[c][f] * x[f];
      out[c] = s;
    }
    return out;
  }

  Label predict(std::span<const double> x) const {
    return static_cast<Label>(detail::argmax(scores(x)));
  }

 private:
  detail::Standardizer z_;
  std::vector<std::vector<double>> weights_;
  std::vector<double> bias_;
  std::vector<bool> present_;
};

/// One hidden layer of logistic units, softmax output, cross-entropy loss,
/// per-sample gradient descent for a fixed number of epochs.
class MlpModel {
 public:
  MlpModel(const FeatureMatrix& rows, std::span<const Label> labels, int class_count,
           const MlpParams& p, std::uint64_t seed)
      : z_(detail::Standardizer::fit(rows)),
        inputs_(rows.front().size()),
        hidden_(p.hidden),
        outputs_(static_cast<std::size_t>(class_count) + 1) {
    const auto x = z_.apply_all(rows);
    auto rng = Xoshiro256::derive(seed, {0x6d6c70ULL});
    const double r1 = 1.0 / std::sqrt(static_cast<double>(inputs_));
    const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
    w1_.resize(hidden_ * (inputs_ + 1));
    w2_.resize(outputs_ * (hidden_ + 1));
    for (auto& w : w1_) w = rng.uniform(-r1, r1);
    for (auto& w : w2_) w = rng.uniform(-r2, r2);

    std::vector<std::size_t> order(x.size());
    std::vector<double> h(hidden_), prob(outputs_), delta_h(hidden_);
    for (std::size_t epoch = 0; epoch < p.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      shuffle(std::span<std::size_t>(order), rng);
      for (auto n : order) {
        forward(x[n], h, prob);
        // output delta = prob - onehot
        prob[static_cast<std::size_t>(labels[n])] -= 1.0;
        std::fill(delta_h.begin(), delta_h.end(), 0.0);
        for (std::size_t o = 0; o < outputs_; ++o) {
          double* row = &w2_[o * (hidden_ + 1)];
          for (std::size_t u = 0; u < hidden_; ++u) delta_h[u] += prob[o] * row[u];
          for (std::size_t u = 0; u < hidden_; ++u) row[u] -= p.learning_rate * prob[o] * h[u];
          row[hidden_] -= p.learning_rate * prob[o];
        }
        for (std::size_t u = 0; u < hidden_; ++u) {
          const double g = delta_h[u] * h[u] * (1.0 - h[u]);
          double* row = &w1_[u * (inputs_ + 1)];
          for (std::size_t f = 0; f < inputs_; ++f) row[f] -= p.learning_rate * g * x[n][f];
          row[inputs_] -= p.learning_rate * g;
        }
      }
    }
  }

  std::vector<double> probabilities(std::span<const double> raw) const {
    std::vector<double> h(hidden_), prob(outputs_);
    forward(z_.apply(raw), h, prob);
    return prob;
  }

  Label predict(std::span<const double> x) const {
    return static_cast<Label>(detail::argmax(probabilities(x)));
  }

 private:
  void forward(std::span<const double> x, std::vector<double>& h, std::vector<double>& prob) const {
    for (std::size_t u = 0; u < hidden_; ++u) {
      const double* row = &w1_[u * (inputs_ + 1)];
      double s = row[inputs_];
      for (std::size_t f = 0; f < inputs_; ++f) s += row[f] * x[f];
      h[u] = detail::sigmoid(s);
    }
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t o = 0; o < outputs_; ++o) {
      const double* row = &w2_[o * (hidden_ + 1)];
      double s = row[hidden_];
      for (std::size_t u = 0; u < hidden_; ++u) s += row[u] * h[u];
      prob[o] = s;
      top = std::max(top, s);
    }
    double total = 0.0;
    for (auto& v : prob) total += (v = std::exp(v - top));
    for (auto& v : prob) v /= total;
  }

  detail::Standardizer z_;
  std::size_t inputs_, hidden_, outputs_;
  std::vector<double> w1_;  // hidden x (inputs + bias)
  std::vector<double> w2_;  // outputs x (hidden + bias)
};

/// C4.5-style tree: binary threshold splits on continuous features. Each
/// feature's threshold maximizes information gain; among features whose gain
/// is at least the average, the one with the highest gain ratio wins.
/// Impure nodes may take a zero-gain split (XOR needs one at the root).
class DecisionTreeModel {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    Label label = 0;
  };

  DecisionTreeModel(const FeatureMatrix& rows, std::span<const Label> labels, int class_count,
                    const TreeParams& p)
      : classes_(static_cast<std::size_t>(class_count) + 1), params_(p) {
    std::vector<std::size_t> all(rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    build(rows, labels, all, 0);
  }

  Label predict(std::span<const double> x) const {
    std::size_t n = 0;
    while (nodes_[n].feature >= 0)
      n = x[static_cast<std::size_t>(nodes_[n].feature)] <= nodes_[n].threshold ? nodes_[n].left
                                                                                 : nodes_[n].right;
    return nodes_[n].label;
  }

  const std::vector<Node>& nodes() const { return nodes_; }

  std::size_t depth() const { return depth_from(0); }

 private:
  static double entropy(std::span<const double> counts, double total) {
    double h = 0.0;
    for (double c : counts)
      if (c > 0) h -= (c / total) * std::log2(c / total);
    return h;
  }

  struct Candidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    double ratio = 0.0;
  };

  std::size_t build(const FeatureMatrix& rows, std::span<const Label> labels,
                    std::vector<std::size_t>& members, std::size_t depth) {
    std::vector<double> counts(classes_, 0.0);
    for (auto n : members) counts[static_cast<std::size_t>(labels[n])] += 1.0;
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{});
    nodes_[id].label = static_cast<Label>(detail::argmax(counts));

    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    if (pure || depth >= params_.max_depth || members.size() < 2 * params_.min_samples_leaf)
      return id;

    const auto total = static_cast<double>(members.size());
    const double base = entropy(counts, total);
    std::vector<Candidate> candidates;
    const std::size_t d = rows.front().size();
    std::vector<std::size_t> sorted = members;
    for (std::size_t f = 0; f < d; ++f) {
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::size_t a, std::size_t b) { return rows[a][f] < rows[b][f]; });
      std::vector<double> left(classes_, 0.0), right = counts;
      Candidate best;
      best.feature = -1;
      for (std::size_t s = 0; s + 1 < sorted.size(); ++s) {
        const auto l = static_cast<std::size_t>(labels[sorted[s]]);
        left[l] += 1.0;
        right[l] -= 1.0;
        const double a = rows[sorted[s]][f], b = rows[sorted[s + 1]][f];
        if (!(a < b)) continue;
        const auto nl = static_cast<double>(s + 1), nr = total - nl;
        if (nl < static_cast<double>(params_.min_samples_leaf) ||
            nr < static_cast<double>(params_.min_samples_leaf))
          continue;
        const double gain =
            base - (nl / total) * entropy(left, nl) - (nr / total) * entropy(right, nr);
        if (best.feature < 0 || gain > best.gain + 1e-12) {
          const double split_info =
              -(nl / total) * std::log2(nl / total) - (nr / total) * std::log2(nr / total);
          best = Candidate{static_cast<int>(f), a + (b - a) / 2.0, gain, gain / split_info};
        }
      }
      if (best.feature >= 0) candidates.push_back(best);
    }
    if (candidates.empty()) return id;

    double mean_gain = 0.0;
    for (const auto& c : candidates) mean_gain += c.gain;
    mean_gain /= static_cast<double>(candidates.size());
    const Candidate* chosen = nullptr;
    for (const auto& c : candidates) {
      if (c.gain + 1e-12 < mean_gain) continue;
      if (!chosen || c.ratio > chosen->ratio + 1e-12) chosen = &c;
    }

    std::vector<std::size_t> lo, hi;
    const auto feat = static_cast<std::size_t>(chosen->feature);
    for (auto n : members) (rows[n][feat] <= chosen->threshold ? lo : hi).push_back(n);
    nodes_[id].feature = chosen->feature;
    nodes_[id].threshold = chosen->threshold;
    const std::size_t l = build(rows, labels, lo, depth + 1);
    const std::size_t r = build(rows, labels, hi, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::size_t depth_from(std::size_t n) const {
    if (nodes_[n].feature < 0) return 0;
    return 1 + std::max(depth_from(nodes_[n].left), depth_from(nodes_[n].right));
  }

  std::size_t classes_;
  TreeParams params_;
  std::vector<Node> nodes_;
};

/// Gaussian naive Bayes on raw features. Variances get an additive floor of
/// var_floor times the largest per-feature variance.
class GaussianNbModel {
 public:
  GaussianNbModel(const FeatureMatrix& rows, std::span<const Label> labels, int class_count,
                  const NbParams& p) {
    const std::size_t d = rows.front().size();
    const std::size_t classes = static_cast<std::size_t>(class_count) + 1;
    std::vector<double> counts(classes, 0.0);
    mean_.assign(classes, std::vector<double>(d, 0.0));
    var_.assign(classes, std::vector<double>(d, 0.0));
    for (std::size_t n = 0; n < rows.size(); ++n) {
      const auto c = static_cast<std::size_t>(labels[n]);
      counts[c] += 1.0;
      for (std::size_t f = 0; f < d; ++f) mean_[c][f] += rows[n][f];
    }
    for (std::size_t c = 0; c < classes; ++c)
      if (counts[c] > 0)
        for (auto& m : mean_[c]) m /= counts[c];
    for (std::size_t n = 0; n < rows.size(); ++n) {
      const auto c = static_cast<std::size_t>(labels[n]);
      for (std::size_t f = 0; f < d; ++f)
        var_[c][f] += (rows[n][f] - mean_[c][f]) * (rows[n][f] - mean_[c][f]);
    }

    const auto global = detail::Standardizer::fit(rows);
    double widest = 0.0;
    for (double s : global.scale) widest = std::max(widest, s * s);
    const double eps = p.var_floor * std::max(widest, 1.0);

    log_prior_.assign(classes, -std::numeric_limits<double>::infinity());
    for (std::size_t c = 0; c < classes; ++c) {
      if (counts[c] == 0) continue;
      log_prior_[c] = std::log(counts[c] / static_cast<double>(rows.size()));
      for (auto& v : var_[c]) v = v / counts[c] + eps;
    }
  }

  std::vector<double> log_posterior(std::span<const double> x) const {
    constexpr double kLog2Pi = 1.8378770664093454836;
    std::vector<double> out(log_prior_);
    for (std::size_t c = 0; c < out.size(); ++c) {
      if (!std::isfinite(out[c])) continue;
      for (std::size_t f = 0; f < x.size(); ++f) {
        const double diff = x[f] - mean_[c][f];
        out[c] -= 0.5 * (kLog2Pi + std::log(var_[c][f]) + diff * diff / var_[c][f]);
      }
    }
    return out;
  }

  Label predict(std::span<const double> x) const {
    return static_cast<Label>(detail::argmax(log_posterior(x)));
  }

 private:
  std::vector<std::vector<double>> mean_, var_;
  std::vector<double> log_prior_;
};

using LearnerModel =
    std::variant<KnnModel, LinearSvmModel, MlpModel, DecisionTreeModel, GaussianNbModel>;

/// A base learner: one classifier trained on one feature channel.
class TrainedLearner {
 public:
  TrainedLearner(LearnerKind kind, std::size_t channel_index, std::size_t classifier_index,
                 std::size_t dims, int class_count, LearnerModel model)
      : kind_(kind),
        channel_(channel_index),
        classifier_(classifier_index),
        dims_(dims),
        class_count_(class_count),
        model_(std::move(model)) {}

  LearnerKind kind() const { return kind_; }
  std::size_t channel_index() const { return channel_; }
  std::size_t classifier_index() const { return classifier_; }
  std::size_t dims() const { return dims_; }
  int class_count() const { return class_count_; }
  const LearnerModel& model() const { return model_; }

  Label predict(std::span<const double> x) const {
    if (x.size() != dims_)
      throw DataError("learners", "feature vector has " + std::to_string(x.size()) +
                                      " entries, learner expects " + std::to_string(dims_));
    for (double v : x)
      if (!std::isfinite(v)) throw DataError("learners", "non-finite feature value");
    return std::visit([&](const auto& m) { return m.predict(x); }, model_);
  }

  /// Binary vector over classes 0..C with a single 1 at the predicted label.
  std::vector<std::uint8_t> predict_one_hot(std::span<const double> x) const {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(class_count_) + 1, 0);
    out[static_cast<std::size_t>(predict(x))] = 1;
    return out;
  }

 private:
  LearnerKind kind_;
  std::size_t channel_, classifier_, dims_;
  int class_count_;
  LearnerModel model_;
};

inline TrainedLearner train_base_learner(LearnerKind kind, const LearnerParams& params,
                                         const FeatureMatrix& rows, std::span<const Label> labels,
                                         int class_count, std::uint64_t seed,
                                         std::size_t channel_index = 0,
                                         std::size_t classifier_index = 0) {
  if (rows.empty()) throw DataError("learners", "empty training data");
  if (rows.size() != labels.size())
    throw DataError("learners", "feature rows and labels differ in length");
  const std::size_t d = rows.front().size();
  if (d == 0) throw DataError("learners", "zero-dimensional features");
  for (const auto& r : rows) {
    if (r.size() != d) throw DataError("learners", "ragged feature matrix");
    for (double v : r)
      if (!std::isfinite(v)) throw DataError("learners", "non-finite feature value");
  }
  std::vector<bool> seen(static_cast<std::size_t>(class_count) + 1, false);
  std::size_t distinct = 0;
  for (auto l : labels) {
    if (l < 0 || l > class_count) throw DataError("learners", "label out of range");
    if (!seen[static_cast<std::size_t>(l)]) seen[static_cast<std::size_t>(l)] = true, ++distinct;
  }
  if (distinct < 2) throw DataError("learners", "training data contains a single class");
  params.validate();

  auto make = [&]() -> LearnerModel {
    switch (kind) {
      case LearnerKind::KNN:
        return KnnModel(rows, labels, class_count, params.knn);
      case LearnerKind::LinearSVM:
        return LinearSvmModel(rows, labels, class_count, params.svm, seed);
      case LearnerKind::MLP:
        return MlpModel(rows, labels, class_count, params.mlp, seed);
      case LearnerKind::DecisionTreeC45:
        return DecisionTreeModel(rows, labels, class_count, params.tree);
      case LearnerKind::GaussianNB:
        return GaussianNbModel(rows, labels, class_count, params.nb);
    }
    throw UsageError("learners", "unknown learner kind");
  };
  return TrainedLearner(kind, channel_index, classifier_index, d, class_count, make());
}

/// The N_FE x N_CL grid of base learners, row-major by (channel, classifier).
struct LearnerGrid {
  std::size_t n_fe = 0;
  std::size_t n_cl = 0;
  std::vector<std::optional<TrainedLearner>> cells;

  LearnerGrid() = default;
  LearnerGrid(std::size_t fe, std::size_t cl) : n_fe(fe), n_cl(cl), cells(fe * cl) {}

  std::optional<TrainedLearner>& at(std::size_t i, std::size_t j) { return cells[i * n_cl + j]; }
  const std::optional<TrainedLearner>& at(std::size_t i, std::size_t j) const {
    return cells[i * n_cl + j];
  }
};

/// Trains every (channel, classifier) cell. Each cell's seed is derived from
/// (seed, i, j), so results do not depend on `threads`.
inline LearnerGrid train_grid(const Dataset& train, std::span<const LearnerKind> kinds,
                              const LearnerParams& params, std::uint64_t seed,
                              unsigned threads = 1) {
  LearnerGrid grid(train.channel_count(), kinds.size());
  const auto labels = train.labels();
  std::vector<FeatureMatrix> channels;
  for (std::size_t i = 0; i < train.channel_count(); ++i) channels.push_back(train.channel(i));
  parallel_for(grid.cells.size(), threads, [&](std::size_t cell) {
    const std::size_t i = cell / kinds.size(), j = cell % kinds.size();
    grid.cells[cell] = train_base_learner(kinds[j], params, channels[i], labels, train.class_count,
                                          Xoshiro256::derive(seed, {0x6c726eULL, i, j}).next(), i,
                                          j);
  });
  return grid;
}

/// Hard votes of every base learner on every region. Stored as the predicted
/// label per (region, extractor, classifier); vote(i, j, k, c) expands it to
/// the one-hot form, so each (i, j, k) slice sums to one by construction.
class PredictionCube {
 public:
  PredictionCube() = default;
  PredictionCube(std::size_t n_fe, std::size_t n_cl, int class_count,
                 std::vector<std::string> region_ids, std::vector<Label> truth)
      : n_fe_(n_fe),
        n_cl_(n_cl),
        class_count_(class_count),
        region_ids_(std::move(region_ids)),
        truth_(std::move(truth)),
        predicted_(region_ids_.size() * n_fe * n_cl, 0) {
    if (truth_.size() != region_ids_.size())
      throw DataError("learners", "truth and region_ids differ in length");
  }

  std::size_t n_fe() const { return n_fe_; }
  std::size_t n_cl() const { return n_cl_; }
  std::size_t learner_count() const { return n_fe_ * n_cl_; }
  int class_count() const { return class_count_; }
  std::size_t region_count() const { return region_ids_.size(); }
  const std::vector<std::string>& region_ids() const { return region_ids_; }
  const std::vector<Label>& truth() const { return truth_; }

  Label label(std::size_t i, std::size_t j, std::size_t k) const {
    return predicted_[(k * n_fe_ + i) * n_cl_ + j];
  }
  void set_label(std::size_t i, std::size_t j, std::size_t k, Label c) {
    if (c < 0 || c > class_count_) throw DataError("learners", "vote label out of range");
    predicted_[(k * n_fe_ + i) * n_cl_ + j] = c;
  }

  std::uint8_t vote(std::size_t i, std::size_t j, std::size_t k, int c) const {
    return label(i, j, k) == c ? 1 : 0;
  }

  /// All learner votes for region k, row-major by (i, j).
  std::span<const Label> region_votes(std::size_t k) const {
    return std::span<const Label>(predicted_).subspan(k * learner_count(), learner_count());
  }

  /// Sub-cube over the given regions, in the given order.
  PredictionCube select(std::span<const std::size_t> regions) const {
    std::vector<std::string> ids;
    std::vector<Label> truth;
    for (auto k : regions) ids.push_back(region_ids_.at(k)), truth.push_back(truth_.at(k));
    PredictionCube out(n_fe_, n_cl_, class_count_, std::move(ids), std::move(truth));
    for (std::size_t n = 0; n < regions.size(); ++n) {
      const auto src = region_votes(regions[n]);
      std::copy(src.begin(), src.end(), out.predicted_.begin() +
                                            static_cast<std::ptrdiff_t>(n * learner_count()));
    }
    return out;
  }

  bool operator==(const PredictionCube&) const = default;

 private:
  std::size_t n_fe_ = 0, n_cl_ = 0;
  int class_count_ = 0;
  std::vector<std::string> region_ids_;
  std::vector<Label> truth_;
  std::vector<Label> predicted_;
};

inline PredictionCube build_prediction_cube(const LearnerGrid& grid, const Dataset& ds,
                                            unsigned threads = 1) {
  for (std::size_t i = 0; i < grid.n_fe; ++i)
    for (std::size_t j = 0; j < grid.n_cl; ++j) {
      const auto& cell = grid.at(i, j);
      if (!cell)
        throw DataError("learners", "missing learner for grid cell (" + std::to_string(i) + "," +
                                        std::to_string(j) + ")");
      if (i >= ds.channel_count() || cell->dims() != ds.channel_dims[i])
        throw DataError("learners", "learner (" + std::to_string(i) + "," + std::to_string(j) +
                                        ") does not match dataset channel layout");
      if (cell->class_count() != ds.class_count)
        throw DataError("learners", "learner class_count differs from dataset");
    }
  std::vector<std::string> ids;
  for (const auto& r : ds.regions) ids.push_back(r.region_id);
  PredictionCube cube(grid.n_fe, grid.n_cl, ds.class_count, std::move(ids), ds.labels());
  parallel_for(ds.size(), threads, [&](std::size_t k) {
    for (std::size_t i = 0; i < grid.n_fe; ++i)
      for (std::size_t j = 0; j < grid.n_cl; ++j)
        cube.set_label(i, j, k, grid.at(i, j)->predict(ds.regions[k].features[i]));
  });
  return cube;
}

/// Cube CSV: `extractor,classifier,region_id,truth,predicted`, one row per
/// (region, extractor, classifier).
inline std::string cube_to_csv(const PredictionCube& cube) {
  std::string out = "extractor,classifier,region_id,truth,predicted\n";
  for (std::size_t k = 0; k < cube.region_count(); ++k)
    for (std::size_t i = 0; i < cube.n_fe(); ++i)
      for (std::size_t j = 0; j < cube.n_cl(); ++j) {
        out += std::to_string(i) + ',' + std::to_string(j) + ',' + cube.region_ids()[k] + ',' +
               std::to_string(cube.truth()[k]) + ',' + std::to_string(cube.label(i, j, k)) + '\n';
      }
  return out;
}

/// Parses cube CSV. Grid size comes from the largest extractor/classifier
/// index; class_count from the largest label unless given (> 0).
inline PredictionCube parse_cube_csv(std::string_view text, int class_count = 0) {
  const auto rows = io::lines(text);
  if (rows.empty() || io::trim(rows[0]) != "extractor,classifier,region_id,truth,predicted")
    throw DataError("learners", "cube header must be 'extractor,classifier,region_id,truth,predicted'");

  struct Row {
    std::size_t i, j, region;
    Label truth, predicted;
  };
  std::vector<Row> parsed;
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> index_of;
  std::size_t n_fe = 0, n_cl = 0;
  int max_label = 0;
  for (std::size_t n = 1; n < rows.size(); ++n) {
    if (io::trim(rows[n]).empty()) continue;
    const std::string where = "row " + std::to_string(n + 1) + ": ";
    const auto cells = io::split(rows[n]);
    if (cells.size() != 5) throw DataError("learners", where + "expected 5 fields");
    long long i = 0, j = 0, t = 0, p = 0;
    if (!io::parse_long(cells[0], i) || !io::parse_long(cells[1], j) ||
        !io::parse_long(cells[3], t) || !io::parse_long(cells[4], p) || i < 0 || j < 0)
      throw DataError("learners", where + "malformed integer field");
    if (t < 0 || p < 0) throw DataError("learners", where + "label out of range");
    if (class_count > 0 && (t > class_count || p > class_count))
      throw DataError("learners", where + "label out of range 0.." + std::to_string(class_count));
    const std::string id(io::trim(cells[2]));
    if (id.empty()) throw DataError("learners", where + "empty region_id");
    auto [it, inserted] = index_of.emplace(id, ids.size());
    if (inserted) ids.push_back(id);
    parsed.push_back(Row{static_cast<std::size_t>(i), static_cast<std::size_t>(j), it->second,
                         static_cast<Label>(t), static_cast<Label>(p)});
    n_fe = std::max(n_fe, static_cast<std::size_t>(i) + 1);
    n_cl = std::max(n_cl, static_cast<std::size_t>(j) + 1);
    max_label = std::max({max_label, static_cast<int>(t), static_cast<int>(p)});
  }
  if (parsed.empty()) throw DataError("learners", "empty cube");
  const int classes = class_count > 0 ? class_count : std::max(max_label, 1);

  std::vector<Label> truth(ids.size(), -1);
  std::vector<char> filled(ids.size() * n_fe * n_cl, 0);
  PredictionCube cube(n_fe, n_cl, classes, ids, std::vector<Label>(ids.size(), 0));
  for (const auto& r : parsed) {
    char& slot = filled[(r.region * n_fe + r.i) * n_cl + r.j];
    if (slot)
      throw DataError("learners", "duplicate vote for (" + std::to_string(r.i) + "," +
                                      std::to_string(r.j) + ",\"" + ids[r.region] + "\")");
    slot = 1;
    if (truth[r.region] >= 0 && truth[r.region] != r.truth)
      throw DataError("learners", "conflicting truth for region " + ids[r.region]);
    truth[r.region] = r.truth;
    cube.set_label(r.i, r.j, r.region, r.predicted);
  }
  for (std::size_t k = 0; k < ids.size(); ++k)
    for (std::size_t c = 0; c < n_fe * n_cl; ++c)
      if (!filled[k * n_fe * n_cl + c])
        throw DataError("learners", "incomplete grid for region " + ids[k]);
  PredictionCube out(n_fe, n_cl, classes, ids, truth);
  for (std::size_t k = 0; k < ids.size(); ++k)
    for (std::size_t i = 0; i < n_fe; ++i)
      for (std::size_t j = 0; j < n_cl; ++j) out.set_label(i, j, k, cube.label(i, j, k));
  return out;
}

inline PredictionCube ingest_prediction_cube(const std::filesystem::path& path,
                                             int class_count = 0) {
  return parse_cube_csv(io::read_file(path, "learners"), class_count);
}

}  // namespace swarmvote
