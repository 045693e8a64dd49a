#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dataset.hpp"
#include "error.hpp"

namespace swarmvote {

/// Counts indexed (truth, predicted) over labels 0..C. Class 0 is background.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int class_count)
      : classes_(static_cast<std::size_t>(class_count) + 1), counts_(classes_ * classes_, 0) {}

  int class_count() const { return static_cast<int>(classes_) - 1; }
  std::size_t operator()(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  void add(Label truth, Label predicted) {
    ++counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)];
  }

  std::size_t total() const {
    std::size_t s = 0;
    for (auto v : counts_) s += v;
    return s;
  }
  std::size_t trace() const {
    std::size_t s = 0;
    for (std::size_t c = 0; c < classes_; ++c) s += (*this)(c, c);
    return s;
  }

  std::size_t tp(std::size_t c) const { return (*this)(c, c); }
  std::size_t fp(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t t = 0; t < classes_; ++t)
      if (t != c) s += (*this)(t, c);
    return s;
  }
  std::size_t fn(std::size_t c) const { return support(c) - tp(c); }
  /// N_c: regions whose truth is c.
  std::size_t support(std::size_t c) const {
    std::size_t s = 0;
    for (std::size_t p = 0; p < classes_; ++p) s += (*this)(c, p);
    return s;
  }
  /// N_Total: regions of object classes 1..C.
  std::size_t object_total() const { return total() - support(0); }

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

inline ConfusionMatrix confusion_matrix(std::span<const Label> predicted,
                                        std::span<const Label> truth, int class_count) {
  if (predicted.size() != truth.size())
    throw DataError("metrics", "predicted and truth differ in length");
  if (truth.empty()) throw DataError("metrics", "no regions to evaluate");
  ConfusionMatrix cm(class_count);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] < 0 || truth[k] > class_count || predicted[k] < 0 || predicted[k] > class_count)
      throw DataError("metrics", "label out of range at position " + std::to_string(k));
    cm.add(truth[k], predicted[k]);
  }
  return cm;
}

/// Correct regions over all evaluated regions, background included.
inline double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw DataError("metrics", "empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
}

/// Object-class precision weighted by N_c / N_Total. A class that is never
/// predicted contributes 0.
inline double precision_avg(const ConfusionMatrix& cm) {
  const auto n_total = static_cast<double>(cm.object_total());
  if (n_total == 0) throw DataError("metrics", "no object-class regions (N_Total = 0)");
  double sum = 0.0;
  for (std::size_t c = 1; c <= static_cast<std::size_t>(cm.class_count()); ++c) {
    const std::size_t predicted = cm.tp(c) + cm.fp(c);
    if (predicted == 0) continue;
    sum += (static_cast<double>(cm.tp(c)) / static_cast<double>(predicted)) *
           (static_cast<double>(cm.support(c)) / n_total);
  }
  return sum;
}

/// Object-class recall weighted by N_c / N_Total.
inline double recall_avg(const ConfusionMatrix& cm) {
  const auto n_total = static_cast<double>(cm.object_total());
  if (n_total == 0) throw DataError("metrics", "no object-class regions (N_Total = 0)");
  double sum = 0.0;
  for (std::size_t c = 1; c <= static_cast<std::size_t>(cm.class_count()); ++c) {
    const std::size_t n = cm.support(c);
    if (n == 0) continue;
    sum += (static_cast<double>(cm.tp(c)) / static_cast<double>(n)) *
           (static_cast<double>(n) / n_total);
  }
  return sum;
}

struct FitnessWeights {
  double accuracy = 0.5;
  double precision = 0.3;
  double recall = 0.2;

  void validate() const {
    if (!(accuracy >= 0 && precision >= 0 && recall >= 0) ||
        !(accuracy + precision + recall > 0))
      throw UsageError("metrics", "fitness weights must be non-negative with a positive sum");
  }
};

inline double fitness(const ConfusionMatrix& cm, const FitnessWeights& fw) {
  fw.validate();
  return fw.precision * precision_avg(cm) + fw.recall * recall_avg(cm) +
         fw.accuracy * accuracy(cm);
}

/// `{accuracy, precision_avg, recall_avg, fitness, per_class, confusion}`.
inline nlohmann::json metrics_report(const ConfusionMatrix& cm, const FitnessWeights& fw) {
  nlohmann::json j;
  j["accuracy"] = accuracy(cm);
  j["precision_avg"] = precision_avg(cm);
  j["recall_avg"] = recall_avg(cm);
  j["fitness"] = fitness(cm, fw);
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 1; c <= static_cast<std::size_t>(cm.class_count()); ++c) {
    const std::size_t predicted = cm.tp(c) + cm.fp(c);
    const std::size_t n = cm.support(c);
    per_class[std::to_string(c)] = {
        {"tp", cm.tp(c)},
        {"fp", cm.fp(c)},
        {"fn", cm.fn(c)},
        {"support", n},
        {"precision", predicted ? static_cast<double>(cm.tp(c)) / static_cast<double>(predicted) : 0.0},
        {"recall", n ? static_cast<double>(cm.tp(c)) / static_cast<double>(n) : 0.0}};
  }
  j["per_class"] = per_class;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t t = 0; t <= static_cast<std::size_t>(cm.class_count()); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p <= static_cast<std::size_t>(cm.class_count()); ++p)
      row.push_back(cm(t, p));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

}  // namespace swarmvote
