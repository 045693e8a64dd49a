#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "io.hpp"
#include "rng.hpp"

namespace swarmvote {

using Label = int;

/// Channel layout and label range of a dataset. Loaded from the JSON sidecar
/// `{ "channels": [d0, d1, ...], "class_count": C }`.
struct Schema {
  std::vector<std::size_t> channel_dims;
  int class_count = 0;  // object classes; labels run 0..class_count

  std::size_t channel_count() const { return channel_dims.size(); }
};

/// One cropped region: a feature vector per channel and a label
/// (0 = background, 1..C = object classes).
struct LabeledRegion {
  std::string region_id;
  Label label = 0;
  std::vector<std::vector<double>> features;
};

struct Dataset {
  std::vector<LabeledRegion> regions;
  std::vector<std::size_t> channel_dims;
  int class_count = 0;
  std::vector<std::size_t> class_counts;  // indexed by label 0..C

  std::size_t size() const { return regions.size(); }
  std::size_t channel_count() const { return channel_dims.size(); }

  std::vector<Label> labels() const {
    std::vector<Label> out;
    out.reserve(regions.size());
    for (const auto& r : regions) out.push_back(r.label);
    return out;
  }

  /// Row-major copy of one channel's feature matrix, one row per region.
  std::vector<std::vector<double>> channel(std::size_t index) const {
    std::vector<std::vector<double>> out;
    out.reserve(regions.size());
    for (const auto& r : regions) out.push_back(r.features.at(index));
    return out;
  }
};

/// Recomputes class_counts and checks every region against the layout.
inline Dataset make_dataset(std::vector<LabeledRegion> regions,
                            std::vector<std::size_t> channel_dims, int class_count) {
  if (class_count < 1) throw UsageError("dataset", "class_count must be >= 1");
  Dataset ds;
  ds.channel_dims = std::move(channel_dims);
  ds.class_count = class_count;
  ds.class_counts.assign(static_cast<std::size_t>(class_count) + 1, 0);
  for (std::size_t row = 0; row < regions.size(); ++row) {
    const auto& r = regions[row];
    if (r.label < 0 || r.label > class_count)
      throw DataError("dataset", "region '" + r.region_id + "': label " +
                                     std::to_string(r.label) + " outside 0.." +
                                     std::to_string(class_count));
    if (r.features.size() != ds.channel_dims.size())
      throw DataError("dataset", "region '" + r.region_id + "': expected " +
                                     std::to_string(ds.channel_dims.size()) + " channels");
    for (std::size_t c = 0; c < r.features.size(); ++c) {
      if (r.features[c].size() != ds.channel_dims[c])
        throw DataError("dataset", "region '" + r.region_id + "': channel " +
                                       std::to_string(c) + " dimensionality mismatch");
      for (double v : r.features[c])
        if (!std::isfinite(v))
          throw DataError("dataset", "region '" + r.region_id + "': non-finite feature");
    }
    ++ds.class_counts[static_cast<std::size_t>(r.label)];
  }
  ds.regions = std::move(regions);
  return ds;
}

inline Schema parse_schema(const nlohmann::json& j) {
  Schema s;
  try {
    for (const auto& d : j.at("channels")) {
      const auto dim = d.get<long long>();
      if (dim <= 0) throw DataError("dataset", "channel dimensionality must be positive");
      s.channel_dims.push_back(static_cast<std::size_t>(dim));
    }
    s.class_count = j.at("class_count").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset", std::string("invalid schema: ") + e.what());
  }
  if (s.channel_dims.empty()) throw DataError("dataset", "schema declares no channels");
  if (s.class_count < 1) throw DataError("dataset", "schema class_count must be >= 1");
  return s;
}

inline Schema load_schema(const std::filesystem::path& path) {
  const std::string text = io::read_file(path, "dataset");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dataset", "schema '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_schema(j);
}

inline nlohmann::json schema_to_json(const Schema& s) {
  return {{"channels", s.channel_dims}, {"class_count", s.class_count}};
}

inline std::string dataset_header(const Schema& schema) {
  std::string h = "region_id,label";
  for (std::size_t c = 0; c < schema.channel_dims.size(); ++c)
    for (std::size_t f = 0; f < schema.channel_dims[c]; ++f)
      h += ",ch" + std::to_string(c) + "_f" + std::to_string(f);
  return h;
}

/// Parses dataset CSV text. Errors carry the 1-based line number.
inline Dataset parse_dataset_csv(std::string_view text, const Schema& schema) {
  const auto rows = io::lines(text);
  if (rows.empty() || io::trim(rows[0]).empty())
    throw DataError("dataset", "missing header row");
  if (io::trim(rows[0]) != dataset_header(schema))
    throw DataError("dataset", "header does not match schema (expected '" +
                                   dataset_header(schema) + "')");

  std::size_t width = 2;
  for (auto d : schema.channel_dims) width += d;

  std::vector<LabeledRegion> regions;
  std::unordered_set<std::string> seen;
  for (std::size_t n = 1; n < rows.size(); ++n) {
    const std::string where = "row " + std::to_string(n + 1) + ": ";
    if (io::trim(rows[n]).empty()) continue;
    const auto cells = io::split(rows[n]);
    if (cells.size() != width)
      throw DataError("dataset", where + "expected " + std::to_string(width) +
                                     " fields, found " + std::to_string(cells.size()) +
                                     " (channel dimensionality mismatch)");
    LabeledRegion region;
    region.region_id = std::string(io::trim(cells[0]));
    if (region.region_id.empty()) throw DataError("dataset", where + "empty region_id");
    if (!seen.insert(region.region_id).second)
      throw DataError("dataset", where + "duplicate region_id '" + region.region_id + "'");
    long long label = 0;
    if (!io::parse_long(cells[1], label))
      throw DataError("dataset", where + "malformed label '" + std::string(cells[1]) + "'");
    if (label < 0 || label > schema.class_count)
      throw DataError("dataset", where + "label " + std::to_string(label) + " outside 0.." +
                                     std::to_string(schema.class_count));
    region.label = static_cast<Label>(label);

    std::size_t col = 2;
    region.features.resize(schema.channel_dims.size());
    for (std::size_t c = 0; c < schema.channel_dims.size(); ++c) {
      auto& vec = region.features[c];
      vec.resize(schema.channel_dims[c]);
      for (double& v : vec) {
        if (!io::parse_double(cells[col], v))
          throw DataError("dataset", where + "malformed number '" + std::string(cells[col]) + "'");
        if (!std::isfinite(v)) throw DataError("dataset", where + "non-finite feature value");
        ++col;
      }
    }
    regions.push_back(std::move(region));
  }
  if (regions.empty()) throw DataError("dataset", "empty dataset");
  return make_dataset(std::move(regions), schema.channel_dims, schema.class_count);
}

inline Dataset load_dataset(const std::filesystem::path& path, const Schema& schema) {
  return parse_dataset_csv(io::read_file(path, "dataset"), schema);
}

inline std::string dataset_to_csv(const Dataset& ds) {
  std::string out = dataset_header(Schema{ds.channel_dims, ds.class_count});
  out += '\n';
  for (const auto& r : ds.regions) {
    out += r.region_id;
    out += ',';
    out += std::to_string(r.label);
    for (const auto& channel : r.features)
      for (double v : channel) {
        out += ',';
        out += io::format_double(v);
      }
    out += '\n';
  }
  return out;
}

/// Subset in the given index order.
inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<LabeledRegion> regions;
  regions.reserve(indices.size());
  for (auto i : indices) regions.push_back(ds.regions.at(i));
  return make_dataset(std::move(regions), ds.channel_dims, ds.class_count);
}

/// Positions of each label, in row order.
inline std::vector<std::vector<std::size_t>> indices_by_class(std::span<const Label> labels,
                                                              int class_count) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(class_count) + 1);
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] < 0 || labels[k] > class_count)
      throw DataError("dataset", "label " + std::to_string(labels[k]) + " out of range");
    out[static_cast<std::size_t>(labels[k])].push_back(k);
  }
  return out;
}

/// round(N_c * fraction), half up, then nudged so both sides keep at least one
/// member when N_c >= 2.
inline std::size_t holdout_train_share(std::size_t class_size, double train_fraction,
                                       bool* adjusted = nullptr) {
  auto share = static_cast<std::size_t>(
      std::floor(static_cast<double>(class_size) * train_fraction + 0.5));
  bool nudged = false;
  if (class_size >= 2) {
    if (share == 0) share = 1, nudged = true;
    if (share == class_size) share = class_size - 1, nudged = true;
  }
  if (adjusted) *adjusted = nudged;
  return share;
}

struct HoldoutSplit {
  Dataset train;
  Dataset test;
  std::vector<std::string> warnings;
};

/// Stratified hold-out split. Each class is shuffled with its own substream
/// and its first holdout_train_share() members go to train. Both outputs
/// keep the input row order.
inline HoldoutSplit split_holdout(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw UsageError("dataset", "train_fraction must lie in (0, 1)");
  if (ds.size() == 0) throw DataError("dataset", "empty dataset");

  HoldoutSplit result;
  const auto labels = ds.labels();
  auto by_class = indices_by_class(labels, ds.class_count);
  std::vector<char> in_train(ds.size(), 0);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    auto rng = Xoshiro256::derive(seed, {0x686f6c64ULL, c});
    shuffle(std::span<std::size_t>(members), rng);
    bool adjusted = false;
    const std::size_t share = holdout_train_share(members.size(), train_fraction, &adjusted);
    if (adjusted)
      result.warnings.push_back("class " + std::to_string(c) + ": train share adjusted to " +
                                std::to_string(share) + " of " +
                                std::to_string(members.size()) +
                                " to keep both sides non-empty");
    for (std::size_t n = 0; n < share; ++n) in_train[members[n]] = 1;
  }

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t k = 0; k < ds.size(); ++k) (in_train[k] ? train_idx : test_idx).push_back(k);
  result.train = subset(ds, train_idx);
  result.test = subset(ds, test_idx);
  return result;
}

/// Assignment of each region (by position) to one of K validation folds.
struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> region_ids;
  std::vector<std::size_t> fold_of;  // parallel to region_ids

  std::vector<std::size_t> members(std::size_t fold) const {
    std::vector<std::size_t> out;
    for (std::size_t n = 0; n < fold_of.size(); ++n)
      if (fold_of[n] == fold) out.push_back(n);
    return out;
  }

  /// Degenerate plan with one fold holding every region.
  static FoldPlan single(std::vector<std::string> ids) {
    FoldPlan plan;
    plan.k = 1;
    plan.fold_of.assign(ids.size(), 0);
    plan.region_ids = std::move(ids);
    return plan;
  }
};

/// Stratified K-fold. Each class is shuffled, then dealt round-robin; the
/// deal continues where the previous class stopped so fold totals stay
/// within one of each other as well.
inline FoldPlan stratified_kfold(std::span<const Label> labels,
                                 std::span<const std::string> region_ids, int class_count,
                                 std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("dataset", "K must be ≥ 2");
  if (k > labels.size())
    throw UsageError("dataset", "K (" + std::to_string(k) + ") exceeds number of regions (" +
                                    std::to_string(labels.size()) + ")");
  if (region_ids.size() != labels.size())
    throw UsageError("dataset", "region_ids and labels differ in length");

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.region_ids.assign(region_ids.begin(), region_ids.end());
  plan.fold_of.assign(labels.size(), 0);

  auto by_class = indices_by_class(labels, class_count);
  std::size_t next_fold = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    auto rng = Xoshiro256::derive(seed, {0x6b666f6c64ULL, c});
    shuffle(std::span<std::size_t>(members), rng);
    for (auto idx : members) {
      plan.fold_of[idx] = next_fold;
      next_fold = (next_fold + 1) % k;
    }
  }
  return plan;
}

inline FoldPlan stratified_kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  const auto labels = ds.labels();
  std::vector<std::string> ids;
  ids.reserve(ds.size());
  for (const auto& r : ds.regions) ids.push_back(r.region_id);
  return stratified_kfold(labels, ids, ds.class_count, k, seed);
}

}  // namespace swarmvote
