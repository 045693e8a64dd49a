#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "swarmvote/swarmvote.hpp"

namespace swarmvote::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(SWARMVOTE_FIXTURES) / name;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("swarmvote_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Dataset with the given per-class counts and random 2-d single-channel features.
inline Dataset counts_dataset(const std::vector<std::size_t>& counts, std::uint64_t seed = 1) {
  Xoshiro256 rng(seed);
  std::vector<LabeledRegion> regions;
  std::size_t id = 0;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (std::size_t n = 0; n < counts[c]; ++n)
      regions.push_back({"r" + std::to_string(id++), static_cast<Label>(c),
                         {{rng.normal(), rng.normal()}}});
  // interleave classes so row order is not sorted by label
  shuffle(std::span<LabeledRegion>(regions), rng);
  return make_dataset(std::move(regions), {2}, static_cast<int>(counts.size()) - 1);
}

/// Cube with uniformly random votes.
inline PredictionCube random_cube(Xoshiro256& rng, std::size_t n_fe, std::size_t n_cl,
                                  int class_count, std::size_t regions) {
  std::vector<std::string> ids;
  std::vector<Label> truth;
  for (std::size_t k = 0; k < regions; ++k) {
    ids.push_back("r" + std::to_string(k));
    truth.push_back(static_cast<Label>(rng.below(static_cast<std::uint64_t>(class_count) + 1)));
  }
  PredictionCube cube(n_fe, n_cl, class_count, ids, truth);
  for (std::size_t k = 0; k < regions; ++k)
    for (std::size_t i = 0; i < n_fe; ++i)
      for (std::size_t j = 0; j < n_cl; ++j)
        cube.set_label(i, j, k,
                       static_cast<Label>(rng.below(static_cast<std::uint64_t>(class_count) + 1)));
  return cube;
}

}  // namespace swarmvote::testing
