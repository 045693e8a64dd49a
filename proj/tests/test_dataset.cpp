#include <gtest/gtest.h>

#include <map>

#include "test_support.hpp"

using namespace swarmvote;
using swarmvote::testing::counts_dataset;
using swarmvote::testing::scratch_dir;

namespace {

const Schema kSchema{{2, 1}, 4};

std::string expect_data_error(const std::string& csv, const Schema& schema = kSchema) {
  try {
    parse_dataset_csv(csv, schema);
  } catch (const DataError& e) {
    return e.what();
  }
  ADD_FAILURE() << "expected DataError";
  return {};
}

std::vector<std::size_t> per_class(const Dataset& ds) { return ds.class_counts; }

}  // namespace

TEST(LoadDataset, ThreeRows) {
  const std::string csv =
      "region_id,label,ch0_f0,ch0_f1,ch1_f0\n"
      "a,0,1.5,2,3\n"
      "b,1,-1,0.25,4e-3\n"
      "c,1,0,0,0\n";
  const auto ds = parse_dataset_csv(csv, kSchema);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.class_counts, (std::vector<std::size_t>{1, 2, 0, 0, 0}));
  EXPECT_EQ(ds.regions[0].region_id, "a");
  EXPECT_EQ(ds.regions[1].features[0], (std::vector<double>{-1, 0.25}));
  EXPECT_EQ(ds.regions[1].features[1], (std::vector<double>{4e-3}));
}

TEST(LoadDataset, EmptyBodyIsAnError) {
  EXPECT_NE(expect_data_error("region_id,label,ch0_f0,ch0_f1,ch1_f0\n").find("empty dataset"),
            std::string::npos);
}

TEST(LoadDataset, ErrorsNameTheRow) {
  const std::string header = "region_id,label,ch0_f0,ch0_f1,ch1_f0\n";
  const std::string good = "a,0,1,2,3\n";
  EXPECT_NE(expect_data_error(header + good + "b,1,1,x,3\n").find("row 3"), std::string::npos);
  EXPECT_NE(expect_data_error(header + good + "b,1,1,nan,3\n").find("row 3"), std::string::npos);
  EXPECT_NE(expect_data_error(header + good + "b,1,1,inf,3\n").find("non-finite"),
            std::string::npos);
  EXPECT_NE(expect_data_error(header + "b,5,1,1,3\n").find("row 2"), std::string::npos);
  EXPECT_NE(expect_data_error(header + "b,-1,1,1,3\n").find("outside"), std::string::npos);
  EXPECT_NE(expect_data_error(header + "b,1,1,1\n").find("dimensionality"), std::string::npos);
  EXPECT_NE(expect_data_error(header + good + "a,1,1,1,1\n").find("duplicate"),
            std::string::npos);
}

TEST(LoadDataset, HeaderMustMatchSchema) {
  EXPECT_NE(expect_data_error("region_id,label,ch0_f0,ch1_f0\na,0,1,2\n").find("header"),
            std::string::npos);
  EXPECT_NE(expect_data_error("").find("header"), std::string::npos);
}

TEST(LoadDataset, ClassCountsFromFile) {
  const std::vector<std::size_t> counts = {4905, 4479, 780, 2629, 82};
  const auto original = counts_dataset(counts);
  const auto dir = scratch_dir("class_counts");
  io::write_file(dir / "data.csv", dataset_to_csv(original), "test");
  io::write_file(dir / "schema.json", schema_to_json(Schema{{2}, 4}).dump(), "test");
  const auto ds = load_dataset(dir / "data.csv", load_schema(dir / "schema.json"));
  EXPECT_EQ(ds.size(), 12875u);
  EXPECT_EQ(ds.class_counts, counts);
  for (std::size_t k = 0; k < ds.size(); k += 997)
    EXPECT_EQ(ds.regions[k].region_id, original.regions[k].region_id);
}

TEST(LoadDataset, MissingFileNamesPath) {
  try {
    load_dataset("/nonexistent/where.csv", kSchema);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/where.csv"), std::string::npos);
  }
}

TEST(LoadSchema, RejectsBadDeclarations) {
  EXPECT_THROW(parse_schema(nlohmann::json::parse(R"({"channels":[],"class_count":4})")),
               DataError);
  EXPECT_THROW(parse_schema(nlohmann::json::parse(R"({"channels":[0],"class_count":4})")),
               DataError);
  EXPECT_THROW(parse_schema(nlohmann::json::parse(R"({"channels":[3]})")), DataError);
  const auto s = parse_schema(nlohmann::json::parse(R"({"channels":[3,2],"class_count":4})"));
  EXPECT_EQ(s.channel_dims, (std::vector<std::size_t>{3, 2}));
}

TEST(SplitHoldout, EightOfOneClass) {
  const auto ds = counts_dataset({0, 8});
  const auto split = split_holdout(ds, 0.75, 3);
  EXPECT_EQ(split.train.size(), 6u);
  EXPECT_EQ(split.test.size(), 2u);
}

TEST(SplitHoldout, RoundsHalfUp) {
  EXPECT_EQ(holdout_train_share(82, 0.75), 62u);  // 61.5
  EXPECT_EQ(holdout_train_share(4905, 0.75), 3679u);
  EXPECT_EQ(holdout_train_share(4479, 0.75), 3359u);
  EXPECT_EQ(holdout_train_share(1, 0.75), 1u);
}

TEST(SplitHoldout, KeepsBothSidesNonEmpty) {
  const auto ds = counts_dataset({2, 10});
  const auto split = split_holdout(ds, 0.9, 1);  // round(1.8) = 2 -> adjusted to 1
  EXPECT_EQ(split.train.class_counts[0], 1u);
  EXPECT_EQ(split.test.class_counts[0], 1u);
  ASSERT_EQ(split.warnings.size(), 1u);
  EXPECT_NE(split.warnings[0].find("class 0"), std::string::npos);
}

TEST(SplitHoldout, FractionOutOfRange) {
  const auto ds = counts_dataset({4, 4});
  EXPECT_THROW(split_holdout(ds, 0.0, 1), UsageError);
  EXPECT_THROW(split_holdout(ds, 1.0, 1), UsageError);
  EXPECT_THROW(split_holdout(ds, -0.5, 1), UsageError);
}

TEST(SplitHoldout, LargeDatasetTotals) {
  const auto ds = counts_dataset({4905, 4479, 780, 2629, 82});
  const auto split = split_holdout(ds, 0.75, 11);
  EXPECT_EQ(split.train.size(), 9657u);
  EXPECT_EQ(split.test.size(), 3218u);
  EXPECT_EQ(split.train.class_counts, (std::vector<std::size_t>{3679, 3359, 585, 1972, 62}));
}

TEST(SplitHoldout, DeterministicAndSeedSensitive) {
  const auto ds = counts_dataset({30, 40, 20});
  auto ids = [](const Dataset& d) {
    std::vector<std::string> out;
    for (const auto& r : d.regions) out.push_back(r.region_id);
    return out;
  };
  const auto a = split_holdout(ds, 0.75, 5), b = split_holdout(ds, 0.75, 5),
             c = split_holdout(ds, 0.75, 6);
  EXPECT_EQ(ids(a.train), ids(b.train));
  EXPECT_EQ(ids(a.test), ids(b.test));
  EXPECT_NE(ids(a.train), ids(c.train));
}

// Conservation over random class mixes and fractions.
TEST(SplitHoldout, ConservationProperty) {
  Xoshiro256 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> counts(2 + rng.below(4));
    for (auto& c : counts) c = 1 + rng.below(40);
    const double fraction = 0.05 + 0.9 * rng.uniform();
    const auto ds = counts_dataset(counts, trial);
    const auto split = split_holdout(ds, fraction, rng.next());
    ASSERT_EQ(split.train.size() + split.test.size(), ds.size());
    std::map<std::string, int> seen;
    for (const auto& r : split.train.regions) ++seen[r.region_id];
    for (const auto& r : split.test.regions) ++seen[r.region_id];
    ASSERT_EQ(seen.size(), ds.size());
    for (const auto& [id, n] : seen) ASSERT_EQ(n, 1);
    for (std::size_t c = 0; c < counts.size(); ++c) {
      ASSERT_EQ(split.train.class_counts[c] + split.test.class_counts[c], counts[c]);
      if (counts[c] >= 2) {
        ASSERT_GE(split.train.class_counts[c], 1u);
        ASSERT_GE(split.test.class_counts[c], 1u);
      }
    }
  }
}

TEST(StratifiedKFold, ExactDivisibility) {
  const auto ds = counts_dataset({50, 50});
  const auto plan = stratified_kfold(ds, 10, 3);
  for (std::size_t f = 0; f < 10; ++f) {
    std::vector<int> per(2, 0);
    for (auto n : plan.members(f)) ++per[static_cast<std::size_t>(ds.regions[n].label)];
    EXPECT_EQ(per[0], 5);
    EXPECT_EQ(per[1], 5);
  }
}

TEST(StratifiedKFold, BusClassFiveOrSix) {
  const auto split = split_holdout(counts_dataset({4905, 4479, 780, 2629, 82}), 0.75, 1);
  // round-half-up gives 62 Bus training regions; check the 59-region case too.
  const auto bus59 = counts_dataset({3683, 3364, 569, 1982, 59});
  for (const Dataset* ds : {&split.train, &bus59}) {
    const auto plan = stratified_kfold(*ds, 10, 9);
    const std::size_t bus = ds->class_counts[4];
    for (std::size_t f = 0; f < 10; ++f) {
      std::size_t n = 0;
      for (auto k : plan.members(f)) n += ds->regions[k].label == 4;
      EXPECT_TRUE(n == bus / 10 || n == (bus + 9) / 10) << "fold " << f << " has " << n;
    }
  }
}

TEST(StratifiedKFold, RejectsBadK) {
  const auto ds = counts_dataset({3, 3});
  try {
    stratified_kfold(ds, 1, 0);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("K must be ≥ 2"), std::string::npos);
  }
  EXPECT_THROW(stratified_kfold(ds, 7, 0), UsageError);
  EXPECT_NO_THROW(stratified_kfold(ds, 6, 0));
}

TEST(StratifiedKFold, PartitionAndStratificationProperty) {
  Xoshiro256 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> counts(2 + rng.below(4));
    std::size_t total = 0;
    for (auto& c : counts) total += (c = 1 + rng.below(30));
    const std::size_t k = 2 + rng.below(std::min<std::size_t>(total - 1, 12));
    const auto ds = counts_dataset(counts, trial + 100);
    const auto plan = stratified_kfold(ds, k, rng.next());

    std::vector<std::size_t> fold_total(k, 0);
    std::vector<std::vector<std::size_t>> share(counts.size(), std::vector<std::size_t>(k, 0));
    ASSERT_EQ(plan.fold_of.size(), ds.size());
    for (std::size_t n = 0; n < ds.size(); ++n) {
      ASSERT_LT(plan.fold_of[n], k);
      ++fold_total[plan.fold_of[n]];
      ++share[static_cast<std::size_t>(ds.regions[n].label)][plan.fold_of[n]];
    }
    std::size_t sum = 0;
    for (auto t : fold_total) sum += t;
    ASSERT_EQ(sum, ds.size());
    for (const auto& s : share) {
      const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
      ASSERT_LE(*hi - *lo, 1u);
    }
    const auto [lo, hi] = std::minmax_element(fold_total.begin(), fold_total.end());
    ASSERT_LE(*hi - *lo, 1u);
  }
}

TEST(StratifiedKFold, Deterministic) {
  const auto ds = counts_dataset({20, 13, 7});
  EXPECT_EQ(stratified_kfold(ds, 4, 8).fold_of, stratified_kfold(ds, 4, 8).fold_of);
  EXPECT_NE(stratified_kfold(ds, 4, 8).fold_of, stratified_kfold(ds, 4, 9).fold_of);
}

TEST(MakeDataset, ChecksInvariants) {
  EXPECT_THROW(make_dataset({{"a", 3, {{0.0}}}}, {1}, 2), DataError);
  EXPECT_THROW(make_dataset({{"a", 1, {{0.0, 1.0}}}}, {1}, 2), DataError);
  EXPECT_THROW(make_dataset({{"a", 1, {{std::nan("")}}}}, {1}, 2), DataError);
  const auto ds = make_dataset({{"a", 1, {{0.0}}}, {"b", 1, {{1.0}}}}, {1}, 2);
  EXPECT_EQ(per_class(ds), (std::vector<std::size_t>{0, 2, 0}));
}
