#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "dataset.hpp"
#include "metrics.hpp"
#include "rng.hpp"

using namespace sep;

namespace {

HouseholdRecord record_with_income(std::map<std::string, Money> sources) {
  HouseholdRecord rec;
  rec.id = "h1";
  rec.income_sources = std::move(sources);
  return rec;
}

}  // namespace

TEST_CASE("income SEP is the sum of sources") {
  CHECK(compute_income_sep(record_with_income({{"salary", 5000}, {"farming", 1000},
                                               {"remittances", 0}})) == doctest::Approx(6000));
  CHECK(compute_income_sep(record_with_income({{"a", 0}, {"b", 0}})) == 0.0);
  CHECK(compute_income_sep(record_with_income({})) == 0.0);
}

TEST_CASE("expenditure SEP is the sum of sources") {
  HouseholdRecord rec;
  rec.id = "h1";
  rec.expenditure_sources = {{"food", 2000}, {"transport", 500}};
  CHECK(compute_expenditure_sep(rec) == doctest::Approx(2500));
}

TEST_CASE("negative source values are rejected") {
  CHECK_THROWS_AS(compute_income_sep(record_with_income({{"salary", -1}})), ValidationError);
}

TEST_CASE("random source tables match a naive accumulation oracle") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::map<std::string, Money> sources;
    double expected = 0.0;
    const int n = 20;
    for (int i = 0; i < n; ++i) {
      const double v = rng.uniform(0.0, 10000.0);
      sources["src" + std::to_string(i)] = v;
      expected += v;
    }
    CHECK(compute_income_sep(record_with_income(sources)) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("sum SEP is additive over disjoint source maps") {
  Rng rng(7);
  std::map<std::string, Money> a, b, both;
  for (int i = 0; i < 8; ++i) {
    a["a" + std::to_string(i)] = rng.uniform(0.0, 100.0);
    b["b" + std::to_string(i)] = rng.uniform(0.0, 100.0);
  }
  both = a;
  both.insert(b.begin(), b.end());
  CHECK(compute_income_sep(record_with_income(both)) ==
        doctest::Approx(compute_income_sep(record_with_income(a)) +
                        compute_income_sep(record_with_income(b))));
}

namespace {

Cohort asset_column(const std::vector<std::optional<std::string>>& values) {
  Cohort cohort;
  for (size_t i = 0; i < values.size(); ++i) {
    HouseholdRecord rec;
    rec.id = "h" + std::to_string(i);
    rec.assets["v"] = values[i];
    cohort.push_back(rec);
  }
  return cohort;
}

}  // namespace

TEST_CASE("impute_assets fills with the modal category") {
  const Cohort out = impute_assets(asset_column({"A", "A", "B", std::nullopt}));
  CHECK(*out[3].assets.at("v") == "A");
  for (int i = 0; i < 3; ++i) CHECK(out[i].assets.at("v").has_value());
}

TEST_CASE("impute_assets leaves complete cohorts unchanged") {
  const Cohort in = asset_column({"A", "B", "A"});
  const Cohort out = impute_assets(in);
  for (size_t i = 0; i < in.size(); ++i) CHECK(*out[i].assets.at("v") == *in[i].assets.at("v"));
}

TEST_CASE("impute_assets breaks ties lexicographically") {
  const Cohort out = impute_assets(asset_column({"B", "A", "B", "A", std::nullopt}));
  CHECK(*out[4].assets.at("v") == "A");
  const Cohort zebra =
      impute_assets(asset_column({"zeta", "alpha", "zeta", "alpha", std::nullopt}));
  CHECK(*zebra[4].assets.at("v") == "alpha");
}

TEST_CASE("impute_assets is idempotent") {
  const Cohort once = impute_assets(asset_column({"A", "A", "B", std::nullopt, "B", "B"}));
  const Cohort twice = impute_assets(once);
  for (size_t i = 0; i < once.size(); ++i) {
    CHECK(*twice[i].assets.at("v") == *once[i].assets.at("v"));
  }
}

TEST_CASE("impute_assets rejects a fully missing variable") {
  CHECK_THROWS_WITH_AS(impute_assets(asset_column({std::nullopt, std::nullopt})),
                       doctest::Contains("'v'"), ValidationError);
}

TEST_CASE("binarize_labels thresholds at the train median") {
  SepTable sep;
  for (int i = 1; i <= 4; ++i) {
    sep["h" + std::to_string(i)] = {static_cast<double>(i), static_cast<double>(i),
                                    static_cast<double>(i)};
  }
  const BinaryLabels labels = binarize_labels(sep, {"h1", "h2", "h3", "h4"});
  CHECK(labels.thresholds[0] == doctest::Approx(2.5));
  CHECK(labels.flags.at("h3")[0]);
  CHECK_FALSE(labels.flags.at("h2")[0]);
}

TEST_CASE("binarize_labels with equal train values flags nothing") {
  SepTable sep;
  for (int i = 0; i < 5; ++i) sep["h" + std::to_string(i)] = {3.0, 3.0, 3.0};
  const BinaryLabels labels = binarize_labels(sep, {"h0", "h1", "h2"});
  for (const auto& [id, flags] : labels.flags) {
    for (bool f : flags) CHECK_FALSE(f);
  }
}

TEST_CASE("binarize_labels matches a sort-based median oracle on random cohorts") {
  Rng rng(11);
  SepTable sep;
  std::vector<HouseholdId> train_ids;
  std::vector<double> train_assets;
  for (int i = 0; i < 60; ++i) {
    const HouseholdId id = "h" + std::to_string(100 + i);
    const double v = rng.normal();
    sep[id] = {v, rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)};
    if (i < 40) {
      train_ids.push_back(id);
      train_assets.push_back(v);
    }
  }
  const BinaryLabels labels = binarize_labels(sep, train_ids);
  std::sort(train_assets.begin(), train_assets.end());
  const double oracle_median = 0.5 * (train_assets[19] + train_assets[20]);
  CHECK(labels.thresholds[0] == doctest::Approx(oracle_median));
  for (const auto& [id, m] : sep) {
    CHECK(labels.flags.at(id)[0] == (m.assets > oracle_median));
  }
}

TEST_CASE("binarize_labels never reads test households") {
  SepTable sep;
  for (int i = 0; i < 20; ++i) {
    sep["h" + std::to_string(i)] = {static_cast<double>(i), 1.0 * i, 2.0 * i};
  }
  std::vector<HouseholdId> train_ids;
  for (int i = 0; i < 10; ++i) train_ids.push_back("h" + std::to_string(i));
  const BinaryLabels before = binarize_labels(sep, train_ids);
  for (int i = 10; i < 20; ++i) {
    sep["h" + std::to_string(i)].assets += 1000.0;
    sep["h" + std::to_string(i)].income += 999.0;
  }
  const BinaryLabels after = binarize_labels(sep, train_ids);
  CHECK(after.thresholds == before.thresholds);
}

TEST_CASE("quartile_stratified_sample draws n per quartile") {
  std::map<HouseholdId, double> scores;
  for (int i = 1; i <= 100; ++i) {
    scores["h" + std::to_string(1000 + i)] = static_cast<double>(i);
  }
  const auto picked = quartile_stratified_sample(scores, 5, 99);
  CHECK(picked.size() == 20);

  std::vector<double> values;
  for (const auto& [_, v] : scores) values.push_back(v);
  const double q1 = percentile(values, 25.0), q2 = percentile(values, 50.0),
               q3 = percentile(values, 75.0);
  std::array<int, 4> counts{};
  for (const auto& id : picked) {
    const double v = scores.at(id);
    ++counts[v <= q1 ? 0 : v <= q2 ? 1 : v <= q3 ? 2 : 3];
  }
  for (int c : counts) CHECK(c == 5);
}

TEST_CASE("quartile_stratified_sample exhaustive case returns every id") {
  std::map<HouseholdId, double> scores;
  for (int i = 0; i < 40; ++i) scores["h" + std::to_string(10 + i)] = static_cast<double>(i);
  const auto picked = quartile_stratified_sample(scores, 10, 5);
  CHECK(picked.size() == 40);
}

TEST_CASE("quartile_stratified_sample paper configuration yields 1000 households") {
  std::map<HouseholdId, double> scores;
  Rng rng(3);
  for (int i = 0; i < 1400; ++i) {
    scores["h" + std::to_string(10000 + i)] = rng.normal();
  }
  CHECK(quartile_stratified_sample(scores, 250, 5).size() == 1000);
}

TEST_CASE("quartile_stratified_sample errors name the short quartile") {
  std::map<HouseholdId, double> scores;
  for (int i = 0; i < 12; ++i) scores["low" + std::to_string(i)] = 1.0;
  for (int i = 0; i < 4; ++i) scores["high" + std::to_string(i)] = 10.0 + i;
  CHECK_THROWS_WITH_AS(quartile_stratified_sample(scores, 4, 1), doctest::Contains("quartile"),
                       ValidationError);
}

TEST_CASE("train_test_split sizes, disjointness, determinism") {
  std::vector<HouseholdId> ids;
  for (int i = 0; i < 975; ++i) ids.push_back("h" + std::to_string(10000 + i));
  const CohortSplit split = train_test_split(ids, 800, 175, 77);
  CHECK(split.train_ids.size() == 800);
  CHECK(split.test_ids.size() == 175);
  std::set<HouseholdId> all(split.train_ids.begin(), split.train_ids.end());
  for (const auto& id : split.test_ids) CHECK(all.insert(id).second);
  CHECK(all.size() == 975);

  const CohortSplit again = train_test_split(ids, 800, 175, 77);
  CHECK(again.train_ids == split.train_ids);
  CHECK(again.test_ids == split.test_ids);

  const CohortSplit other_seed = train_test_split(ids, 800, 175, 78);
  CHECK(other_seed.train_ids != split.train_ids);
}

TEST_CASE("train_test_split with n_test 0 puts everything requested in train") {
  std::vector<HouseholdId> ids = {"a", "b", "c", "d"};
  const CohortSplit split = train_test_split(ids, 4, 0, 1);
  CHECK(split.train_ids.size() == 4);
  CHECK(split.test_ids.empty());
}

TEST_CASE("train_test_split rejects oversized requests") {
  CHECK_THROWS_AS(train_test_split({"a", "b"}, 2, 1, 0), ValidationError);
}

TEST_CASE("survey CSV round-trips records") {
  Cohort cohort;
  for (int i = 0; i < 5; ++i) {
    HouseholdRecord rec;
    rec.id = "hh" + std::to_string(i);
    rec.x = 100.0 + i;
    rec.y = 200.0 + i;
    for (const auto& var : bundled_asset_schema().variables) {
      rec.assets[var.name] =
          (i == 2 && var.name == "water_source") ? std::nullopt
                                                 : std::optional<std::string>(var.categories[0]);
    }
    rec.income_sources = {{"salary", 1000.0 + i}};
    rec.expenditure_sources = {{"food", 500.0 + i}};
    cohort.push_back(rec);
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "sep_survey_test.csv").string();
  write_survey_csv(path, cohort, bundled_asset_schema());
  const Cohort back = read_survey_csv(path, bundled_asset_schema());
  REQUIRE(back.size() == cohort.size());
  CHECK(back[2].assets.at("water_source") == std::nullopt);
  CHECK(*back[0].assets.at("water_source") == "piped");
  CHECK(back[3].income_sources.at("salary") == doctest::Approx(1003.0));
  CHECK(back[3].expenditure_sources.at("food") == doctest::Approx(503.0));
  CHECK(back[4].x == doctest::Approx(104.0));
  std::filesystem::remove(path);
}

TEST_CASE("split file round-trips") {
  CohortSplit split;
  split.seed = 123;
  split.train_ids = {"a", "b"};
  split.test_ids = {"c"};
  const std::string path =
      (std::filesystem::temp_directory_path() / "sep_split_test.json").string();
  write_split_file(path, split);
  const CohortSplit back = read_split_file(path);
  CHECK(back.seed == 123);
  CHECK(back.train_ids == split.train_ids);
  CHECK(back.test_ids == split.test_ids);
  std::filesystem::remove(path);
}

TEST_CASE("image type partition is total and disjoint") {
  CHECK(all_image_types().size() == 13);
  int satellite = 0, outdoor = 0, indoor = 0;
  for (ImageType t : all_image_types()) {
    switch (image_group(t)) {
      case ImageGroup::kSatellite:
        ++satellite;
        break;
      case ImageGroup::kOutdoor:
        ++outdoor;
        break;
      case ImageGroup::kIndoor:
        ++indoor;
        break;
    }
  }
  CHECK(satellite == 2);
  CHECK(outdoor == 3);
  CHECK(indoor == 8);
  for (ImageType t : all_image_types()) {
    CHECK(image_type_from_name(image_type_name(t)) == t);
  }
}
