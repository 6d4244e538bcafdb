#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace sep {

struct ImageRef {
  std::string path;
  bool missing = true;
};

// One surveyed household. Asset cells are nullable until imputation; money
// maps hold only the sources reported for this household (absent = 0).
struct HouseholdRecord {
  HouseholdId id;
  double x = 0.0;  // projected meters, x east
  double y = 0.0;  // projected meters, y south (same axes as Raster)
  std::map<std::string, std::optional<std::string>> assets;
  std::map<std::string, Money> income_sources;
  std::map<std::string, Money> expenditure_sources;
  std::map<ImageType, ImageRef> images;
};

using Cohort = std::vector<HouseholdRecord>;

// Categorical asset variable with its category labels in schema order.
struct AssetVariable {
  std::string name;
  std::vector<std::string> categories;  // ordered from high-SEP to low-SEP
};

struct AssetSchema {
  std::vector<AssetVariable> variables;

  const AssetVariable* find(const std::string& name) const;
};

// The bundled stand-in schema used by the synthetic cohort and the survey
// CSV reader.
const AssetSchema& bundled_asset_schema();
const std::vector<std::string>& bundled_income_sources();
const std::vector<std::string>& bundled_expenditure_sources();

struct SepMeasures {
  double assets = 0.0;       // MCA dimension-1 coordinate
  Money expenditure = 0.0;   // metical/month
  Money income = 0.0;        // metical/month

  double get(Measure m) const;
};

using SepTable = std::map<HouseholdId, SepMeasures>;

struct BinaryLabels {
  std::array<double, kNumMeasures> thresholds{};  // train medians
  std::map<HouseholdId, std::array<bool, kNumMeasures>> flags;
};

struct CohortSplit {
  std::vector<HouseholdId> train_ids;  // sorted
  std::vector<HouseholdId> test_ids;   // sorted
  uint64_t seed = 0;

  bool is_train(const HouseholdId& id) const;
};

// --- SEP ground truth -------------------------------------------------------

Money compute_income_sep(const HouseholdRecord& record);
Money compute_expenditure_sep(const HouseholdRecord& record);

// Fills missing asset cells with the modal category of the variable across
// the cohort; ties break to the lexicographically smallest category.
Cohort impute_assets(const Cohort& cohort);

// Thresholds are medians over train households only; flags are emitted for
// every household in `sep`.
BinaryLabels binarize_labels(const SepTable& sep, const std::vector<HouseholdId>& train_ids);

// --- Sampling and splitting -------------------------------------------------

// Draws n_per_quartile ids uniformly without replacement from each score
// quartile. Quartile edges use <= with ties going to the lower quartile.
std::vector<HouseholdId> quartile_stratified_sample(const std::map<HouseholdId, double>& scores,
                                                    size_t n_per_quartile, uint64_t seed);

CohortSplit train_test_split(const std::vector<HouseholdId>& ids, size_t n_train, size_t n_test,
                             uint64_t seed);

// --- File formats ------------------------------------------------------------

Cohort read_survey_csv(const std::string& path, const AssetSchema& schema);
void write_survey_csv(const std::string& path, const Cohort& cohort, const AssetSchema& schema);

// JSON-lines manifest {id, image_type, path, missing}; merges into the
// cohort's image maps when reading.
void read_image_manifest(const std::string& path, Cohort& cohort);
void append_image_manifest(const std::string& path, const Cohort& cohort,
                           const std::vector<ImageType>& types, bool truncate);

CohortSplit read_split_file(const std::string& path);
void write_split_file(const std::string& path, const CohortSplit& split);

}  // namespace sep
