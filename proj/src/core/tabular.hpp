#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "extractor.hpp"

namespace sep {

// Which image types feed a regression model.
enum class PredictorSetKind { kSatellite, kOutdoor, kComplete, kReduced };

struct PredictorSet {
  PredictorSetKind kind = PredictorSetKind::kComplete;
  std::optional<ImageType> reduced_indoor;  // the single extra indoor type for kReduced

  static PredictorSet satellite() { return {PredictorSetKind::kSatellite, std::nullopt}; }
  static PredictorSet outdoor() { return {PredictorSetKind::kOutdoor, std::nullopt}; }
  static PredictorSet complete() { return {PredictorSetKind::kComplete, std::nullopt}; }
  static PredictorSet reduced(ImageType indoor);

  // Member image types in enum order.
  std::vector<ImageType> image_types() const;
  std::string name() const;
};

struct ColumnProvenance {
  ImageType type = ImageType::kSatellite25m;
  int index = 0;  // feature index within the image type, 0-based
  std::string column_name() const;
};

// Households x features matrix with a missing mask, per-column provenance,
// and the outcome vector. Row-major storage.
struct FeatureTable {
  std::vector<HouseholdId> ids;
  size_t n = 0;
  size_t p = 0;
  std::vector<double> values;       // n*p
  std::vector<uint8_t> missing;     // n*p, 1 = masked
  std::vector<ColumnProvenance> provenance;
  std::vector<double> outcome;      // length n

  double at(size_t row, size_t col) const { return values[row * p + col]; }
  bool is_missing(size_t row, size_t col) const { return missing[row * p + col] != 0; }
  FeatureTable subset(const std::vector<HouseholdId>& keep_ids) const;
};

// Per-household feature vectors for all 13 image types.
using FeatureStore = std::map<HouseholdId, std::map<ImageType, FeatureVector>>;

// Builds the table for a predictor set; a missing image masks its D cells.
// Households with every image type in the set missing are rejected.
FeatureTable assemble_feature_table(const FeatureStore& features, const PredictorSet& set,
                                    const std::map<HouseholdId, double>& outcome);

// Column means over observed training cells only.
std::vector<double> mean_imputer_fit(const FeatureTable& train);
// Fills masked cells in place; observed cells are untouched.
void mean_imputer_transform(FeatureTable& table, const std::vector<double>& means);

// Indices of the k columns with the largest univariate regression
// F-statistics, returned in column order; ranking ties break to the lower
// column index. X must be imputed. `f_out` receives all p statistics.
std::vector<int> fstat_select(const FeatureTable& train, int k,
                              std::vector<double>* f_out = nullptr);

// --- Elastic net -------------------------------------------------------------

struct ElasticNetModel {
  double intercept = 0.0;
  std::vector<double> coefficients;  // original scale
  double alpha = 0.0;
  double l1_ratio = 0.5;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;

  // Internals on the standardized scale, kept for diagnostics.
  std::vector<double> beta_standardized;
  std::vector<double> column_mean;
  std::vector<double> column_sd;
  double outcome_mean = 0.0;
};

// Cyclic coordinate descent with soft-thresholding on standardized columns,
// minimizing (1/2n)||y - b0 - Xb||^2 + alpha*l1*||b||_1
// + (alpha/2)*(1-l1)*||b||_2^2. Coefficients are reported on the original
// scale. Emits a warning through the return value when max_iter is hit.
ElasticNetModel elasticnet_fit(const std::vector<double>& x, size_t n, size_t p,
                               const std::vector<double>& y, double alpha, double l1_ratio,
                               double tol = 1e-8, int max_iter = 20000);

std::vector<double> elasticnet_predict(const ElasticNetModel& model, const std::vector<double>& x,
                                       size_t n, size_t p);

// Feature table CSV (header id,<type>_<k>,... empty cell = missing) and the
// paired outcome CSV (id,value).
void write_feature_table_csv(const std::string& path, const FeatureTable& table);
FeatureTable read_feature_table_csv(const std::string& path);
void write_outcome_csv(const std::string& path, const std::vector<HouseholdId>& ids,
                       const std::vector<double>& values);
std::map<HouseholdId, double> read_outcome_csv(const std::string& path);

}  // namespace sep
