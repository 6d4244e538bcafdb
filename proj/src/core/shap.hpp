#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "tabular.hpp"
#include "trees.hpp"

namespace sep {

// Additive attribution for one household: base value plus one phi per
// feature, in outcome units. Local accuracy: base + sum(phi) = prediction.
struct ShapVector {
  HouseholdId id;
  double base_value = 0.0;
  std::vector<double> phi;
  std::string model_id;
};

// A tree ensemble seen as offset + sum_t scale_t * tree_t(x); this is the
// common shape of random forests (scale 1/T) and boosted trees (scale eta,
// offset = base score).
struct EnsembleView {
  std::vector<const DecisionTree*> trees;
  std::vector<double> scales;
  double offset = 0.0;

  static EnsembleView from_forest(const RandomForestModel& model);
  static EnsembleView from_gbt(const GbtModel& model);

  double predict(const double* row) const;
  double expected_value() const;
};

// Exact Shapley values of a single tree under the tree-path-conditional
// expectation, via the polynomial path-tracking recursion.
std::vector<double> treeshap_tree(const DecisionTree& tree, const double* row,
                                  size_t num_features);

// Exponential-cost Shapley oracle over an explicit feature universe;
// refuses more than 15 features.
std::vector<double> brute_force_shap(const EnsembleView& ensemble, const double* row,
                                     size_t num_features);

// Tree-path-conditional expectation E[f | x_S]: features in S follow the
// row, others split by child cover. Exposed for the oracle tests.
double conditional_expectation(const DecisionTree& tree, const double* row,
                               const std::vector<bool>& in_subset);

ShapVector treeshap_ensemble(const EnsembleView& ensemble, const double* row, size_t num_features,
                             const HouseholdId& id, const std::string& model_id);

// --- Image-level aggregation ---------------------------------------------------

struct GroupedShap {
  HouseholdId id;
  std::string split;  // "train" or "test"
  double base_value = 0.0;
  double prediction = 0.0;
  std::map<ImageType, double> grouped;
};

// Sums feature attributions per originating image type.
std::map<ImageType, double> group_by_image(const std::vector<double>& phi,
                                           const std::vector<ColumnProvenance>& provenance);

// Image types ranked by descending median |grouped phi| over the given
// split ("" = all households); ties keep enumeration order.
std::vector<std::pair<ImageType, double>> rank_image_types(
    const std::vector<GroupedShap>& reports, const std::string& split);

struct TopBottomImages {
  ImageType type = ImageType::kSatellite25m;
  std::vector<HouseholdId> top;     // best average SHAP rank across measures
  std::vector<HouseholdId> bottom;
};

// Ranks households per measure by grouped phi (rank 1 = most positive,
// average ties), averages the three ranks, and keeps the n best and worst
// per image type.
std::vector<TopBottomImages> top_bottom_images(
    const std::array<std::vector<GroupedShap>, kNumMeasures>& reports, int n);

// REDUCED(t*) where t* is the highest-ranked indoor type of a complete-set
// ranking.
PredictorSet reduced_predictor_set(const std::vector<std::pair<ImageType, double>>& ranking);

}  // namespace sep
