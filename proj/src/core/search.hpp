#pragma once

#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "tabular.hpp"
#include "trees.hpp"

namespace sep {

enum class Algorithm : int { kElasticNet = 0, kRandomForest = 1, kGbt = 2 };
const std::string& algorithm_name(Algorithm a);
std::optional<Algorithm> algorithm_from_name(const std::string& name);

// Hyperparameter search ranges; the published distributions are unknown, so
// every bound is configuration.
struct SearchDistributions {
  double en_alpha_min = 1e-4, en_alpha_max = 1e2;  // log-uniform
  int rf_trees_min = 100, rf_trees_max = 500;
  double rf_mtry_min = 0.1, rf_mtry_max = 1.0;
  int rf_min_leaf_min = 1, rf_min_leaf_max = 10;
  int rf_max_depth = 0;  // fixed, 0 = unlimited
  int gbt_rounds_min = 50, gbt_rounds_max = 500;
  double gbt_eta_min = 0.01, gbt_eta_max = 0.3;        // log-uniform
  double gbt_lambda_min = 1e-3, gbt_lambda_max = 10.0;  // log-uniform
  int gbt_depth_min = 2, gbt_depth_max = 6;
  int select_k_min = 10;  // log-uniform over [min, p]; only with selection
};

struct CandidateConfig {
  Algorithm algorithm = Algorithm::kRandomForest;
  double en_alpha = 1.0;
  double en_l1_ratio = 0.5;
  RfParams rf;
  GbtParams gbt;
  int select_k = 0;  // 0 = no feature selection step
};

// Fitted impute -> (select) -> model pipeline. Immutable after fit; the
// transform order is fixed.
struct FittedPipeline {
  std::vector<double> imputer_means;
  std::optional<std::vector<int>> selected_columns;
  Algorithm algorithm = Algorithm::kRandomForest;
  std::optional<ElasticNetModel> linear;
  std::optional<RandomForestModel> forest;
  std::optional<GbtModel> gbt;

  CandidateConfig chosen;
  double cv_rmse = 0.0;
  uint64_t seed = 0;
  int candidates_evaluated = 0;
  int chosen_candidate = -1;

  std::vector<double> predict(const FeatureTable& table) const;
};

// Samples n_iter configurations, scores each by k-fold cross-validated mean
// RMSE (folds are contiguous blocks of one seeded permutation, shared by
// all candidates), refits the best on the full table. Ties break to the
// earlier-sampled candidate. `with_selection` adds the F-statistic feature
// selection step used by the off-the-shelf path.
FittedPipeline randomized_search_cv(const FeatureTable& train, Algorithm algorithm,
                                    const SearchDistributions& dist, int n_iter, int k_folds,
                                    uint64_t seed, bool with_selection);

// Fits one explicit candidate on the whole table (no search).
FittedPipeline fit_pipeline(const FeatureTable& train, const CandidateConfig& config,
                            uint64_t seed);

struct Evaluation {
  double rmse = 0.0;
  std::optional<double> pearson_r;   // nullopt = undefined (zero variance)
  std::optional<double> spearman_rho;
  std::vector<HouseholdId> ids;
  std::vector<double> predicted;
  std::vector<double> observed;
};

Evaluation evaluate(const FittedPipeline& model, const FeatureTable& test);

// Model artifact: JSON metadata (+ linear coefficients) plus a binary
// tree-block file for ensembles.
void save_pipeline(const FittedPipeline& model, const std::string& json_path,
                   const std::string& trees_path);
FittedPipeline load_pipeline(const std::string& json_path);

}  // namespace sep
