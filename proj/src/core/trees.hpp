#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace sep {

// Regression tree stored as a node array; root at index 0. Internal nodes
// route x[feature] < threshold to the left child. Cover is the training
// sample weight reaching the node, with cover(parent) = cover(left) +
// cover(right).
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf prediction
  double cover = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(const double* row) const;
  // Cover-weighted expectation over leaves.
  double expected_value() const;
  int max_depth() const;
  // Structural checks: children exist, covers add up.
  void validate() const;
};

struct RfParams {
  int n_trees = 300;
  double mtry_fraction = 0.3;  // fraction of features tried per split
  int min_leaf = 1;
  int max_depth = 0;  // 0 = unlimited
  bool bootstrap = true;
  uint64_t seed = 0;
};

struct RandomForestModel {
  RfParams params;
  std::vector<DecisionTree> trees;
};

// Bootstrap-sampled trees with per-node feature subsampling; splits
// minimize the weighted child variance over midpoints of sorted unique
// values. Deterministic given params.seed.
RandomForestModel rf_fit(const std::vector<double>& x, size_t n, size_t p,
                         const std::vector<double>& y, const RfParams& params);
std::vector<double> rf_predict(const RandomForestModel& model, const std::vector<double>& x,
                               size_t n, size_t p);

struct GbtParams {
  int n_rounds = 100;
  double eta = 0.1;
  double lambda = 1.0;  // L2 regularization on leaf weights
  double gamma = 0.0;   // split gain threshold
  int max_depth = 3;
  uint64_t seed = 0;
};

struct GbtModel {
  GbtParams params;
  double base_score = 0.0;  // mean outcome
  std::vector<DecisionTree> trees;
};

// Second-order boosting with squared error: g = prediction - y, h = 1;
// split gain 0.5*[GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)] - gamma, leaf
// weight -G/(H+l).
GbtModel gbt_fit(const std::vector<double>& x, size_t n, size_t p, const std::vector<double>& y,
                 const GbtParams& params);
std::vector<double> gbt_predict(const GbtModel& model, const std::vector<double>& x, size_t n,
                                size_t p);

// Little-endian binary node blocks for model artifacts.
void write_tree_blocks(const std::string& path, const std::vector<DecisionTree>& trees);
std::vector<DecisionTree> read_tree_blocks(const std::string& path);

}  // namespace sep
