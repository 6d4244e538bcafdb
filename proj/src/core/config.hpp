#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "extractor.hpp"
#include "search.hpp"
#include "synthetic.hpp"

namespace sep {

// Pipeline configuration, parsed from a JSON file. Validation is not
// fail-fast: every schema error is collected and reported together, and
// unknown keys are rejected as typo guards.
struct PipelineConfig {
  uint64_t seed = 0;
  std::string output_dir;

  // Real-data inputs; all empty when the synthetic path is used.
  struct Inputs {
    std::string survey_csv;
    std::string image_manifest;
    std::string raster_png;
    std::string raster_georef;
    bool provided() const { return !survey_csv.empty(); }
  } inputs;

  SyntheticConfig synthetic = SyntheticConfig::defaults();
  struct StratifiedSampling {
    size_t pool_size = 0;  // 0 disables the stratified pre-sampling stage
    size_t n_per_quartile = 0;
  } stratified;

  struct Split {
    size_t n_train = 800;
    size_t n_test = 175;
  } split;

  struct Mca {
    std::string anchor_variable = "water_source";
    std::string anchor_category = "piped";
    bool adjusted_inertia = false;
  } mca;

  struct Preprocess {
    double clip_low = 1.0;
    double clip_high = 99.0;
    std::vector<double> buffers_m = {25.0, 100.0};
  } preprocess;

  struct Extractor {
    NetworkSpec spec;  // input size, conv filters, fc widths
    TrainOptions train;
    bool satellite_rot90 = true;
    struct OffTheShelf {
      bool enabled = false;
      int width = 512;
    } offtheshelf;
  } extractor;

  struct Fit {
    std::vector<Algorithm> algorithms = {Algorithm::kElasticNet, Algorithm::kRandomForest,
                                         Algorithm::kGbt};
    std::vector<std::string> predictor_sets = {"satellite", "outdoor", "complete"};
    int n_iter = 50;
    int k_folds = 10;
    SearchDistributions distributions;
  } fit;

  struct Shap {
    std::string ranking_split = "train";  // split driving the reduced-set choice
    int top_bottom_n = 5;
    std::string model_override;  // "<algorithm>" to explain instead of the best
  } shap;

  std::string config_path;  // where this config was loaded from
};

// Parses and validates; returns the full error list instead of stopping at
// the first problem. An empty error list means `out` is usable.
std::vector<std::string> validate_config_file(const std::string& path, PipelineConfig* out);

// Convenience wrapper that throws ValidationError with all messages joined.
PipelineConfig load_config(const std::string& path);

}  // namespace sep
