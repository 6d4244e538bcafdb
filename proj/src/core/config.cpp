#include "config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace sep {

namespace {

using nlohmann::json;

class Checker {
 public:
  explicit Checker(std::vector<std::string>* errors) : errors_(errors) {}

  void error(const std::string& where, const std::string& what) {
    errors_->push_back(where + ": " + what);
  }

  // Verifies `obj` holds only the allowed keys.
  void known_keys(const json& obj, const std::string& where, std::set<std::string> allowed) {
    for (const auto& [key, _] : obj.items()) {
      if (!allowed.count(key)) error(where, "unknown key '" + key + "'");
    }
  }

  bool require_object(const json& parent, const std::string& key, const std::string& where) {
    if (!parent.contains(key)) return false;
    if (!parent.at(key).is_object()) {
      error(where, "'" + key + "' must be an object");
      return false;
    }
    return true;
  }

  template <typename T>
  void read_number(const json& obj, const std::string& key, const std::string& where, T* out,
                   double lo, double hi) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) {
      error(where, "'" + key + "' must be a number");
      return;
    }
    const double d = v.get<double>();
    if (d < lo || d > hi) {
      error(where, "'" + key + "' out of range [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
      return;
    }
    if constexpr (std::is_integral_v<T>) {
      if (d != std::floor(d)) {
        error(where, "'" + key + "' must be an integer");
        return;
      }
    }
    *out = static_cast<T>(d);
  }

  void read_string(const json& obj, const std::string& key, const std::string& where,
                   std::string* out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string()) {
      error(where, "'" + key + "' must be a string");
      return;
    }
    *out = obj.at(key).get<std::string>();
  }

  void read_bool(const json& obj, const std::string& key, const std::string& where, bool* out) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_boolean()) {
      error(where, "'" + key + "' must be a boolean");
      return;
    }
    *out = obj.at(key).get<bool>();
  }

 private:
  std::vector<std::string>* errors_;
};

}  // namespace

std::vector<std::string> validate_config_file(const std::string& path, PipelineConfig* out) {
  std::vector<std::string> errors;
  Checker check(&errors);

  std::ifstream in(path);
  if (!in) {
    errors.push_back("config: cannot open file " + path);
    return errors;
  }
  json root;
  try {
    root = json::parse(in);
  } catch (const std::exception& e) {
    errors.push_back(std::string("config: JSON parse error: ") + e.what());
    return errors;
  }
  if (!root.is_object()) {
    errors.push_back("config: top level must be an object");
    return errors;
  }

  PipelineConfig config;
  config.config_path = path;

  check.known_keys(root, "config",
                   {"seed", "output_dir", "inputs", "synthetic", "split", "mca", "preprocess",
                    "extractor", "fit", "shap"});

  if (!root.contains("seed")) {
    check.error("config", "missing required key 'seed'");
  } else if (!root.at("seed").is_number_integer() || root.at("seed").get<int64_t>() < 0) {
    check.error("config", "'seed' must be a non-negative integer");
  } else {
    config.seed = root.at("seed").get<uint64_t>();
  }

  if (!root.contains("output_dir")) {
    check.error("config", "missing required key 'output_dir'");
  } else {
    check.read_string(root, "output_dir", "config", &config.output_dir);
  }

  if (check.require_object(root, "inputs", "config")) {
    const json& j = root.at("inputs");
    check.known_keys(j, "inputs", {"survey_csv", "image_manifest", "raster_png", "raster_georef"});
    check.read_string(j, "survey_csv", "inputs", &config.inputs.survey_csv);
    check.read_string(j, "image_manifest", "inputs", &config.inputs.image_manifest);
    check.read_string(j, "raster_png", "inputs", &config.inputs.raster_png);
    check.read_string(j, "raster_georef", "inputs", &config.inputs.raster_georef);
    for (const std::string& p : {config.inputs.survey_csv, config.inputs.image_manifest,
                                 config.inputs.raster_png, config.inputs.raster_georef}) {
      if (!p.empty() && !std::filesystem::exists(p)) {
        check.error("inputs", "referenced path does not exist: " + p);
      }
    }
  }

  if (check.require_object(root, "synthetic", "config")) {
    const json& j = root.at("synthetic");
    check.known_keys(j, "synthetic",
                     {"n_households", "image_size", "missing_rate", "asset_missing_rate",
                      "signal", "asset_signal", "asset_noise", "income_noise_sigma",
                      "expenditure_noise_sigma", "raster_pixel_size", "stratified"});
    check.read_number(j, "n_households", "synthetic", &config.synthetic.n_households, 1.0, 1e7);
    check.read_number(j, "image_size", "synthetic", &config.synthetic.image_size, 8.0, 1024.0);
    check.read_number(j, "missing_rate", "synthetic", &config.synthetic.missing_rate, 0.0, 1.0);
    check.read_number(j, "asset_missing_rate", "synthetic", &config.synthetic.asset_missing_rate,
                      0.0, 1.0);
    check.read_number(j, "asset_signal", "synthetic", &config.synthetic.asset_signal, 0.0, 10.0);
    check.read_number(j, "asset_noise", "synthetic", &config.synthetic.asset_noise, 0.0, 10.0);
    check.read_number(j, "income_noise_sigma", "synthetic", &config.synthetic.income_noise_sigma,
                      0.0, 10.0);
    check.read_number(j, "expenditure_noise_sigma", "synthetic",
                      &config.synthetic.expenditure_noise_sigma, 0.0, 10.0);
    check.read_number(j, "raster_pixel_size", "synthetic", &config.synthetic.raster_pixel_size,
                      0.1, 100.0);
    if (j.contains("signal")) {
      if (!j.at("signal").is_object()) {
        check.error("synthetic", "'signal' must be an object of image_type -> strength");
      } else {
        for (const auto& [key, value] : j.at("signal").items()) {
          const auto type = image_type_from_name(key);
          if (!type) {
            check.error("synthetic.signal", "unknown image type '" + key + "'");
            continue;
          }
          if (!value.is_number() || value.get<double>() < 0.0 || value.get<double>() > 1.0) {
            check.error("synthetic.signal", "'" + key + "' must be a number in [0, 1]");
            continue;
          }
          config.synthetic.signal[*type] = value.get<double>();
        }
      }
    }
    if (check.require_object(j, "stratified", "synthetic")) {
      const json& s = j.at("stratified");
      check.known_keys(s, "synthetic.stratified", {"pool_size", "n_per_quartile"});
      check.read_number(s, "pool_size", "synthetic.stratified", &config.stratified.pool_size, 0.0,
                        1e7);
      check.read_number(s, "n_per_quartile", "synthetic.stratified",
                        &config.stratified.n_per_quartile, 0.0, 1e7);
    }
  }

  if (check.require_object(root, "split", "config")) {
    const json& j = root.at("split");
    check.known_keys(j, "split", {"n_train", "n_test"});
    check.read_number(j, "n_train", "split", &config.split.n_train, 1.0, 1e7);
    check.read_number(j, "n_test", "split", &config.split.n_test, 0.0, 1e7);
  }

  if (check.require_object(root, "mca", "config")) {
    const json& j = root.at("mca");
    check.known_keys(j, "mca", {"anchor_variable", "anchor_category", "adjusted_inertia"});
    check.read_string(j, "anchor_variable", "mca", &config.mca.anchor_variable);
    check.read_string(j, "anchor_category", "mca", &config.mca.anchor_category);
    check.read_bool(j, "adjusted_inertia", "mca", &config.mca.adjusted_inertia);
  }

  if (check.require_object(root, "preprocess", "config")) {
    const json& j = root.at("preprocess");
    check.known_keys(j, "preprocess", {"clip_low", "clip_high", "buffers_m"});
    check.read_number(j, "clip_low", "preprocess", &config.preprocess.clip_low, 0.0, 100.0);
    check.read_number(j, "clip_high", "preprocess", &config.preprocess.clip_high, 0.0, 100.0);
    if (j.contains("buffers_m")) {
      if (!j.at("buffers_m").is_array() || j.at("buffers_m").size() != 2) {
        check.error("preprocess", "'buffers_m' must be an array of two buffer sizes");
      } else {
        config.preprocess.buffers_m = j.at("buffers_m").get<std::vector<double>>();
      }
    }
    if (config.preprocess.clip_low >= config.preprocess.clip_high) {
      check.error("preprocess", "clip_low must be below clip_high");
    }
  }

  if (check.require_object(root, "extractor", "config")) {
    const json& j = root.at("extractor");
    check.known_keys(j, "extractor",
                     {"input_size", "conv_filters", "fc_widths", "epochs", "batch_size", "lr",
                      "momentum", "augmentation", "offtheshelf"});
    int input_size = 64;
    check.read_number(j, "input_size", "extractor", &input_size, 8.0, 512.0);
    config.extractor.spec.input_h = input_size;
    config.extractor.spec.input_w = input_size;
    if (j.contains("conv_filters")) {
      if (!j.at("conv_filters").is_array()) {
        check.error("extractor", "'conv_filters' must be an array");
      } else {
        config.extractor.spec.conv_filters = j.at("conv_filters").get<std::vector<int>>();
      }
    }
    if (j.contains("fc_widths")) {
      if (!j.at("fc_widths").is_array() || j.at("fc_widths").empty()) {
        check.error("extractor", "'fc_widths' must be a non-empty array");
      } else {
        config.extractor.spec.fc_widths = j.at("fc_widths").get<std::vector<int>>();
      }
    }
    check.read_number(j, "epochs", "extractor", &config.extractor.train.epochs, 1.0, 100000.0);
    check.read_number(j, "batch_size", "extractor", &config.extractor.train.batch_size, 1.0,
                      8192.0);
    check.read_number(j, "lr", "extractor", &config.extractor.train.lr, 1e-9, 10.0);
    check.read_number(j, "momentum", "extractor", &config.extractor.train.momentum, 0.0,
                      0.999999);
    if (check.require_object(j, "augmentation", "extractor")) {
      const json& a = j.at("augmentation");
      check.known_keys(a, "extractor.augmentation",
                       {"flip_prob", "max_rotation_deg", "max_translation", "satellite_rot90"});
      check.read_number(a, "flip_prob", "extractor.augmentation",
                        &config.extractor.train.augment.flip_prob, 0.0, 1.0);
      check.read_number(a, "max_rotation_deg", "extractor.augmentation",
                        &config.extractor.train.augment.max_rotation_deg, 0.0, 180.0);
      check.read_number(a, "max_translation", "extractor.augmentation",
                        &config.extractor.train.augment.max_translation, 0.0, 0.5);
      check.read_bool(a, "satellite_rot90", "extractor.augmentation",
                      &config.extractor.satellite_rot90);
    }
    if (check.require_object(j, "offtheshelf", "extractor")) {
      const json& o = j.at("offtheshelf");
      check.known_keys(o, "extractor.offtheshelf", {"enabled", "width"});
      check.read_bool(o, "enabled", "extractor.offtheshelf",
                      &config.extractor.offtheshelf.enabled);
      check.read_number(o, "width", "extractor.offtheshelf", &config.extractor.offtheshelf.width,
                        1.0, 8192.0);
    }
  }

  if (check.require_object(root, "fit", "config")) {
    const json& j = root.at("fit");
    check.known_keys(j, "fit",
                     {"algorithms", "predictor_sets", "n_iter", "k_folds", "elasticnet",
                      "random_forest", "gbt", "select_k_min"});
    if (j.contains("algorithms")) {
      if (!j.at("algorithms").is_array()) {
        check.error("fit", "'algorithms' must be an array");
      } else {
        config.fit.algorithms.clear();
        for (const auto& a : j.at("algorithms")) {
          const auto algo = a.is_string() ? algorithm_from_name(a.get<std::string>())
                                          : std::nullopt;
          if (!algo) {
            check.error("fit.algorithms", "unknown algorithm " + a.dump());
          } else {
            config.fit.algorithms.push_back(*algo);
          }
        }
      }
    }
    if (j.contains("predictor_sets")) {
      if (!j.at("predictor_sets").is_array()) {
        check.error("fit", "'predictor_sets' must be an array");
      } else {
        config.fit.predictor_sets.clear();
        for (const auto& s : j.at("predictor_sets")) {
          const std::string name = s.is_string() ? s.get<std::string>() : s.dump();
          if (name != "satellite" && name != "outdoor" && name != "complete") {
            check.error("fit.predictor_sets",
                        "unknown predictor set '" + name + "' (reduced is derived, not listed)");
          } else {
            config.fit.predictor_sets.push_back(name);
          }
        }
      }
    }
    check.read_number(j, "n_iter", "fit", &config.fit.n_iter, 1.0, 100000.0);
    check.read_number(j, "k_folds", "fit", &config.fit.k_folds, 2.0, 1000.0);
    check.read_number(j, "select_k_min", "fit", &config.fit.distributions.select_k_min, 1.0, 1e6);
    SearchDistributions& d = config.fit.distributions;
    if (check.require_object(j, "elasticnet", "fit")) {
      const json& e = j.at("elasticnet");
      check.known_keys(e, "fit.elasticnet", {"alpha_min", "alpha_max"});
      check.read_number(e, "alpha_min", "fit.elasticnet", &d.en_alpha_min, 1e-12, 1e6);
      check.read_number(e, "alpha_max", "fit.elasticnet", &d.en_alpha_max, 1e-12, 1e6);
    }
    if (check.require_object(j, "random_forest", "fit")) {
      const json& r = j.at("random_forest");
      check.known_keys(r, "fit.random_forest",
                       {"n_trees_min", "n_trees_max", "mtry_min", "mtry_max", "min_leaf_min",
                        "min_leaf_max", "max_depth"});
      check.read_number(r, "n_trees_min", "fit.random_forest", &d.rf_trees_min, 1.0, 100000.0);
      check.read_number(r, "n_trees_max", "fit.random_forest", &d.rf_trees_max, 1.0, 100000.0);
      check.read_number(r, "mtry_min", "fit.random_forest", &d.rf_mtry_min, 0.001, 1.0);
      check.read_number(r, "mtry_max", "fit.random_forest", &d.rf_mtry_max, 0.001, 1.0);
      check.read_number(r, "min_leaf_min", "fit.random_forest", &d.rf_min_leaf_min, 1.0, 1e6);
      check.read_number(r, "min_leaf_max", "fit.random_forest", &d.rf_min_leaf_max, 1.0, 1e6);
      check.read_number(r, "max_depth", "fit.random_forest", &d.rf_max_depth, 0.0, 1000.0);
    }
    if (check.require_object(j, "gbt", "fit")) {
      const json& g = j.at("gbt");
      check.known_keys(g, "fit.gbt",
                       {"rounds_min", "rounds_max", "eta_min", "eta_max", "lambda_min",
                        "lambda_max", "depth_min", "depth_max"});
      check.read_number(g, "rounds_min", "fit.gbt", &d.gbt_rounds_min, 1.0, 100000.0);
      check.read_number(g, "rounds_max", "fit.gbt", &d.gbt_rounds_max, 1.0, 100000.0);
      check.read_number(g, "eta_min", "fit.gbt", &d.gbt_eta_min, 1e-6, 10.0);
      check.read_number(g, "eta_max", "fit.gbt", &d.gbt_eta_max, 1e-6, 10.0);
      check.read_number(g, "lambda_min", "fit.gbt", &d.gbt_lambda_min, 0.0, 1e6);
      check.read_number(g, "lambda_max", "fit.gbt", &d.gbt_lambda_max, 0.0, 1e6);
      check.read_number(g, "depth_min", "fit.gbt", &d.gbt_depth_min, 1.0, 64.0);
      check.read_number(g, "depth_max", "fit.gbt", &d.gbt_depth_max, 1.0, 64.0);
    }
  }

  if (check.require_object(root, "shap", "config")) {
    const json& j = root.at("shap");
    check.known_keys(j, "shap", {"ranking_split", "top_bottom_n", "model_override"});
    check.read_string(j, "ranking_split", "shap", &config.shap.ranking_split);
    check.read_number(j, "top_bottom_n", "shap", &config.shap.top_bottom_n, 1.0, 1000.0);
    check.read_string(j, "model_override", "shap", &config.shap.model_override);
    if (config.shap.ranking_split != "train" && config.shap.ranking_split != "test") {
      check.error("shap", "'ranking_split' must be 'train' or 'test'");
    }
    if (!config.shap.model_override.empty() &&
        !algorithm_from_name(config.shap.model_override)) {
      check.error("shap", "'model_override' must name an algorithm");
    }
  }

  // Cross-field checks.
  if (!config.inputs.provided()) {
    if (config.split.n_train + config.split.n_test > config.synthetic.n_households) {
      check.error("split", "n_train + n_test exceeds the synthetic cohort size");
    }
    if (config.stratified.pool_size > 0 &&
        config.stratified.n_per_quartile * 4 > config.stratified.pool_size) {
      check.error("synthetic.stratified", "pool_size must be at least 4 x n_per_quartile");
    }
  }
  try {
    config.extractor.spec.validate();
  } catch (const ValidationError& e) {
    check.error("extractor", e.what());
  }

  if (errors.empty() && out) *out = std::move(config);
  return errors;
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig config;
  const std::vector<std::string> errors = validate_config_file(path, &config);
  if (!errors.empty()) {
    std::string joined;
    for (const auto& e : errors) {
      joined += e;
      joined += '\n';
    }
    throw ValidationError(joined);
  }
  return config;
}

}  // namespace sep
