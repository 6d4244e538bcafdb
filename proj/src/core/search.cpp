#include "search.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "metrics.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace sep {

const std::string& algorithm_name(Algorithm a) {
  static const std::array<std::string, 3> names = {"elasticnet", "random_forest", "gbt"};
  return names[static_cast<int>(a)];
}

std::optional<Algorithm> algorithm_from_name(const std::string& name) {
  for (int i = 0; i < 3; ++i) {
    if (algorithm_name(static_cast<Algorithm>(i)) == name) return static_cast<Algorithm>(i);
  }
  return std::nullopt;
}

namespace {

CandidateConfig sample_candidate(Algorithm algorithm, const SearchDistributions& dist, size_t p,
                                 bool with_selection, Rng& rng) {
  CandidateConfig config;
  config.algorithm = algorithm;
  switch (algorithm) {
    case Algorithm::kElasticNet:
      config.en_alpha = rng.log_uniform(dist.en_alpha_min, dist.en_alpha_max);
      config.en_l1_ratio = rng.uniform(0.0, 1.0);
      break;
    case Algorithm::kRandomForest:
      config.rf.n_trees = static_cast<int>(rng.uniform_int(dist.rf_trees_min, dist.rf_trees_max));
      config.rf.mtry_fraction = rng.uniform(dist.rf_mtry_min, dist.rf_mtry_max);
      config.rf.min_leaf =
          static_cast<int>(rng.uniform_int(dist.rf_min_leaf_min, dist.rf_min_leaf_max));
      config.rf.max_depth = dist.rf_max_depth;
      break;
    case Algorithm::kGbt:
      config.gbt.n_rounds =
          static_cast<int>(rng.uniform_int(dist.gbt_rounds_min, dist.gbt_rounds_max));
      config.gbt.eta = rng.log_uniform(dist.gbt_eta_min, dist.gbt_eta_max);
      config.gbt.lambda = rng.log_uniform(dist.gbt_lambda_min, dist.gbt_lambda_max);
      config.gbt.max_depth =
          static_cast<int>(rng.uniform_int(dist.gbt_depth_min, dist.gbt_depth_max));
      break;
  }
  if (with_selection) {
    const double k_min = static_cast<double>(std::min<size_t>(dist.select_k_min, p));
    const double k = rng.log_uniform(k_min, static_cast<double>(p));
    config.select_k = std::clamp(static_cast<int>(std::lround(k)), 1, static_cast<int>(p));
  }
  return config;
}

// Fit the impute -> select -> model chain on (x, y) drawn from `table`
// restricted to `rows`.
struct CoreFit {
  std::vector<double> means;
  std::optional<std::vector<int>> selected;
  std::optional<ElasticNetModel> linear;
  std::optional<RandomForestModel> forest;
  std::optional<GbtModel> gbt;
};

FeatureTable take_rows(const FeatureTable& table, const std::vector<size_t>& rows) {
  FeatureTable out;
  out.p = table.p;
  out.provenance = table.provenance;
  out.n = rows.size();
  out.values.resize(out.n * out.p);
  out.missing.resize(out.n * out.p);
  out.outcome.resize(out.n);
  out.ids.reserve(out.n);
  for (size_t i = 0; i < rows.size(); ++i) {
    out.ids.push_back(table.ids[rows[i]]);
    std::copy_n(table.values.begin() + rows[i] * table.p, table.p,
                out.values.begin() + i * table.p);
    std::copy_n(table.missing.begin() + rows[i] * table.p, table.p,
                out.missing.begin() + i * table.p);
    out.outcome[i] = table.outcome[rows[i]];
  }
  return out;
}

std::vector<double> select_columns(const std::vector<double>& x, size_t n, size_t p,
                                   const std::vector<int>& keep) {
  std::vector<double> out(n * keep.size());
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < keep.size(); ++j) {
      out[i * keep.size() + j] = x[i * p + static_cast<size_t>(keep[j])];
    }
  }
  return out;
}

CoreFit fit_core(const FeatureTable& train_raw, const CandidateConfig& config, uint64_t seed) {
  CoreFit fit;
  FeatureTable train = train_raw;
  fit.means = mean_imputer_fit(train);
  mean_imputer_transform(train, fit.means);

  const std::vector<double>* x = &train.values;
  size_t p = train.p;
  std::vector<double> x_selected;
  if (config.select_k > 0) {
    fit.selected = fstat_select(train, std::min<int>(config.select_k, static_cast<int>(train.p)));
    x_selected = select_columns(train.values, train.n, train.p, *fit.selected);
    x = &x_selected;
    p = fit.selected->size();
  }

  switch (config.algorithm) {
    case Algorithm::kElasticNet:
      fit.linear = elasticnet_fit(*x, train.n, p, train.outcome, config.en_alpha,
                                  config.en_l1_ratio);
      break;
    case Algorithm::kRandomForest: {
      RfParams params = config.rf;
      params.seed = seed;
      fit.forest = rf_fit(*x, train.n, p, train.outcome, params);
      break;
    }
    case Algorithm::kGbt: {
      GbtParams params = config.gbt;
      params.seed = seed;
      fit.gbt = gbt_fit(*x, train.n, p, train.outcome, params);
      break;
    }
  }
  return fit;
}

std::vector<double> predict_core(const CoreFit& fit, const FeatureTable& raw) {
  FeatureTable table = raw;
  mean_imputer_transform(table, fit.means);
  const std::vector<double>* x = &table.values;
  size_t p = table.p;
  std::vector<double> x_selected;
  if (fit.selected) {
    x_selected = select_columns(table.values, table.n, table.p, *fit.selected);
    x = &x_selected;
    p = fit.selected->size();
  }
  if (fit.linear) return elasticnet_predict(*fit.linear, *x, table.n, p);
  if (fit.forest) return rf_predict(*fit.forest, *x, table.n, p);
  return gbt_predict(*fit.gbt, *x, table.n, p);
}

}  // namespace

std::vector<double> FittedPipeline::predict(const FeatureTable& table) const {
  CoreFit fit;
  fit.means = imputer_means;
  fit.selected = selected_columns;
  fit.linear = linear;
  fit.forest = forest;
  fit.gbt = gbt;
  return predict_core(fit, table);
}

FittedPipeline fit_pipeline(const FeatureTable& train, const CandidateConfig& config,
                            uint64_t seed) {
  CoreFit fit = fit_core(train, config, seed);
  FittedPipeline out;
  out.imputer_means = std::move(fit.means);
  out.selected_columns = std::move(fit.selected);
  out.algorithm = config.algorithm;
  out.linear = std::move(fit.linear);
  out.forest = std::move(fit.forest);
  out.gbt = std::move(fit.gbt);
  out.chosen = config;
  out.seed = seed;
  return out;
}

FittedPipeline randomized_search_cv(const FeatureTable& train, Algorithm algorithm,
                                    const SearchDistributions& dist, int n_iter, int k_folds,
                                    uint64_t seed, bool with_selection) {
  if (k_folds < 2) throw ValidationError("randomized_search_cv: k_folds must be >= 2");
  if (n_iter < 1) throw ValidationError("randomized_search_cv: n_iter must be >= 1");
  if (train.n < static_cast<size_t>(k_folds)) {
    throw ValidationError("randomized_search_cv: fewer rows than folds");
  }

  // Candidate configurations, all sampled up front from one stream.
  Rng sampler = Rng::substream(seed, "search-candidates");
  std::vector<CandidateConfig> candidates;
  candidates.reserve(n_iter);
  for (int c = 0; c < n_iter; ++c) {
    candidates.push_back(sample_candidate(algorithm, dist, train.p, with_selection, sampler));
  }

  // Folds: contiguous blocks of one seeded permutation, identical for every
  // candidate.
  std::vector<size_t> permutation(train.n);
  std::iota(permutation.begin(), permutation.end(), size_t{0});
  Rng fold_rng = Rng::substream(seed, "cv-folds");
  fold_rng.shuffle(permutation);
  std::vector<std::vector<size_t>> folds(k_folds);
  {
    // Contiguous blocks; the first (n % k) folds take one extra row.
    const size_t base = train.n / k_folds;
    const size_t extra = train.n % k_folds;
    size_t cursor = 0;
    for (int f = 0; f < k_folds; ++f) {
      const size_t size = base + (static_cast<size_t>(f) < extra ? 1 : 0);
      if (size == 0) {
        throw ValidationError("randomized_search_cv: fold smaller than 1 sample");
      }
      folds[f].assign(permutation.begin() + cursor, permutation.begin() + cursor + size);
      cursor += size;
    }
  }

  // Pre-build per-fold train/validation tables once; candidates share them.
  std::vector<FeatureTable> fold_train(k_folds), fold_valid(k_folds);
  for (int f = 0; f < k_folds; ++f) {
    std::vector<size_t> train_rows;
    for (int g = 0; g < k_folds; ++g) {
      if (g == f) continue;
      train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::vector<size_t> valid_rows = folds[f];
    std::sort(valid_rows.begin(), valid_rows.end());
    fold_train[f] = take_rows(train, train_rows);
    fold_valid[f] = take_rows(train, valid_rows);
  }

  // Score all (candidate, fold) cells; each cell owns a derived seed so
  // results do not depend on scheduling.
  const size_t cells = static_cast<size_t>(n_iter) * k_folds;
  std::vector<double> fold_rmse(cells, 0.0);
  parallel_for(cells, [&](size_t cell) {
    const size_t c = cell / k_folds;
    const size_t f = cell % k_folds;
    const uint64_t fit_seed = Rng::derive(seed, "cv-fit", cell);
    const CoreFit fit = fit_core(fold_train[f], candidates[c], fit_seed);
    const std::vector<double> predicted = predict_core(fit, fold_valid[f]);
    fold_rmse[cell] = rmse(predicted, fold_valid[f].outcome);
  });

  int best = -1;
  double best_score = 0.0;
  std::vector<double> cv_scores(n_iter, 0.0);
  for (int c = 0; c < n_iter; ++c) {
    double total = 0.0;
    for (int f = 0; f < k_folds; ++f) total += fold_rmse[static_cast<size_t>(c) * k_folds + f];
    cv_scores[c] = total / k_folds;
    if (best < 0 || cv_scores[c] < best_score) {  // strict: ties keep the earlier candidate
      best = c;
      best_score = cv_scores[c];
    }
  }

  FittedPipeline out = fit_pipeline(train, candidates[best], Rng::derive(seed, "refit"));
  out.cv_rmse = best_score;
  out.seed = seed;
  out.candidates_evaluated = n_iter;
  out.chosen_candidate = best;
  return out;
}

Evaluation evaluate(const FittedPipeline& model, const FeatureTable& test) {
  Evaluation eval;
  eval.ids = test.ids;
  eval.predicted = model.predict(test);
  eval.observed = test.outcome;
  eval.rmse = rmse(eval.predicted, eval.observed);
  eval.pearson_r = pearson(eval.predicted, eval.observed);
  eval.spearman_rho = spearman(eval.predicted, eval.observed);
  return eval;
}

// --- Artifact serialization ----------------------------------------------------

void save_pipeline(const FittedPipeline& model, const std::string& json_path,
                   const std::string& trees_path) {
  nlohmann::ordered_json j;
  j["algorithm"] = algorithm_name(model.algorithm);
  j["seed"] = model.seed;
  j["cv_rmse"] = model.cv_rmse;
  j["candidates_evaluated"] = model.candidates_evaluated;
  j["chosen_candidate"] = model.chosen_candidate;
  j["imputer_means"] = model.imputer_means;
  if (model.selected_columns) j["selected_columns"] = *model.selected_columns;

  nlohmann::ordered_json chosen;
  switch (model.algorithm) {
    case Algorithm::kElasticNet:
      chosen["alpha"] = model.chosen.en_alpha;
      chosen["l1_ratio"] = model.chosen.en_l1_ratio;
      break;
    case Algorithm::kRandomForest:
      chosen["n_trees"] = model.chosen.rf.n_trees;
      chosen["mtry_fraction"] = model.chosen.rf.mtry_fraction;
      chosen["min_leaf"] = model.chosen.rf.min_leaf;
      chosen["max_depth"] = model.chosen.rf.max_depth;
      chosen["bootstrap"] = model.chosen.rf.bootstrap;
      break;
    case Algorithm::kGbt:
      chosen["n_rounds"] = model.chosen.gbt.n_rounds;
      chosen["eta"] = model.chosen.gbt.eta;
      chosen["lambda"] = model.chosen.gbt.lambda;
      chosen["gamma"] = model.chosen.gbt.gamma;
      chosen["max_depth"] = model.chosen.gbt.max_depth;
      break;
  }
  if (model.chosen.select_k > 0) chosen["select_k"] = model.chosen.select_k;
  j["hyperparameters"] = chosen;

  if (model.linear) {
    j["linear"] = {{"intercept", model.linear->intercept},
                   {"coefficients", model.linear->coefficients},
                   {"alpha", model.linear->alpha},
                   {"l1_ratio", model.linear->l1_ratio},
                   {"converged", model.linear->converged},
                   {"kkt_residual", model.linear->kkt_residual},
                   {"iterations", model.linear->iterations}};
  } else {
    const std::vector<DecisionTree>& trees =
        model.forest ? model.forest->trees : model.gbt->trees;
    write_tree_blocks(trees_path, trees);
    j["tree_blocks"] = std::filesystem::path(trees_path).filename().string();
    if (model.gbt) {
      j["base_score"] = model.gbt->base_score;
      j["eta"] = model.gbt->params.eta;
    }
  }

  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write model artifact: " + json_path);
  out << j.dump(2) << '\n';
}

FittedPipeline load_pipeline(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw MissingDependencyError("cannot open model artifact: " + json_path);
  nlohmann::json j = nlohmann::json::parse(in);

  FittedPipeline model;
  const auto algo = algorithm_from_name(j.at("algorithm").get<std::string>());
  if (!algo) throw ValidationError("model artifact: unknown algorithm");
  model.algorithm = *algo;
  model.seed = j.at("seed").get<uint64_t>();
  model.cv_rmse = j.value("cv_rmse", 0.0);
  model.candidates_evaluated = j.value("candidates_evaluated", 0);
  model.chosen_candidate = j.value("chosen_candidate", -1);
  model.imputer_means = j.at("imputer_means").get<std::vector<double>>();
  if (j.contains("selected_columns")) {
    model.selected_columns = j.at("selected_columns").get<std::vector<int>>();
  }
  const auto& chosen = j.at("hyperparameters");
  model.chosen.algorithm = model.algorithm;
  model.chosen.select_k = chosen.value("select_k", 0);

  switch (model.algorithm) {
    case Algorithm::kElasticNet: {
      ElasticNetModel linear;
      linear.intercept = j.at("linear").at("intercept").get<double>();
      linear.coefficients = j.at("linear").at("coefficients").get<std::vector<double>>();
      linear.alpha = j.at("linear").at("alpha").get<double>();
      linear.l1_ratio = j.at("linear").at("l1_ratio").get<double>();
      linear.converged = j.at("linear").at("converged").get<bool>();
      linear.kkt_residual = j.at("linear").at("kkt_residual").get<double>();
      linear.iterations = j.at("linear").at("iterations").get<int>();
      model.chosen.en_alpha = linear.alpha;
      model.chosen.en_l1_ratio = linear.l1_ratio;
      model.linear = std::move(linear);
      break;
    }
    case Algorithm::kRandomForest: {
      RandomForestModel forest;
      forest.params.n_trees = chosen.at("n_trees").get<int>();
      forest.params.mtry_fraction = chosen.at("mtry_fraction").get<double>();
      forest.params.min_leaf = chosen.at("min_leaf").get<int>();
      forest.params.max_depth = chosen.at("max_depth").get<int>();
      forest.params.bootstrap = chosen.at("bootstrap").get<bool>();
      forest.params.seed = model.seed;
      const auto dir = std::filesystem::path(json_path).parent_path();
      forest.trees = read_tree_blocks((dir / j.at("tree_blocks").get<std::string>()).string());
      model.chosen.rf = forest.params;
      model.forest = std::move(forest);
      break;
    }
    case Algorithm::kGbt: {
      GbtModel gbt;
      gbt.params.n_rounds = chosen.at("n_rounds").get<int>();
      gbt.params.eta = chosen.at("eta").get<double>();
      gbt.params.lambda = chosen.at("lambda").get<double>();
      gbt.params.gamma = chosen.at("gamma").get<double>();
      gbt.params.max_depth = chosen.at("max_depth").get<int>();
      gbt.params.seed = model.seed;
      gbt.base_score = j.at("base_score").get<double>();
      const auto dir = std::filesystem::path(json_path).parent_path();
      gbt.trees = read_tree_blocks((dir / j.at("tree_blocks").get<std::string>()).string());
      model.chosen.gbt = gbt.params;
      model.gbt = std::move(gbt);
      break;
    }
  }
  return model;
}

}  // namespace sep
