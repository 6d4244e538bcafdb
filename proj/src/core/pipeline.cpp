#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "csvio.hpp"
#include "imagery.hpp"
#include "mca.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "plot.hpp"
#include "rng.hpp"
#include "shap.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace sep {

namespace {

constexpr const char* kManifestFile = "run_manifest.json";
constexpr const char* kAccessLogFile = "access_log.json";
constexpr const char* kLockFile = ".sep_pipeline.lock";

uint64_t fnv1a_bytes(const char* data, size_t size, uint64_t h) {
  for (size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_json_file(const std::string& path, const ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << '\n';
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingDependencyError("cannot open " + path);
  return json::parse(in);
}

// RAII lock: one CLI invocation per output directory.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / kLockFile) {
    if (fs::exists(path_)) {
      throw ValidationError("output directory is locked by another invocation (" +
                            path_.string() + "); remove the lock file if that run is dead");
    }
    std::ofstream out(path_);
    out << "locked\n";
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

std::string measure_outcome_file(Measure m) {
  return "outcome_" + measure_name(m) + ".csv";
}

std::string model_id(Measure m, const std::string& set_name, Algorithm a) {
  return measure_name(m) + "_" + set_name + "_" + algorithm_name(a);
}

// Rebuilds per-household feature vectors from a flat table; an image type
// is missing for a household iff all of its cells are masked.
FeatureStore store_from_table(const FeatureTable& table) {
  std::map<ImageType, std::vector<size_t>> cols_of;
  for (size_t j = 0; j < table.p; ++j) cols_of[table.provenance[j].type].push_back(j);
  FeatureStore store;
  for (size_t i = 0; i < table.n; ++i) {
    auto& per_type = store[table.ids[i]];
    for (const auto& [type, cols] : cols_of) {
      bool all_missing = true;
      for (size_t j : cols) {
        if (!table.is_missing(i, j)) {
          all_missing = false;
          break;
        }
      }
      FeatureVector fv;
      fv.id = table.ids[i];
      fv.type = type;
      fv.missing = all_missing;
      if (!all_missing) {
        fv.values.reserve(cols.size());
        for (size_t j : cols) fv.values.push_back(table.at(i, j));
      }
      per_type[type] = std::move(fv);
    }
  }
  return store;
}

PredictorSet predictor_set_from_name(const std::string& name) {
  if (name == "satellite") return PredictorSet::satellite();
  if (name == "outdoor") return PredictorSet::outdoor();
  if (name == "complete") return PredictorSet::complete();
  throw ValidationError("unknown predictor set name '" + name + "'");
}

ordered_json evaluation_to_json(Measure m, const std::string& set_name, Algorithm a,
                                const Evaluation& eval, const FittedPipeline& model) {
  ordered_json j;
  j["measure"] = measure_name(m);
  j["predictor_set"] = set_name;
  j["algorithm"] = algorithm_name(a);
  j["rmse"] = eval.rmse;
  if (eval.pearson_r) {
    j["pearson"] = *eval.pearson_r;
  } else {
    j["pearson"] = nullptr;  // undefined marker: zero-variance predictions
  }
  if (eval.spearman_rho) {
    j["spearman"] = *eval.spearman_rho;
  } else {
    j["spearman"] = nullptr;
  }
  j["cv_rmse"] = model.cv_rmse;
  j["chosen_candidate"] = model.chosen_candidate;
  return j;
}

}  // namespace

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependencyError("cannot hash missing file: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a_bytes(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  fs::create_directories(config_.output_dir);
}

const std::vector<std::string>& Pipeline::stage_names() {
  static const std::vector<std::string> names = {
      "synth",   "sep", "split",   "preprocess", "train-extractor",
      "extract", "fit", "explain", "reduce",     "report"};
  return names;
}

std::string Pipeline::artifact_path(const std::string& relative) const {
  return (fs::path(config_.output_dir) / relative).string();
}

std::string Pipeline::survey_csv_path() const {
  return config_.inputs.provided() ? config_.inputs.survey_csv : artifact_path("cohort.csv");
}

std::string Pipeline::raster_png_path() const {
  return config_.inputs.provided() ? config_.inputs.raster_png : artifact_path("raster.png");
}

std::string Pipeline::raster_georef_path() const {
  return config_.inputs.provided() ? config_.inputs.raster_georef
                                   : artifact_path("raster_georef.json");
}

uint64_t Pipeline::config_hash() const {
  // The effective seed is folded in so a --seed override invalidates
  // previously recorded stages.
  return hash_file(config_.config_path) ^ Rng::derive(config_.seed, "config-hash");
}

Pipeline::StagePlan Pipeline::plan_for(const std::string& stage) const {
  StagePlan plan;
  auto out = [&](const std::string& rel) { plan.outputs.push_back(artifact_path(rel)); };
  auto in = [&](const std::string& path) { plan.inputs.push_back(path); };

  const std::string manifest_path = config_.inputs.provided() ? config_.inputs.image_manifest
                                                              : artifact_path("manifest.jsonl");
  if (stage == "synth") {
    out("cohort.csv");
    out("synthetic_latent.csv");
    out("manifest.jsonl");
    out("raster.png");
    out("raster_georef.json");
    out("images_index.csv");
  } else if (stage == "sep") {
    in(survey_csv_path());
    out("sep_measures.csv");
    for (int m = 0; m < kNumMeasures; ++m) out(measure_outcome_file(static_cast<Measure>(m)));
    out("mca_columns.csv");
    out("mca_inertia.json");
    out("exploratory.json");
    out("exploratory_hist.csv");
    out("exploratory_scatter.csv");
  } else if (stage == "split") {
    in(survey_csv_path());
    in(artifact_path("sep_measures.csv"));
    out("split.json");
    out("labels.csv");
    out("labels_thresholds.json");
  } else if (stage == "preprocess") {
    in(survey_csv_path());
    in(raster_png_path());
    in(raster_georef_path());
    in(manifest_path);
    out("raster_clipped.png");
    out("raster_clipped_georef.json");
    out("manifest_satellite.jsonl");
  } else if (stage == "train-extractor") {
    in(manifest_path);
    in(artifact_path("manifest_satellite.jsonl"));
    in(artifact_path("labels.csv"));
    in(artifact_path("split.json"));
    for (ImageType t : all_image_types()) {
      out("checkpoints/extractor_" + image_type_name(t) + ".ckpt");
      out("logs/training_" + image_type_name(t) + ".csv");
    }
  } else if (stage == "extract") {
    in(manifest_path);
    in(artifact_path("manifest_satellite.jsonl"));
    for (ImageType t : all_image_types()) {
      in(artifact_path("checkpoints/extractor_" + image_type_name(t) + ".ckpt"));
    }
    out("features.csv");
    if (config_.extractor.offtheshelf.enabled) out("features_ots.csv");
  } else if (stage == "fit") {
    in(artifact_path("features.csv"));
    in(artifact_path("split.json"));
    for (int m = 0; m < kNumMeasures; ++m) {
      in(artifact_path(measure_outcome_file(static_cast<Measure>(m))));
    }
    if (config_.extractor.offtheshelf.enabled) in(artifact_path("features_ots.csv"));
    out("fit_summary.json");
    if (config_.extractor.offtheshelf.enabled) out("ots_summary.json");
  } else if (stage == "explain") {
    in(artifact_path("features.csv"));
    in(artifact_path("split.json"));
    in(artifact_path("fit_summary.json"));
    out("shap/shap_values.csv");
    for (int m = 0; m < kNumMeasures; ++m) {
      out("shap/ranking_" + measure_name(static_cast<Measure>(m)) + ".json");
      out("shap/top_bottom_" + measure_name(static_cast<Measure>(m)) + ".jsonl");
    }
  } else if (stage == "reduce") {
    in(artifact_path("features.csv"));
    in(artifact_path("split.json"));
    in(artifact_path("fit_summary.json"));
    for (int m = 0; m < kNumMeasures; ++m) {
      in(artifact_path("shap/ranking_" + measure_name(static_cast<Measure>(m)) + ".json"));
    }
    out("reduce_summary.json");
  } else if (stage == "report") {
    in(artifact_path("exploratory.json"));
    in(artifact_path("fit_summary.json"));
    in(artifact_path("reduce_summary.json"));
    for (int m = 0; m < kNumMeasures; ++m) {
      in(artifact_path("shap/ranking_" + measure_name(static_cast<Measure>(m)) + ".json"));
    }
    out("report.json");
    out("report.csv");
    for (int m = 0; m < kNumMeasures; ++m) {
      out("plots/hist_" + measure_name(static_cast<Measure>(m)) + ".png");
      out("plots/scatter_" + measure_name(static_cast<Measure>(m)) + ".png");
      out("plots/shap_rank_" + measure_name(static_cast<Measure>(m)) + ".png");
    }
  } else {
    throw ValidationError("unknown stage '" + stage + "'");
  }
  return plan;
}

bool Pipeline::stage_is_current(const std::string& stage, const StagePlan& plan) const {
  const std::string manifest_path = artifact_path(kManifestFile);
  if (!fs::exists(manifest_path)) return false;
  json manifest;
  try {
    manifest = read_json_file(manifest_path);
  } catch (...) {
    return false;
  }
  if (!manifest.contains("stages") || !manifest["stages"].contains(stage)) return false;
  if (manifest.value("config_hash", std::string{}) != hex64(config_hash())) return false;
  const json& record = manifest["stages"][stage];

  for (const std::string& path : plan.outputs) {
    if (!fs::exists(path)) return false;
  }
  const json& inputs = record.value("inputs", json::object());
  for (const std::string& path : plan.inputs) {
    if (!fs::exists(path)) return false;
    if (!inputs.contains(path) || inputs[path] != hex64(hash_file(path))) return false;
  }
  return true;
}

void Pipeline::record_stage(const std::string& stage, const StagePlan& plan, double wall_ms) {
  const std::string manifest_path = artifact_path(kManifestFile);
  ordered_json manifest;
  if (fs::exists(manifest_path)) {
    try {
      manifest = read_json_file(manifest_path);
    } catch (...) {
      manifest = ordered_json::object();
    }
  }
  manifest["tool_version"] = kPipelineVersion;
  manifest["config_hash"] = hex64(config_hash());
  ordered_json inputs = ordered_json::object();
  for (const std::string& path : plan.inputs) inputs[path] = hex64(hash_file(path));
  ordered_json outputs = ordered_json::object();
  for (const std::string& path : plan.outputs) outputs[path] = hex64(hash_file(path));
  manifest["stages"][stage] = {{"inputs", inputs}, {"outputs", outputs}, {"wall_ms", wall_ms}};
  write_json_file(manifest_path, manifest);

  // Artifact access log: what each stage read and wrote.
  const std::string access_path = artifact_path(kAccessLogFile);
  ordered_json access;
  if (fs::exists(access_path)) {
    try {
      access = read_json_file(access_path);
    } catch (...) {
      access = ordered_json::object();
    }
  }
  access[stage] = {{"reads", plan.inputs}, {"writes", plan.outputs}};
  write_json_file(access_path, access);
}

std::vector<StageResult> Pipeline::run(const std::string& stage, bool force) {
  DirectoryLock lock(config_.output_dir);
  std::vector<StageResult> results;
  if (stage == "all") {
    for (const std::string& name : stage_names()) {
      if (name == "synth" && config_.inputs.provided()) continue;
      results.push_back(run_one(name, force));
    }
  } else {
    results.push_back(run_one(stage, force));
  }
  return results;
}

StageResult Pipeline::run_one(const std::string& stage, bool force) {
  const StagePlan plan = plan_for(stage);

  // Dependency check first so the error names the stage to run.
  std::map<std::string, std::string> producer;
  for (const std::string& other : stage_names()) {
    for (const std::string& out : plan_for(other).outputs) producer[out] = other;
  }
  for (const std::string& input : plan.inputs) {
    if (!fs::exists(input)) {
      auto it = producer.find(input);
      const std::string hint =
          it != producer.end() ? "; run stage '" + it->second + "' first"
                               : " (external input)";
      throw MissingDependencyError("stage '" + stage + "' requires missing artifact " + input +
                                   hint);
    }
  }

  StageResult result;
  result.name = stage;
  if (!force && stage_is_current(stage, plan)) {
    result.skipped = true;
    return result;
  }

  const auto t0 = std::chrono::steady_clock::now();
  execute(stage);
  const auto t1 = std::chrono::steady_clock::now();
  result.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  record_stage(stage, plan, result.wall_ms);
  return result;
}

void Pipeline::execute(const std::string& stage) {
  if (stage == "synth") {
    stage_synth();
  } else if (stage == "sep") {
    stage_sep();
  } else if (stage == "split") {
    stage_split();
  } else if (stage == "preprocess") {
    stage_preprocess();
  } else if (stage == "train-extractor") {
    stage_train_extractor();
  } else if (stage == "extract") {
    stage_extract();
  } else if (stage == "fit") {
    stage_fit();
  } else if (stage == "explain") {
    stage_explain();
  } else if (stage == "reduce") {
    stage_reduce();
  } else if (stage == "report") {
    stage_report();
  }
}

// --- synth ---------------------------------------------------------------

void Pipeline::stage_synth() {
  if (config_.inputs.provided()) {
    throw ValidationError("stage 'synth' is not applicable when real inputs are configured");
  }
  SyntheticConfig synth_config = config_.synthetic;
  const bool stratified = config_.stratified.pool_size > 0;
  if (stratified) synth_config.n_households = config_.stratified.pool_size;

  SyntheticCohort cohort = generate_synthetic_cohort(synth_config, config_.seed);

  if (stratified) {
    // Mirror the survey design: build a quick asset score over the pool and
    // keep n households per quartile.
    Cohort imputed = impute_assets(cohort.records);
    const McaModel mca = fit_mca(indicator_matrix(imputed, bundled_asset_schema()));
    const auto scores = first_dimension_scores(
        mca, {config_.mca.anchor_variable, config_.mca.anchor_category});
    const auto sampled = quartile_stratified_sample(scores, config_.stratified.n_per_quartile,
                                                    Rng::derive(config_.seed, "stratified"));
    const std::set<HouseholdId> keep(sampled.begin(), sampled.end());
    Cohort kept_records;
    for (auto& rec : cohort.records) {
      if (keep.count(rec.id)) kept_records.push_back(std::move(rec));
    }
    cohort.records = std::move(kept_records);
    std::erase_if(cohort.latent, [&](const auto& kv) { return !keep.count(kv.first); });
    std::erase_if(cohort.photos, [&](const auto& kv) { return !keep.count(kv.first); });
  }

  // Photo files + manifest paths.
  for (ImageType t : all_image_types()) {
    fs::create_directories(fs::path(config_.output_dir) / "images" / image_type_name(t));
  }
  CsvTable index;
  index.header = {"path"};
  for (auto& rec : cohort.records) {
    for (ImageType t : all_image_types()) {
      ImageRef& ref = rec.images.at(t);
      if (image_group(t) == ImageGroup::kSatellite) continue;  // written by preprocess
      if (ref.missing) continue;
      const std::string rel = "images/" + image_type_name(t) + "/" + rec.id + ".png";
      ref.path = artifact_path(rel);
      write_image_png(ref.path, cohort.photos.at(rec.id).at(t));
      index.rows.push_back({rel});
    }
  }
  write_csv(artifact_path("images_index.csv"), index);
  write_survey_csv(artifact_path("cohort.csv"), cohort.records, bundled_asset_schema());
  const std::vector<ImageType> manifest_types(all_image_types().begin(), all_image_types().end());
  append_image_manifest(artifact_path("manifest.jsonl"), cohort.records, manifest_types, true);
  write_raster_png(cohort.raster, artifact_path("raster.png"), artifact_path("raster_georef.json"));

  CsvTable latent;
  latent.header = {"id", "latent"};
  for (const auto& rec : cohort.records) {
    latent.rows.push_back({rec.id, format_double(cohort.latent.at(rec.id))});
  }
  write_csv(artifact_path("synthetic_latent.csv"), latent);
}

// --- sep -----------------------------------------------------------------

void Pipeline::stage_sep() {
  Cohort cohort = read_survey_csv(survey_csv_path(), bundled_asset_schema());
  if (cohort.empty()) throw ValidationError("sep: empty cohort");

  const Cohort imputed = impute_assets(cohort);
  const IndicatorMatrix indicator = indicator_matrix(imputed, bundled_asset_schema());
  const McaModel mca = fit_mca(indicator);
  const auto asset_scores =
      first_dimension_scores(mca, {config_.mca.anchor_variable, config_.mca.anchor_category});
  write_mca_report(mca, artifact_path("mca_columns.csv"), artifact_path("mca_inertia.json"),
                   config_.mca.adjusted_inertia);

  SepTable sep;
  for (const auto& rec : cohort) {
    SepMeasures m;
    m.assets = asset_scores.at(rec.id);
    m.expenditure = compute_expenditure_sep(rec);
    m.income = compute_income_sep(rec);
    sep[rec.id] = m;
  }

  CsvTable table;
  table.header = {"id", "assets", "expenditure", "income"};
  for (const auto& [id, m] : sep) {
    table.rows.push_back({id, format_double(m.assets), format_double(m.expenditure),
                          format_double(m.income)});
  }
  write_csv(artifact_path("sep_measures.csv"), table);

  for (int mi = 0; mi < kNumMeasures; ++mi) {
    const Measure m = static_cast<Measure>(mi);
    std::vector<HouseholdId> ids;
    std::vector<double> values;
    for (const auto& [id, measures] : sep) {
      ids.push_back(id);
      values.push_back(measures.get(m));
    }
    write_outcome_csv(artifact_path(measure_outcome_file(m)), ids, values);
  }

  write_exploratory_report(sep, artifact_path("exploratory.json"),
                           artifact_path("exploratory_hist.csv"),
                           artifact_path("exploratory_scatter.csv"));
}

// --- split -----------------------------------------------------------------

void Pipeline::stage_split() {
  const Cohort cohort = read_survey_csv(survey_csv_path(), bundled_asset_schema());
  std::vector<HouseholdId> ids;
  for (const auto& rec : cohort) ids.push_back(rec.id);

  const CohortSplit split =
      train_test_split(ids, config_.split.n_train, config_.split.n_test, config_.seed);
  write_split_file(artifact_path("split.json"), split);

  SepTable sep;
  const CsvTable table = read_csv(artifact_path("sep_measures.csv"));
  for (const auto& row : table.rows) {
    sep[row[0]] = {std::stod(row[1]), std::stod(row[2]), std::stod(row[3])};
  }
  const BinaryLabels labels = binarize_labels(sep, split.train_ids);

  CsvTable label_csv;
  label_csv.header = {"id", "above_assets", "above_expenditure", "above_income"};
  for (const auto& [id, flags] : labels.flags) {
    label_csv.rows.push_back(
        {id, flags[0] ? "1" : "0", flags[1] ? "1" : "0", flags[2] ? "1" : "0"});
  }
  write_csv(artifact_path("labels.csv"), label_csv);

  ordered_json thresholds;
  for (int m = 0; m < kNumMeasures; ++m) {
    thresholds[measure_name(static_cast<Measure>(m))] = labels.thresholds[m];
  }
  write_json_file(artifact_path("labels_thresholds.json"), thresholds);
}

// --- preprocess ---------------------------------------------------------------

void Pipeline::stage_preprocess() {
  Cohort cohort = read_survey_csv(survey_csv_path(), bundled_asset_schema());
  const std::string manifest_path = config_.inputs.provided() ? config_.inputs.image_manifest
                                                              : artifact_path("manifest.jsonl");
  read_image_manifest(manifest_path, cohort);

  const Raster raster = read_raster_png(raster_png_path(), raster_georef_path());
  const Raster clipped =
      percentile_clip(raster, config_.preprocess.clip_low, config_.preprocess.clip_high);
  write_raster_png(clipped, artifact_path("raster_clipped.png"),
                   artifact_path("raster_clipped_georef.json"));

  const std::array<ImageType, 2> satellite_types = {ImageType::kSatellite25m,
                                                    ImageType::kSatellite100m};
  for (ImageType t : satellite_types) {
    fs::create_directories(fs::path(config_.output_dir) / "images" / image_type_name(t));
  }

  for (auto& rec : cohort) {
    for (size_t b = 0; b < satellite_types.size(); ++b) {
      const ImageType type = satellite_types[b];
      // A manifest row can mark a satellite image missing; households with
      // no row get both crops.
      const auto it = rec.images.find(type);
      const bool missing = it != rec.images.end() && it->second.missing;
      ImageRef& ref = rec.images[type];
      ref.missing = missing;
      if (missing) {
        ref.path.clear();
        continue;
      }
      const Image crop = crop_buffer(clipped, rec.x, rec.y, config_.preprocess.buffers_m[b]);
      const std::string rel = "images/" + image_type_name(type) + "/" + rec.id + ".png";
      ref.path = artifact_path(rel);
      ref.missing = false;
      write_image_png(ref.path, crop);
    }
  }
  append_image_manifest(artifact_path("manifest_satellite.jsonl"), cohort,
                        {ImageType::kSatellite25m, ImageType::kSatellite100m}, true);
}

// --- train-extractor -----------------------------------------------------------

namespace {

struct LoadedImages {
  // Per image type, households with a usable image and their labels.
  std::map<ImageType, LabeledImages> train, test;
};

std::array<bool, kNumMeasures> parse_label_row(const std::vector<std::string>& row) {
  return {row[1] == "1", row[2] == "1", row[3] == "1"};
}

}  // namespace

void Pipeline::stage_train_extractor() {
  Cohort cohort = read_survey_csv(survey_csv_path(), bundled_asset_schema());
  const std::string manifest_path = config_.inputs.provided() ? config_.inputs.image_manifest
                                                              : artifact_path("manifest.jsonl");
  read_image_manifest(manifest_path, cohort);
  read_image_manifest(artifact_path("manifest_satellite.jsonl"), cohort);
  const CohortSplit split = read_split_file(artifact_path("split.json"));

  std::map<HouseholdId, std::array<bool, kNumMeasures>> labels;
  for (const auto& row : read_csv(artifact_path("labels.csv")).rows) {
    labels[row[0]] = parse_label_row(row);
  }

  fs::create_directories(fs::path(config_.output_dir) / "checkpoints");
  fs::create_directories(fs::path(config_.output_dir) / "logs");

  // One network per image type; types are independent, so parallelize at
  // this level while each training run stays sequential.
  const auto& types = all_image_types();
  parallel_for(types.size(), [&](size_t ti) {
    const ImageType type = types[ti];
    LabeledImages train, test;
    for (const auto& rec : cohort) {
      auto it = rec.images.find(type);
      if (it == rec.images.end() || it->second.missing || it->second.path.empty()) continue;
      const bool in_train = split.is_train(rec.id);
      const bool in_test = std::binary_search(split.test_ids.begin(), split.test_ids.end(), rec.id);
      if (!in_train && !in_test) continue;
      auto label_it = labels.find(rec.id);
      if (label_it == labels.end()) continue;
      Image img = read_image_png(it->second.path);
      if (img.height != config_.extractor.spec.input_h ||
          img.width != config_.extractor.spec.input_w) {
        img = resize(img, config_.extractor.spec.input_h, config_.extractor.spec.input_w);
      }
      LabeledImages& dst = in_train ? train : test;
      dst.images.push_back(std::move(img));
      dst.labels.push_back(label_it->second);
    }

    NetworkSpec spec = config_.extractor.spec;
    spec.seed = Rng::derive(config_.seed, "train-extractor/" + image_type_name(type));
    TrainOptions options = config_.extractor.train;
    options.seed = spec.seed;
    options.augment.allow_rot90 =
        config_.extractor.satellite_rot90 && image_group(type) == ImageGroup::kSatellite;

    const TrainResult result = train_extractor(train, test, spec, options);
    save_checkpoint(artifact_path("checkpoints/extractor_" + image_type_name(type) + ".ckpt"),
                    result.params, options.epochs);
    write_training_log(artifact_path("logs/training_" + image_type_name(type) + ".csv"),
                       result.log);
  });
}

// --- extract ---------------------------------------------------------------

void Pipeline::stage_extract() {
  Cohort cohort = read_survey_csv(survey_csv_path(), bundled_asset_schema());
  const std::string manifest_path = config_.inputs.provided() ? config_.inputs.image_manifest
                                                              : artifact_path("manifest.jsonl");
  read_image_manifest(manifest_path, cohort);
  read_image_manifest(artifact_path("manifest_satellite.jsonl"), cohort);

  const auto& types = all_image_types();
  // per type, per cohort index
  std::vector<std::vector<FeatureVector>> fine(types.size());
  std::vector<std::vector<FeatureVector>> ots(types.size());
  const bool with_ots = config_.extractor.offtheshelf.enabled;

  parallel_for(types.size(), [&](size_t ti) {
    const ImageType type = types[ti];
    const NetworkParams<float> params = load_checkpoint(
        artifact_path("checkpoints/extractor_" + image_type_name(type) + ".ckpt"));
    NetworkParams<float> frozen;
    if (with_ots) {
      frozen = build_frozen_network(config_.extractor.spec.input_h, config_.extractor.spec.input_w,
                                    config_.extractor.offtheshelf.width,
                                    Rng::derive(config_.seed, "offtheshelf-frozen"));
    }
    fine[ti].resize(cohort.size());
    if (with_ots) ots[ti].resize(cohort.size());
    for (size_t i = 0; i < cohort.size(); ++i) {
      const auto& rec = cohort[i];
      auto it = rec.images.find(type);
      const bool missing =
          it == rec.images.end() || it->second.missing || it->second.path.empty();
      if (missing) {
        fine[ti][i] = missing_feature_vector(rec.id, type);
        if (with_ots) ots[ti][i] = missing_feature_vector(rec.id, type);
        continue;
      }
      const Image img = read_image_png(it->second.path);
      fine[ti][i] = extract_features(params, img, rec.id, type);
      if (with_ots) ots[ti][i] = extract_features(frozen, img, rec.id, type);
    }
  });

  auto build_store = [&](const std::vector<std::vector<FeatureVector>>& per_type) {
    FeatureStore store;
    for (size_t ti = 0; ti < types.size(); ++ti) {
      for (size_t i = 0; i < cohort.size(); ++i) {
        store[cohort[i].id][types[ti]] = per_type[ti][i];
      }
    }
    return store;
  };

  // Outcome values are not needed to serialize features; write with a
  // placeholder outcome of 0 via a dummy map.
  std::map<HouseholdId, double> zero_outcome;
  for (const auto& rec : cohort) zero_outcome[rec.id] = 0.0;
  const FeatureTable fine_table =
      assemble_feature_table(build_store(fine), PredictorSet::complete(), zero_outcome);
  write_feature_table_csv(artifact_path("features.csv"), fine_table);
  if (with_ots) {
    const FeatureTable ots_table =
        assemble_feature_table(build_store(ots), PredictorSet::complete(), zero_outcome);
    write_feature_table_csv(artifact_path("features_ots.csv"), ots_table);
  }
}

// --- fit -----------------------------------------------------------------

void Pipeline::stage_fit() {
  const FeatureTable full = read_feature_table_csv(artifact_path("features.csv"));
  const FeatureStore store = store_from_table(full);
  const CohortSplit split = read_split_file(artifact_path("split.json"));
  fs::create_directories(fs::path(config_.output_dir) / "models");

  auto run_block = [&](const FeatureStore& feature_store,
                       const std::vector<std::string>& set_names, bool with_selection,
                       const std::string& dir_prefix) {
    std::vector<ordered_json> rows;
    for (int mi = 0; mi < kNumMeasures; ++mi) {
      const Measure measure = static_cast<Measure>(mi);
      const auto outcome = read_outcome_csv(artifact_path(measure_outcome_file(measure)));
      for (const std::string& set_name : set_names) {
        const PredictorSet set = predictor_set_from_name(set_name);
        const FeatureTable table = assemble_feature_table(feature_store, set, outcome);
        const FeatureTable train = table.subset(split.train_ids);
        const FeatureTable test = table.subset(split.test_ids);
        for (Algorithm algorithm : config_.fit.algorithms) {
          const std::string id = model_id(measure, set_name, algorithm);
          const uint64_t seed = Rng::derive(config_.seed, "fit/" + dir_prefix + id);
          const FittedPipeline model =
              randomized_search_cv(train, algorithm, config_.fit.distributions,
                                   config_.fit.n_iter, config_.fit.k_folds, seed, with_selection);
          const Evaluation eval = evaluate(model, test);

          const std::string base = dir_prefix + id;
          save_pipeline(model, artifact_path("models/" + base + ".model.json"),
                        artifact_path("models/" + base + ".trees.bin"));
          CsvTable predictions;
          predictions.header = {"id", "observed", "predicted"};
          for (size_t i = 0; i < eval.ids.size(); ++i) {
            predictions.rows.push_back({eval.ids[i], format_double(eval.observed[i]),
                                        format_double(eval.predicted[i])});
          }
          write_csv(artifact_path("models/" + base + ".predictions.csv"), predictions);
          rows.push_back(evaluation_to_json(measure, set_name, algorithm, eval, model));
        }
      }
    }
    return rows;
  };

  ordered_json summary;
  summary["models"] = run_block(store, config_.fit.predictor_sets, false, "");
  summary["n_models"] = summary["models"].size();
  write_json_file(artifact_path("fit_summary.json"), summary);

  if (config_.extractor.offtheshelf.enabled) {
    // Off-the-shelf path: frozen wide features + F-statistic selection,
    // run on the complete predictor set.
    const FeatureTable ots_full = read_feature_table_csv(artifact_path("features_ots.csv"));
    ordered_json ots_summary;
    ots_summary["models"] = run_block(store_from_table(ots_full), {"complete"}, true, "ots_");
    write_json_file(artifact_path("ots_summary.json"), ots_summary);
  }
}

// --- explain ---------------------------------------------------------------

namespace {

struct ExplainedModel {
  Algorithm algorithm = Algorithm::kRandomForest;
  std::string id;
  double test_pearson = 0.0;
  std::string global_best_algorithm;  // differs when the best model is not tree-based
};

ExplainedModel pick_complete_model(const json& fit_summary, Measure measure,
                                   const std::string& override_algo) {
  ExplainedModel picked;
  double best_tree = -2.0, best_any = -2.0;
  for (const auto& row : fit_summary.at("models")) {
    if (row.at("measure") != measure_name(measure)) continue;
    if (row.at("predictor_set") != "complete") continue;
    const auto algo = algorithm_from_name(row.at("algorithm").get<std::string>());
    if (!algo) continue;
    const double r = row.at("pearson").is_null() ? -2.0 : row.at("pearson").get<double>();
    if (r > best_any) {
      best_any = r;
      picked.global_best_algorithm = algorithm_name(*algo);
    }
    const bool eligible = override_algo.empty()
                              ? *algo != Algorithm::kElasticNet  // treeSHAP needs trees
                              : algorithm_name(*algo) == override_algo;
    if (eligible && r > best_tree) {
      best_tree = r;
      picked.algorithm = *algo;
      picked.test_pearson = r;
    }
  }
  if (best_tree <= -2.0) {
    throw ValidationError("explain: no tree-based complete model available for measure " +
                          measure_name(measure));
  }
  picked.id = measure_name(measure) + "_complete_" + algorithm_name(picked.algorithm);
  return picked;
}

}  // namespace

void Pipeline::stage_explain() {
  const FeatureTable full = read_feature_table_csv(artifact_path("features.csv"));
  const FeatureStore store = store_from_table(full);
  const CohortSplit split = read_split_file(artifact_path("split.json"));
  const json fit_summary = read_json_file(artifact_path("fit_summary.json"));
  fs::create_directories(fs::path(config_.output_dir) / "shap");

  CsvTable dump;
  dump.header = {"id", "split", "image_type", "grouped_phi", "measure"};
  std::array<std::vector<GroupedShap>, kNumMeasures> all_reports;
  std::array<ExplainedModel, kNumMeasures> picked;

  for (int mi = 0; mi < kNumMeasures; ++mi) {
    const Measure measure = static_cast<Measure>(mi);
    picked[mi] = pick_complete_model(fit_summary, measure, config_.shap.model_override);
    const FittedPipeline model =
        load_pipeline(artifact_path("models/" + picked[mi].id + ".model.json"));

    const auto outcome = read_outcome_csv(artifact_path(measure_outcome_file(measure)));
    FeatureTable table = assemble_feature_table(store, PredictorSet::complete(), outcome);
    mean_imputer_transform(table, model.imputer_means);

    const EnsembleView view = model.forest ? EnsembleView::from_forest(*model.forest)
                                           : EnsembleView::from_gbt(*model.gbt);

    std::vector<GroupedShap> reports(table.n);
    parallel_for(table.n, [&](size_t i) {
      const ShapVector shap = treeshap_ensemble(view, &table.values[i * table.p], table.p,
                                                table.ids[i], picked[mi].id);
      GroupedShap grouped;
      grouped.id = table.ids[i];
      grouped.split = split.is_train(table.ids[i]) ? "train" : "test";
      grouped.base_value = shap.base_value;
      grouped.prediction = view.predict(&table.values[i * table.p]);
      grouped.grouped = group_by_image(shap.phi, table.provenance);
      reports[i] = std::move(grouped);
    });

    for (const auto& report : reports) {
      for (const auto& [type, value] : report.grouped) {
        dump.rows.push_back({report.id, report.split, image_type_name(type),
                             format_double(value), measure_name(measure)});
      }
    }

    ordered_json ranking_json;
    ranking_json["measure"] = measure_name(measure);
    ranking_json["model"] = picked[mi].id;
    ranking_json["algorithm"] = algorithm_name(picked[mi].algorithm);
    ranking_json["global_best_algorithm"] = picked[mi].global_best_algorithm;
    ranking_json["ranking_split"] = config_.shap.ranking_split;
    for (const std::string& split_name : {std::string("train"), std::string("test")}) {
      ordered_json rows = ordered_json::array();
      for (const auto& [type, med] : rank_image_types(reports, split_name)) {
        rows.push_back({{"image_type", image_type_name(type)}, {"median_abs_phi", med}});
      }
      ranking_json[split_name] = rows;
    }
    write_json_file(artifact_path("shap/ranking_" + measure_name(measure) + ".json"),
                    ranking_json);
    all_reports[mi] = std::move(reports);
  }
  write_csv(artifact_path("shap/shap_values.csv"), dump);

  // Top/bottom images per type, ranked across the three measures.
  Cohort cohort = read_survey_csv(survey_csv_path(), bundled_asset_schema());
  const std::string manifest_path = config_.inputs.provided() ? config_.inputs.image_manifest
                                                              : artifact_path("manifest.jsonl");
  read_image_manifest(manifest_path, cohort);
  if (fs::exists(artifact_path("manifest_satellite.jsonl"))) {
    read_image_manifest(artifact_path("manifest_satellite.jsonl"), cohort);
  }
  std::map<HouseholdId, const HouseholdRecord*> by_id;
  for (const auto& rec : cohort) by_id[rec.id] = &rec;
  std::map<HouseholdId, size_t> row_of;
  for (size_t i = 0; i < all_reports[0].size(); ++i) row_of[all_reports[0][i].id] = i;

  const auto tb = top_bottom_images(all_reports, config_.shap.top_bottom_n);
  for (int mi = 0; mi < kNumMeasures; ++mi) {
    std::ofstream out(artifact_path("shap/top_bottom_" + measure_name(static_cast<Measure>(mi)) +
                                    ".jsonl"),
                      std::ios::trunc);
    for (const auto& entry : tb) {
      auto emit = [&](const std::vector<HouseholdId>& ids, const char* direction) {
        for (const HouseholdId& id : ids) {
          ordered_json j;
          j["image_type"] = image_type_name(entry.type);
          j["rank_direction"] = direction;
          j["id"] = id;
          const auto* rec = by_id.at(id);
          auto img_it = rec->images.find(entry.type);
          j["image_path"] = (img_it != rec->images.end() && !img_it->second.missing)
                                ? img_it->second.path
                                : "";
          ordered_json phi;
          for (int mj = 0; mj < kNumMeasures; ++mj) {
            phi[measure_name(static_cast<Measure>(mj))] =
                all_reports[mj][row_of.at(id)].grouped.at(entry.type);
          }
          j["grouped_phi"] = phi;
          out << j.dump() << '\n';
        }
      };
      emit(entry.top, "top");
      emit(entry.bottom, "bottom");
    }
  }
}

// --- reduce ---------------------------------------------------------------

void Pipeline::stage_reduce() {
  const FeatureTable full = read_feature_table_csv(artifact_path("features.csv"));
  const FeatureStore store = store_from_table(full);
  const CohortSplit split = read_split_file(artifact_path("split.json"));
  const json fit_summary = read_json_file(artifact_path("fit_summary.json"));
  fs::create_directories(fs::path(config_.output_dir) / "models");

  auto summary_row = [&](Measure measure, const std::string& set_name,
                         const std::string& algo_name) -> json {
    for (const auto& row : fit_summary.at("models")) {
      if (row.at("measure") == measure_name(measure) && row.at("predictor_set") == set_name &&
          row.at("algorithm") == algo_name) {
        return row;
      }
    }
    return json();
  };

  ordered_json summary;
  summary["models"] = ordered_json::array();
  for (int mi = 0; mi < kNumMeasures; ++mi) {
    const Measure measure = static_cast<Measure>(mi);
    const json ranking_json =
        read_json_file(artifact_path("shap/ranking_" + measure_name(measure) + ".json"));
    const std::string split_name = config_.shap.ranking_split;
    std::vector<std::pair<ImageType, double>> ranking;
    for (const auto& row : ranking_json.at(split_name)) {
      const auto type = image_type_from_name(row.at("image_type").get<std::string>());
      if (type) ranking.push_back({*type, row.at("median_abs_phi").get<double>()});
    }
    const PredictorSet reduced = reduced_predictor_set(ranking);
    const auto algo = algorithm_from_name(ranking_json.at("algorithm").get<std::string>());
    if (!algo) throw ValidationError("reduce: ranking file has unknown algorithm");

    const auto outcome = read_outcome_csv(artifact_path(measure_outcome_file(measure)));
    const FeatureTable table = assemble_feature_table(store, reduced, outcome);
    const FeatureTable train = table.subset(split.train_ids);
    const FeatureTable test = table.subset(split.test_ids);

    const std::string id = model_id(measure, "reduced", *algo);
    const uint64_t seed = Rng::derive(config_.seed, "reduce/" + id);
    const FittedPipeline model =
        randomized_search_cv(train, *algo, config_.fit.distributions, config_.fit.n_iter,
                             config_.fit.k_folds, seed, false);
    const Evaluation eval = evaluate(model, test);
    save_pipeline(model, artifact_path("models/" + id + ".model.json"),
                  artifact_path("models/" + id + ".trees.bin"));
    CsvTable predictions;
    predictions.header = {"id", "observed", "predicted"};
    for (size_t i = 0; i < eval.ids.size(); ++i) {
      predictions.rows.push_back(
          {eval.ids[i], format_double(eval.observed[i]), format_double(eval.predicted[i])});
    }
    write_csv(artifact_path("models/" + id + ".predictions.csv"), predictions);

    ordered_json row = evaluation_to_json(measure, "reduced", *algo, eval, model);
    row["reduced_indoor_type"] = image_type_name(*reduced.reduced_indoor);
    row["outdoor_reference"] = summary_row(measure, "outdoor", algorithm_name(*algo));
    row["complete_reference"] = summary_row(measure, "complete", algorithm_name(*algo));
    summary["models"].push_back(row);
  }
  write_json_file(artifact_path("reduce_summary.json"), summary);
}

// --- report ---------------------------------------------------------------

void Pipeline::stage_report() {
  const json exploratory = read_json_file(artifact_path("exploratory.json"));
  const json fit_summary = read_json_file(artifact_path("fit_summary.json"));
  const json reduce_summary = read_json_file(artifact_path("reduce_summary.json"));
  fs::create_directories(fs::path(config_.output_dir) / "plots");

  ordered_json report;
  report["tool_version"] = kPipelineVersion;
  report["config_hash"] = hex64(config_hash());
  report["seed"] = config_.seed;

  ordered_json structural;
  structural["image_types"] = kNumImageTypes;
  structural["split"] = {{"n_train", config_.split.n_train}, {"n_test", config_.split.n_test}};
  structural["k_folds"] = config_.fit.k_folds;
  structural["penultimate_width"] = config_.extractor.spec.penultimate_width();
  structural["complete_feature_width"] =
      config_.extractor.spec.penultimate_width() * kNumImageTypes;
  structural["n_fitted_models"] = fit_summary.at("models").size();
  report["structural"] = structural;

  report["exploratory"] = exploratory;
  report["fit"] = fit_summary;
  if (fs::exists(artifact_path("ots_summary.json"))) {
    report["offtheshelf"] = read_json_file(artifact_path("ots_summary.json"));
  }
  ordered_json rankings;
  for (int mi = 0; mi < kNumMeasures; ++mi) {
    const std::string name = measure_name(static_cast<Measure>(mi));
    rankings[name] = read_json_file(artifact_path("shap/ranking_" + name + ".json"));
  }
  report["shap_rankings"] = rankings;
  report["reduced"] = reduce_summary;
  write_json_file(artifact_path("report.json"), report);

  // Flat metric table.
  CsvTable flat;
  flat.header = {"measure", "predictor_set", "algorithm", "rmse", "pearson", "spearman"};
  auto add_rows = [&](const json& models) {
    for (const auto& row : models) {
      flat.rows.push_back({row.at("measure").get<std::string>(),
                           row.at("predictor_set").get<std::string>(),
                           row.at("algorithm").get<std::string>(),
                           format_double(row.at("rmse").get<double>()),
                           row.at("pearson").is_null()
                               ? ""
                               : format_double(row.at("pearson").get<double>()),
                           row.at("spearman").is_null()
                               ? ""
                               : format_double(row.at("spearman").get<double>())});
    }
  };
  add_rows(fit_summary.at("models"));
  add_rows(reduce_summary.at("models"));
  write_csv(artifact_path("report.csv"), flat);

  // Plots, rendered from the numeric tables.
  const CsvTable hist = read_csv(artifact_path("exploratory_hist.csv"));
  for (int mi = 0; mi < kNumMeasures; ++mi) {
    const std::string name = measure_name(static_cast<Measure>(mi));
    std::vector<double> counts;
    const int measure_col = hist.column("measure");
    const int count_col = hist.column("count");
    for (const auto& row : hist.rows) {
      if (row[measure_col] == name) counts.push_back(std::stod(row[count_col]));
    }
    render_histogram_png(artifact_path("plots/hist_" + name + ".png"), counts);

    // Observed vs predicted scatter of the explained complete model.
    const json ranking = read_json_file(artifact_path("shap/ranking_" + name + ".json"));
    const std::string id = ranking.at("model").get<std::string>();
    const CsvTable pred = read_csv(artifact_path("models/" + id + ".predictions.csv"));
    std::vector<double> observed, predicted;
    for (const auto& row : pred.rows) {
      observed.push_back(std::stod(row[1]));
      predicted.push_back(std::stod(row[2]));
    }
    render_scatter_png(artifact_path("plots/scatter_" + name + ".png"), observed, predicted);

    std::vector<double> medians;
    for (const auto& row : ranking.at(config_.shap.ranking_split)) {
      medians.push_back(row.at("median_abs_phi").get<double>());
    }
    render_histogram_png(artifact_path("plots/shap_rank_" + name + ".png"), medians);
  }
}

// --- exploratory report ---------------------------------------------------

void write_exploratory_report(const SepTable& sep, const std::string& json_path,
                              const std::string& hist_csv_path,
                              const std::string& scatter_csv_path) {
  if (sep.empty()) throw ValidationError("exploratory report: empty SEP table");
  std::array<std::vector<double>, kNumMeasures> values;
  std::vector<HouseholdId> ids;
  for (const auto& [id, m] : sep) {
    ids.push_back(id);
    for (int mi = 0; mi < kNumMeasures; ++mi) values[mi].push_back(m.get(static_cast<Measure>(mi)));
  }

  ordered_json j;
  constexpr int kBins = 20;
  CsvTable hist;
  hist.header = {"measure", "bin", "lower_edge", "upper_edge", "count"};
  for (int mi = 0; mi < kNumMeasures; ++mi) {
    const std::string name = measure_name(static_cast<Measure>(mi));
    const auto& v = values[mi];
    ordered_json stats;
    stats["mean"] = mean(v);
    stats["sd"] = sample_sd(v);
    stats["median"] = median(v);
    stats["iqr"] = percentile(v, 75.0) - percentile(v, 25.0);
    stats["min"] = *std::min_element(v.begin(), v.end());
    stats["max"] = *std::max_element(v.begin(), v.end());
    j["measures"][name] = stats;

    const double lo = stats["min"].get<double>();
    const double hi = stats["max"].get<double>();
    const double width = hi > lo ? (hi - lo) / kBins : 1.0;
    std::vector<int> counts(kBins, 0);
    for (double x : v) {
      int b = static_cast<int>((x - lo) / width);
      ++counts[std::clamp(b, 0, kBins - 1)];
    }
    for (int b = 0; b < kBins; ++b) {
      hist.rows.push_back({name, std::to_string(b), format_double(lo + b * width),
                           format_double(lo + (b + 1) * width), std::to_string(counts[b])});
    }
  }

  ordered_json correlations = ordered_json::array();
  for (int a = 0; a < kNumMeasures; ++a) {
    for (int b = a + 1; b < kNumMeasures; ++b) {
      ordered_json pair;
      pair["a"] = measure_name(static_cast<Measure>(a));
      pair["b"] = measure_name(static_cast<Measure>(b));
      const auto r = pearson(values[a], values[b]);
      const auto rho = spearman(values[a], values[b]);
      pair["pearson"] = r ? ordered_json(*r) : ordered_json(nullptr);
      pair["spearman"] = rho ? ordered_json(*rho) : ordered_json(nullptr);
      correlations.push_back(pair);
    }
  }
  j["correlations"] = correlations;
  write_json_file(json_path, j);
  write_csv(hist_csv_path, hist);

  CsvTable scatter;
  scatter.header = {"id", "assets", "expenditure", "income"};
  for (size_t i = 0; i < ids.size(); ++i) {
    scatter.rows.push_back({ids[i], format_double(values[0][i]), format_double(values[1][i]),
                            format_double(values[2][i])});
  }
  write_csv(scatter_csv_path, scatter);
}

}  // namespace sep
