#pragma once

#include <map>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"

namespace sep {

inline constexpr const char* kPipelineVersion = "0.1.0";

struct StageResult {
  std::string name;
  bool skipped = false;  // inputs unchanged, outputs present
  double wall_ms = 0.0;
};

// Stage-oriented orchestrator. Stages are idempotent: a stage re-runs only
// when its recorded input hashes changed or outputs are gone, unless
// forced. One pipeline owns one output directory (lock file).
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  static const std::vector<std::string>& stage_names();

  // Runs one stage (or "all"); throws MissingDependencyError when an input
  // artifact of the stage does not exist yet.
  std::vector<StageResult> run(const std::string& stage, bool force = false);

  const PipelineConfig& config() const { return config_; }
  std::string artifact_path(const std::string& relative) const;

 private:
  struct StagePlan {
    std::vector<std::string> inputs;   // artifact paths read
    std::vector<std::string> outputs;  // artifact paths written
  };

  StageResult run_one(const std::string& stage, bool force);
  StagePlan plan_for(const std::string& stage) const;
  void execute(const std::string& stage);

  void stage_synth();
  void stage_sep();
  void stage_split();
  void stage_preprocess();
  void stage_train_extractor();
  void stage_extract();
  void stage_fit();
  void stage_explain();
  void stage_reduce();
  void stage_report();

  Cohort load_cohort_with_images() const;
  std::string survey_csv_path() const;
  std::string raster_png_path() const;
  std::string raster_georef_path() const;

  uint64_t config_hash() const;
  void record_stage(const std::string& stage, const StagePlan& plan, double wall_ms);
  bool stage_is_current(const std::string& stage, const StagePlan& plan) const;

  PipelineConfig config_;
};

// Exploratory statistics (per-measure summary, correlations, histogram bin
// counts, scatter pairs) written as JSON + CSVs.
void write_exploratory_report(const SepTable& sep, const std::string& json_path,
                              const std::string& hist_csv_path,
                              const std::string& scatter_csv_path);

uint64_t hash_file(const std::string& path);

}  // namespace sep
