// Command-line front end; links only the extern-C library API.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sep/sep.h"

int main(int argc, char** argv) {
  CLI::App app{"Household SEP prediction pipeline"};
  app.footer("Stages: synth, sep, split, preprocess, train-extractor, extract, fit, explain,\n"
             "reduce, report, all. Exit codes: 0 ok, 1 validation error, 2 missing\n"
             "dependency, 3 numerical failure.");

  std::string stage;
  std::string config_path;
  bool force = false;
  std::uint64_t seed = 0;
  bool seed_set = false;

  std::vector<std::string> stage_choices;
  for (int i = 0; i < sep_stage_count(); ++i) stage_choices.push_back(sep_stage_name(i));
  stage_choices.push_back("all");

  app.add_option("stage", stage, "Pipeline stage to run")
      ->required()
      ->check(CLI::IsMember(stage_choices));
  app.add_option("--config", config_path, "Path to the JSON config file")->required();
  app.add_flag("--force", force, "Re-run the stage even if inputs are unchanged");
  auto* seed_opt = app.add_option("--seed", seed, "Override the config seed");
  app.set_version_flag("--version", std::string(sep_version()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : SEP_ERROR_VALIDATION;
  }
  seed_set = seed_opt->count() > 0;

  sep_pipeline* pipeline = nullptr;
  char* open_error = nullptr;
  sep_status status = sep_pipeline_open(config_path.c_str(), &pipeline, &open_error);
  if (status != SEP_OK) {
    std::fprintf(stderr, "config error:\n%s\n", open_error ? open_error : "unknown error");
    sep_string_free(open_error);
    return status;
  }

  if (seed_set) {
    status = sep_pipeline_set_seed(pipeline, seed);
    if (status != SEP_OK) {
      std::fprintf(stderr, "%s\n", sep_pipeline_last_error(pipeline));
      sep_pipeline_close(pipeline);
      return status;
    }
  }

  status = sep_pipeline_run(pipeline, stage.c_str(), force ? 1 : 0);
  if (status != SEP_OK) {
    std::fprintf(stderr, "stage '%s' failed: %s\n", stage.c_str(),
                 sep_pipeline_last_error(pipeline));
  } else {
    std::printf("stage '%s' completed; artifacts in %s\n", stage.c_str(),
                sep_pipeline_output_dir(pipeline));
  }
  sep_pipeline_close(pipeline);
  return status;
}
