#include "sep/sep.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "config.hpp"
#include "pipeline.hpp"

using sep::MissingDependencyError;
using sep::NumericalError;
using sep::ValidationError;

struct sep_pipeline {
  std::unique_ptr<sep::Pipeline> impl;
  sep::PipelineConfig config;
  std::string last_error;
  bool started = false;
};

namespace {

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
sep_status guarded(sep_pipeline* pipeline, Fn&& fn) {
  try {
    fn();
    return SEP_OK;
  } catch (const ValidationError& e) {
    if (pipeline) pipeline->last_error = e.what();
    return SEP_ERROR_VALIDATION;
  } catch (const MissingDependencyError& e) {
    if (pipeline) pipeline->last_error = e.what();
    return SEP_ERROR_MISSING_DEPENDENCY;
  } catch (const std::exception& e) {
    if (pipeline) pipeline->last_error = e.what();
    return SEP_ERROR_NUMERIC;
  }
}

}  // namespace

extern "C" {

const char* sep_version(void) { return sep::kPipelineVersion; }

int sep_stage_count(void) { return static_cast<int>(sep::Pipeline::stage_names().size()); }

const char* sep_stage_name(int index) {
  const auto& names = sep::Pipeline::stage_names();
  if (index < 0 || index >= static_cast<int>(names.size())) return nullptr;
  return names[static_cast<size_t>(index)].c_str();
}

sep_status sep_pipeline_open(const char* config_path, sep_pipeline** out, char** error) {
  if (error) *error = nullptr;
  if (!config_path || !out) {
    if (error) *error = dup_string("config_path and out must be non-NULL");
    return SEP_ERROR_VALIDATION;
  }
  *out = nullptr;
  try {
    auto handle = std::make_unique<sep_pipeline>();
    handle->config = sep::load_config(config_path);
    *out = handle.release();
    return SEP_OK;
  } catch (const ValidationError& e) {
    if (error) *error = dup_string(e.what());
    return SEP_ERROR_VALIDATION;
  } catch (const std::exception& e) {
    if (error) *error = dup_string(e.what());
    return SEP_ERROR_NUMERIC;
  }
}

sep_status sep_pipeline_set_seed(sep_pipeline* pipeline, uint64_t seed) {
  if (!pipeline) return SEP_ERROR_VALIDATION;
  return guarded(pipeline, [&] {
    if (pipeline->started) {
      throw ValidationError("seed override must happen before the first run");
    }
    pipeline->config.seed = seed;
  });
}

sep_status sep_pipeline_run(sep_pipeline* pipeline, const char* stage, int force) {
  if (!pipeline) return SEP_ERROR_VALIDATION;
  if (!stage) {
    pipeline->last_error = "stage must be non-NULL";
    return SEP_ERROR_VALIDATION;
  }
  return guarded(pipeline, [&] {
    if (!pipeline->impl) pipeline->impl = std::make_unique<sep::Pipeline>(pipeline->config);
    pipeline->started = true;
    pipeline->impl->run(stage, force != 0);
  });
}

const char* sep_pipeline_last_error(const sep_pipeline* pipeline) {
  return pipeline ? pipeline->last_error.c_str() : "";
}

const char* sep_pipeline_output_dir(const sep_pipeline* pipeline) {
  return pipeline ? pipeline->config.output_dir.c_str() : "";
}

void sep_pipeline_close(sep_pipeline* pipeline) { delete pipeline; }

void sep_string_free(char* str) { std::free(str); }

}  // extern "C"
