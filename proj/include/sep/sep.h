#ifndef SEP_SEP_H
#define SEP_SEP_H

/* C interface of the SEP prediction pipeline library. The pipeline object
 * is an opaque handle bound to one config file and one output directory;
 * stages run through sep_pipeline_run. Status codes double as CLI exit
 * codes. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sep_status {
  SEP_OK = 0,
  SEP_ERROR_VALIDATION = 1,         /* bad config or bad input data */
  SEP_ERROR_MISSING_DEPENDENCY = 2, /* an upstream stage artifact is absent */
  SEP_ERROR_NUMERIC = 3             /* numerical or other runtime failure */
} sep_status;

typedef struct sep_pipeline sep_pipeline;

const char* sep_version(void);

/* Stage catalog, in execution order ("all" is accepted by run but not
 * listed). */
int sep_stage_count(void);
const char* sep_stage_name(int index);

/* Parses + validates the config and binds the output directory. On failure
 * returns the status and, when `error` is non-NULL, a malloc'd message the
 * caller frees with sep_string_free. */
sep_status sep_pipeline_open(const char* config_path, sep_pipeline** out, char** error);

/* Overrides the config seed; call before the first run. */
sep_status sep_pipeline_set_seed(sep_pipeline* pipeline, uint64_t seed);

/* Runs one stage by name, or "all". */
sep_status sep_pipeline_run(sep_pipeline* pipeline, const char* stage, int force);

/* Message of the last failed call on this handle; owned by the handle. */
const char* sep_pipeline_last_error(const sep_pipeline* pipeline);

const char* sep_pipeline_output_dir(const sep_pipeline* pipeline);

void sep_pipeline_close(sep_pipeline* pipeline);

void sep_string_free(char* str);

#ifdef __cplusplus
}
#endif

#endif /* SEP_SEP_H */
