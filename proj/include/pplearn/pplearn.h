#ifndef PPLEARN_H
#define PPLEARN_H

#include <stddef.h>

#if defined(_WIN32)
#define PPLEARN_API __declspec(dllexport)
#else
#define PPLEARN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes. */
typedef enum pplearn_status {
  PPLEARN_OK = 0,
  PPLEARN_ERR_NUMERIC = 1,
  PPLEARN_ERR_VALIDATION = 2,
  PPLEARN_ERR_IO = 3,
  PPLEARN_ERR_INTERNAL = 4
} pplearn_status;

typedef struct pplearn_context pplearn_context;
typedef struct pplearn_dataset pplearn_dataset;
typedef struct pplearn_fit pplearn_fit;

PPLEARN_API const char* pplearn_version(void);

/* A context holds the message of the last failed call made through it. */
PPLEARN_API pplearn_context* pplearn_context_new(void);
PPLEARN_API void pplearn_context_free(pplearn_context* ctx);
PPLEARN_API const char* pplearn_last_error(const pplearn_context* ctx);

/* Strings returned through char** outputs are released with pplearn_string_free. */
PPLEARN_API void pplearn_string_free(char* s);

/* Batch commands driven by JSON configs. Each writes its fully resolved config
   next to its outputs. */
PPLEARN_API pplearn_status pplearn_simulate(pplearn_context* ctx, const char* config_json);
PPLEARN_API pplearn_status pplearn_fit_command(pplearn_context* ctx, const char* config_json);
PPLEARN_API pplearn_status pplearn_evaluate(pplearn_context* ctx, const char* config_json,
                                            char** report_json);
PPLEARN_API pplearn_status pplearn_policy(pplearn_context* ctx, const char* query_json,
                                          char** result_json);
PPLEARN_API pplearn_status pplearn_reproduce_tables(pplearn_context* ctx, const char* config_json,
                                                    char** table_json);

/* Datasets: a directory with trajectories.csv and schema.json. */
PPLEARN_API pplearn_status pplearn_dataset_load(pplearn_context* ctx, const char* dir,
                                                pplearn_dataset** out);
PPLEARN_API void pplearn_dataset_free(pplearn_dataset* data);
PPLEARN_API size_t pplearn_dataset_users(const pplearn_dataset* data);
PPLEARN_API size_t pplearn_dataset_steps(const pplearn_dataset* data);

/* Fits the training segment; config_json holds the fit settings ("method",
   "lambda", "solver") and may be NULL for defaults. */
PPLEARN_API pplearn_status pplearn_fit_dataset(pplearn_context* ctx, const pplearn_dataset* data,
                                               const char* config_json, pplearn_fit** out);
PPLEARN_API pplearn_status pplearn_fit_load(pplearn_context* ctx, const char* fit_json_path,
                                            pplearn_fit** out);
PPLEARN_API void pplearn_fit_free(pplearn_fit* fit);
PPLEARN_API int pplearn_fit_converged(const pplearn_fit* fit);
PPLEARN_API pplearn_status pplearn_fit_to_json(pplearn_context* ctx, const pplearn_fit* fit,
                                               char** out);

/* Recommended action label for a user at a state. means, when not NULL, receives
   num_actions predicted mean outcomes in label order. */
PPLEARN_API pplearn_status pplearn_fit_decide(pplearn_context* ctx, const pplearn_fit* fit,
                                              const char* user_id, const double* covariates,
                                              size_t num_covariates, int t, int* action,
                                              double* means, size_t num_actions);

#ifdef __cplusplus
}
#endif

#endif
