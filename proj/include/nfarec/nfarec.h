#ifndef NFAREC_H
#define NFAREC_H

/* C interface to the recommender core. All functions return a status code;
 * outputs go through pointer arguments. Strings returned through char**
 * are heap-allocated and must be released with nfa_string_free. On any
 * non-zero status, nfa_last_error() describes the failure for the calling
 * thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define NFA_API __declspec(dllexport)
#else
#define NFA_API __attribute__((visibility("default")))
#endif

typedef enum nfa_status {
    NFA_OK = 0,
    NFA_ERR_USAGE = 1,
    NFA_ERR_SHAPE = 10,
    NFA_ERR_DOMAIN = 11,
    NFA_ERR_INDEX = 12,
    NFA_ERR_NUMERIC = 13,
    NFA_ERR_IO = 20,
    NFA_ERR_SCHEMA = 21,
    NFA_ERR_CONFIG = 22,
    NFA_ERR_EMPTY = 23,
    NFA_ERR_PROVENANCE = 30,
    NFA_ERR_DIVERGED = 31,
} nfa_status;

typedef struct nfa_config nfa_config;
typedef struct nfa_dataset nfa_dataset;
typedef struct nfa_model nfa_model;

/* thread-local message for the most recent failure; owned by the library */
NFA_API const char* nfa_last_error(void);
NFA_API void nfa_string_free(char* s);

/* -- configuration ------------------------------------------------------- */

NFA_API nfa_status nfa_config_create(nfa_config** out);
NFA_API nfa_status nfa_config_load(const char* path, nfa_config** out);
NFA_API nfa_status nfa_config_set(nfa_config* cfg, const char* key, const char* value);
NFA_API nfa_status nfa_config_get(const nfa_config* cfg, const char* key, char** out_value);
NFA_API nfa_status nfa_config_preset(nfa_config* cfg, const char* preset);
NFA_API nfa_status nfa_config_dump(const nfa_config* cfg, char** out_text);
NFA_API void nfa_config_free(nfa_config* cfg);

/* -- data pipeline -------------------------------------------------------- */

/* Parses a raw interaction file, filters, splits and precomputes the graph
 * structures, writing a dataset bundle directory. out_stats (optional)
 * receives a human-readable statistics block. */
NFA_API nfa_status nfa_prepare(const nfa_config* cfg, const char* raw_path, const char* bundle_dir,
                               char** out_stats);

NFA_API nfa_status nfa_dataset_open(const char* bundle_dir, nfa_dataset** out);
NFA_API void nfa_dataset_free(nfa_dataset* ds);

/* -- training and models --------------------------------------------------- */

/* Trains on the bundle's training split. Writes the best checkpoint to
 * checkpoint_path and, when out_log is non-null, the per-epoch metric log
 * (tab-separated lines). Returns NFA_ERR_DIVERGED if the loss left the
 * finite range; the checkpoint then holds the last finite state. */
NFA_API nfa_status nfa_train(const nfa_config* cfg, const nfa_dataset* ds,
                             const char* checkpoint_path, char** out_log);

NFA_API nfa_status nfa_model_open(const char* checkpoint_path, nfa_model** out);
NFA_API void nfa_model_free(nfa_model* model);

/* -- evaluation, ablation, prediction, export ------------------------------ */

/* split is "validation" or "test". Fails with NFA_ERR_PROVENANCE when the
 * model was trained on a different dataset. out_report receives the metric
 * table; out_machine (optional) the key<TAB>value form. */
NFA_API nfa_status nfa_evaluate(const nfa_model* model, const nfa_dataset* ds, const char* split,
                                int exclude_train_items, char** out_report, char** out_machine);

/* Retrains the component ablations and the correlation-order sweep, then
 * evaluates each variant on the test split. */
NFA_API nfa_status nfa_ablate(const nfa_config* cfg, const nfa_dataset* ds, char** out_table);

/* user_ids: array of n ids. out_text receives tab-separated lines
 * "user<TAB>item<TAB>score", k lines per known user; unknown users are
 * reported on stderr-style lines "unknown<TAB>id". */
NFA_API nfa_status nfa_predict(const nfa_model* model, const nfa_dataset* ds,
                               const char* const* user_ids, size_t n, size_t k,
                               int exclude_train_items, char** out_text);

NFA_API nfa_status nfa_export(const nfa_model* model, const nfa_dataset* ds, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* NFAREC_H */
