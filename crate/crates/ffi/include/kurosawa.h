#ifndef KUROSAWA_H
#define KUROSAWA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KurosawaStatus {
  KUROSAWA_STATUS_OK = 0,
  KUROSAWA_STATUS_NULL_ARGUMENT = 1,
  KUROSAWA_STATUS_INVALID_UTF8 = 2,
  KUROSAWA_STATUS_INVALID_JSON = 3,
  /*
   The input was read but failed a domain check.
   */
  KUROSAWA_STATUS_VALIDATION_FAILED = 4,
  KUROSAWA_STATUS_BACKEND_FAILURE = 5,
  KUROSAWA_STATUS_NOT_FOUND = 6,
  KUROSAWA_STATUS_STORAGE_FAILURE = 7,
  KUROSAWA_STATUS_PANIC = 99,
} KurosawaStatus;

/*
 In-memory dataset under construction.
 */
typedef struct KurosawaDataset KurosawaDataset;

/*
 Workbench bound to a data directory.
 */
typedef struct KurosawaWorkbench KurosawaWorkbench;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Description of the calling thread's last failure, or null when the last
 call succeeded. Owned by the library.
 */
const char *kurosawa_last_error(void);

/*
 Releases a string returned by this library. Null is ignored.

 # Safety
 `s` must be null or a pointer obtained from this library and not yet freed.
 */
void kurosawa_string_free(char *s);

/*
 Parses a plain-text screenplay with the default layout. Writes the
 parsed script as JSON.

 # Safety
 `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KurosawaStatus kurosawa_parse_script(const char *text, char **out);

/*
 Encodes a scene given as JSON into tagged text.

 # Safety
 `scene_json` must be a NUL-terminated string; `out` must be writable.
 */
enum KurosawaStatus kurosawa_encode_scene(const char *scene_json, char **out);

/*
 Decodes tagged scene text. Writes `{"scene": ..., "warnings": [...]}`.

 # Safety
 `text` must be a NUL-terminated string; `out` must be writable.
 */
enum KurosawaStatus kurosawa_decode_scene(const char *text, bool strict, char **out);

/*
 Validates an act-annotated plot. The report is written in every case;
 the status is `VALIDATION_FAILED` when it holds errors.

 # Safety
 `annotated` must be a NUL-terminated string; `out` must be writable.
 */
enum KurosawaStatus kurosawa_validate_plot(const char *annotated, char **out);

/*
 Computes the metric report for
 `{"candidates": [...], "references": [...], "logprobs": [[...], ...]?}`.

 # Safety
 `request_json` must be a NUL-terminated string; `out` must be writable.
 */
enum KurosawaStatus kurosawa_metric_report(const char *request_json, char **out);

/*
 Perplexity of `len` natural-log token probabilities.

 # Safety
 `logprobs` must point to `len` readable doubles; `out` must be writable.
 */
enum KurosawaStatus kurosawa_perplexity(const double *logprobs, size_t len, double *out);

/*
 Opens a workbench. `config_toml` may be null for defaults; `data_dir`,
 when non-null, overrides the configured directory. Environment
 variables apply as for the command-line tool.

 # Safety
 String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum KurosawaStatus kurosawa_workbench_open(const char *config_toml,
                                            const char *data_dir,
                                            struct KurosawaWorkbench **out);

/*
 # Safety
 `wb` must be null or a handle from [`kurosawa_workbench_open`] not yet freed.
 */
void kurosawa_workbench_free(struct KurosawaWorkbench *wb);

/*
 Generates and stores a plot. `request_json` has the fields of the HTTP
 request body. Writes the stored item.

 # Safety
 `wb` must be a live handle; `request_json` NUL-terminated; `out` writable.
 */
enum KurosawaStatus kurosawa_workbench_generate_plot(const struct KurosawaWorkbench *wb,
                                                     const char *request_json,
                                                     char **out);

/*
 Generates and stores a scene. Writes the stored item.

 # Safety
 `wb` must be a live handle; `request_json` NUL-terminated; `out` writable.
 */
enum KurosawaStatus kurosawa_workbench_generate_scene(const struct KurosawaWorkbench *wb,
                                                      const char *request_json,
                                                      char **out);

/*
 # Safety
 `wb` must be a live handle; `id` NUL-terminated; `out` writable.
 */
enum KurosawaStatus kurosawa_workbench_get_item(const struct KurosawaWorkbench *wb,
                                                const char *id,
                                                char **out);

/*
 Stores a rating given as `{"item_id", "rater_id"?, "scores"}`.

 # Safety
 `wb` must be a live handle; `request_json` NUL-terminated; `out` writable.
 */
enum KurosawaStatus kurosawa_workbench_add_rating(const struct KurosawaWorkbench *wb,
                                                  const char *request_json,
                                                  char **out);

/*
 Likert summary over stored ratings, optionally restricted to items of
 `kind` (`plot_generation` or `scene_generation`; null for all).

 # Safety
 `wb` must be a live handle; `kind` null or NUL-terminated; `out` writable.
 */
enum KurosawaStatus kurosawa_workbench_rating_summary(const struct KurosawaWorkbench *wb,
                                                      const char *kind,
                                                      char **out);

/*
 Creates an empty in-memory dataset with the default genre vocabulary.

 # Safety
 `name` must be NUL-terminated; `out` must be writable.
 */
enum KurosawaStatus kurosawa_dataset_new(const char *name, struct KurosawaDataset **out);

/*
 # Safety
 `ds` must be null or a handle from [`kurosawa_dataset_new`] not yet freed.
 */
void kurosawa_dataset_free(struct KurosawaDataset *ds);

/*
 Number of records, or 0 for a null handle.

 # Safety
 `ds` must be null or a live handle.
 */
size_t kurosawa_dataset_len(const struct KurosawaDataset *ds);

/*
 Adds one record given as JSON. Writes the warnings array (empty in
 strict mode) when `out_warnings` is non-null.

 # Safety
 `ds` must be a live handle; `record_json` NUL-terminated; `out_warnings`
 null or writable.
 */
enum KurosawaStatus kurosawa_dataset_add_record(struct KurosawaDataset *ds,
                                                const char *record_json,
                                                bool lenient,
                                                char **out_warnings);

/*
 Fine-tune JSONL export for `profile` (O, AS, AL, ASG, ALG or `scene`)
 with the default delimiters.

 # Safety
 `ds` must be a live handle; `profile` NUL-terminated; `out` writable.
 */
enum KurosawaStatus kurosawa_dataset_export(const struct KurosawaDataset *ds,
                                            const char *profile,
                                            char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KUROSAWA_H */
