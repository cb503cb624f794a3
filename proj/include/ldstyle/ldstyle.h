/* ldstyle: structure-preserving arbitrary style transfer.
 *
 * Plain C interface over the C++ engine. Every handle is opaque and owned by
 * the caller once returned; release it with the matching *_free function.
 * Functions return an ldst_status; on failure ldst_last_error() holds a
 * message for the calling thread until its next failing call.
 */
#ifndef LDSTYLE_LDSTYLE_H
#define LDSTYLE_LDSTYLE_H

#include <stddef.h>
#include <stdint.h>

#if defined(LDSTYLE_BUILDING)
#define LDST_API __attribute__((visibility("default")))
#else
#define LDST_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ldst_status {
  LDST_OK = 0,
  LDST_ERR_ARGUMENT = 1,
  LDST_ERR_DIMENSION = 2,
  LDST_ERR_DECODE = 3,
  LDST_ERR_IO = 4,
  LDST_ERR_CHECKPOINT_FORMAT = 5,
  LDST_ERR_CORRUPT = 6,
  LDST_ERR_BACKEND_UNAVAILABLE = 7,
  LDST_ERR_DATASET = 8,
  LDST_ERR_DIVERGENCE = 9,
  LDST_ERR_INTERNAL = 10
} ldst_status;

LDST_API const char* ldst_last_error(void);
LDST_API const char* ldst_status_name(ldst_status status);
LDST_API const char* ldst_version(void);
/* 0 = library default. Affects BLAS threading only. */
LDST_API void ldst_set_threads(int threads);

/* ---- byte buffers ------------------------------------------------------ */

typedef struct ldst_buffer ldst_buffer;
LDST_API const unsigned char* ldst_buffer_data(const ldst_buffer* buf);
LDST_API size_t ldst_buffer_size(const ldst_buffer* buf);
LDST_API void ldst_buffer_free(ldst_buffer* buf);

/* ---- images: RGB, float in [0,1], channel-major 3 x H x W --------------- */

typedef struct ldst_image ldst_image;

typedef enum ldst_format { LDST_FORMAT_PNG = 0, LDST_FORMAT_JPEG = 1 } ldst_format;

LDST_API ldst_status ldst_image_load(const char* path, ldst_image** out);
LDST_API ldst_status ldst_image_decode(const unsigned char* bytes, size_t size, ldst_image** out);
/* pixels may be NULL for a black image. */
LDST_API ldst_status ldst_image_create(int height, int width, const float* pixels, ldst_image** out);
LDST_API int ldst_image_height(const ldst_image* img);
LDST_API int ldst_image_width(const ldst_image* img);
LDST_API const float* ldst_image_pixels(const ldst_image* img);
LDST_API ldst_status ldst_image_encode(const ldst_image* img, ldst_format format, ldst_buffer** out);
/* Format from the extension (.jpg/.jpeg -> JPEG, else PNG); atomic write. */
LDST_API ldst_status ldst_image_save(const ldst_image* img, const char* path);
LDST_API void ldst_image_free(ldst_image* img);

/* ---- engine: immutable trained model + frozen encoder ------------------ */

typedef struct ldst_engine ldst_engine;

LDST_API ldst_status ldst_engine_load(const char* checkpoint_path, ldst_engine** out);
/* Untrained engine (random encoder and transfer weights); timing/tests. */
LDST_API ldst_status ldst_engine_random(int encoder_width_divisor, uint64_t seed, ldst_engine** out);
/* Hex digest of the checkpoint bytes; valid for the engine's lifetime. */
LDST_API const char* ldst_engine_hash(const ldst_engine* engine);
LDST_API void ldst_engine_free(ldst_engine* engine);

/* Engines are safe to share between threads for the calls below. */
LDST_API ldst_status ldst_stylize(const ldst_engine* engine, const ldst_image* content,
                                  const ldst_image* style, ldst_image** out);
/* (1 - alpha) * F(c,c) + alpha * F(c,s) fed to the decoder; alpha outside
 * [0,1] is clamped (a warning goes to ldst_last_warning). */
LDST_API ldst_status ldst_stylize_alpha(const ldst_engine* engine, const ldst_image* content,
                                        const ldst_image* style, double alpha, ldst_image** out);
LDST_API ldst_status ldst_stylize_multi(const ldst_engine* engine, const ldst_image* content,
                                        const ldst_image* const* styles, const double* weights,
                                        size_t n_styles, ldst_image** out);
/* masks: grey images at content resolution, 255 = full style. */
LDST_API ldst_status ldst_stylize_spatial(const ldst_engine* engine, const ldst_image* content,
                                          const ldst_image* const* masks,
                                          const ldst_image* const* styles, size_t n_regions,
                                          ldst_image** out);

typedef struct ldst_request {
  const ldst_image* content;
  const ldst_image* const* styles;
  const double* weights; /* NULL = equal weights */
  size_t n_styles;
  double alpha;
  const ldst_image* const* masks; /* may be NULL when n_masks == 0 */
  const size_t* mask_styles;      /* style index per mask */
  size_t n_masks;
} ldst_request;

/* All controls in one call; the building block of the HTTP service. */
LDST_API ldst_status ldst_stylize_request(const ldst_engine* engine, const ldst_request* request,
                                          ldst_image** out);
/* Last non-fatal warning raised on this thread (empty when none). */
LDST_API const char* ldst_last_warning(void);

/* ---- training ---------------------------------------------------------- */

typedef struct ldst_train_config ldst_train_config;

LDST_API ldst_status ldst_train_config_new(ldst_train_config** out);
/* key=value text file; relative paths resolve against the file. */
LDST_API ldst_status ldst_train_config_load(const char* path, ldst_train_config** out);
LDST_API ldst_status ldst_train_config_set(ldst_train_config* cfg, const char* key,
                                           const char* value);
LDST_API ldst_status ldst_train_config_text(const ldst_train_config* cfg, ldst_buffer** out);
LDST_API void ldst_train_config_free(ldst_train_config* cfg);

typedef struct ldst_losses {
  double content;
  double style;
  double lap;
  double depth;
  double total;
} ldst_losses;

typedef void (*ldst_step_fn)(int64_t iteration, const ldst_losses* losses, void* user);
typedef void (*ldst_message_fn)(const char* message, void* user);
/* Return nonzero to stop before the next step. */
typedef int (*ldst_stop_fn)(void* user);

typedef struct ldst_train_hooks {
  ldst_step_fn on_step;
  ldst_message_fn on_warning;
  ldst_stop_fn should_stop;
  void* user;
} ldst_train_hooks;

/* Trains per the config, resuming from `resume` when non-NULL. The final
 * iteration count is stored in *iteration when non-NULL. Divergence yields
 * LDST_ERR_DIVERGENCE with the last good checkpoint left on disk. */
LDST_API ldst_status ldst_train(const ldst_train_config* cfg, const char* resume,
                                const ldst_train_hooks* hooks, int64_t* iteration);

/* Trains one model per (lap, depth) cell under out_dir and evaluates each on
 * the held-out pairs in heldout_dir (content/ and style/ subdirectories,
 * paired in sorted order). *summary receives a CSV summary. */
LDST_API ldst_status ldst_sweep(const ldst_train_config* cfg, const double* lap_values,
                                size_t n_lap, const double* depth_values, size_t n_depth,
                                const char* heldout_dir, const char* out_dir,
                                const ldst_train_hooks* hooks, ldst_buffer** summary);

/* Standalone random encoder weight archive. */
LDST_API ldst_status ldst_write_random_encoder(const char* path, int width_divisor, uint64_t seed);

/* Procedural test corpus: kind 0 = content scenes, 1 = style textures.
 * Writes <kind>_NNNN.png files into dir. */
LDST_API ldst_status ldst_write_synthetic(const char* dir, int kind, int count, int height,
                                          int width, uint64_t seed);

/* ---- evaluation -------------------------------------------------------- */

typedef struct ldst_report ldst_report;

typedef struct ldst_structure_scores {
  double content_ssim;
  double depth_ssim;
  double edge_ssim;
  int n_pairs;
} ldst_structure_scores;

/* pairs_dir holds content/ plus either stylized/ (matched by sorted order)
 * or style/ together with an engine to stylize on the fly. Backends are
 * names: depth "stub" | "monodepth", edges "sobel" | "hed". */
LDST_API ldst_status ldst_evaluate_dir(const char* pairs_dir, const ldst_engine* engine,
                                       const char* depth_backend, const char* edge_backend,
                                       const char* method_name, ldst_report** out);
LDST_API ldst_status ldst_bench(const ldst_engine* engine, const int* resolutions,
                                size_t n_resolutions, int runs, int warmup, uint64_t seed,
                                ldst_report** out);
LDST_API ldst_status ldst_report_structure(const ldst_report* report, ldst_structure_scores* out);
/* as_csv: 0 = aligned text with cited reference rows, 1 = CSV. */
LDST_API ldst_status ldst_report_render(const ldst_report* report, int as_csv, ldst_buffer** out);
/* run,resolution,warmup,seconds for bench reports. */
LDST_API ldst_status ldst_report_raw_log(const ldst_report* report, ldst_buffer** out);
LDST_API void ldst_report_free(ldst_report* report);

#ifdef __cplusplus
}
#endif

#endif
