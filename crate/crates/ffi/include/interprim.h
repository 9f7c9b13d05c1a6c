#ifndef INTERPRIM_H
#define INTERPRIM_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IpStatus {
  IP_STATUS_OK = 0,
  IP_STATUS_NULL_POINTER = 1,
  IP_STATUS_INVALID_ARGUMENT = 2,
  IP_STATUS_SHAPE_MISMATCH = 3,
  IP_STATUS_NON_FINITE_LOSS = 4,
  IP_STATUS_IO = 5,
  IP_STATUS_PARSE = 6,
  IP_STATUS_PANIC = 7,
} IpStatus;

typedef enum IpLossMode {
  IP_LOSS_MODE_SINGLE_SPARSE = 0,
  IP_LOSS_MODE_JOINT_ROWMAX = 1,
  IP_LOSS_MODE_JOINT_FULL = 2,
} IpLossMode;

/**
 * Result of [`ip_extract`]: one spectrum per input table plus the losses.
 */
typedef struct IpExtraction IpExtraction;

/**
 * AND and OR effects of one model.
 */
typedef struct IpSpectrum IpSpectrum;

/**
 * One value table (a model's outputs on every mask).
 */
typedef struct IpTable IpTable;

/**
 * Options for [`ip_extract`]. Obtain defaults from [`ip_extract_options_default`].
 */
typedef struct IpExtractOptions {
  enum IpLossMode mode;
  double alpha;
  size_t iterations;
  /**
   * Values `<= 0` select the default derived from the tables.
   */
  double learning_rate;
  uint64_t seed;
  /**
   * Standard deviation of a Gaussian initialization; `0` starts from zeros.
   */
  double init_sigma;
} IpExtractOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ip_version(void);

/**
 * Message for the most recent failure on this thread. Valid until the next call
 * into the library from the same thread; never null.
 */
const char *ip_last_error(void);

/**
 * Möbius transform of `len = 2^n` values (AND effects of a value table).
 */
enum IpStatus ip_mobius(const double *input, double *output, size_t len);

/**
 * Zeta transform, the inverse of [`ip_mobius`].
 */
enum IpStatus ip_zeta(const double *input, double *output, size_t len);

/**
 * OR effects of an OR component `v_or`.
 */
enum IpStatus ip_or_interactions(const double *input, double *output, size_t len);

/**
 * Copy `len = 2^n` outputs into a new table handle.
 */
enum IpStatus ip_table_new(const char *model_id,
                           const double *values,
                           size_t len,
                           struct IpTable **out);

/**
 * Read a value-table JSON file.
 */
enum IpStatus ip_table_read(const char *path, struct IpTable **out);

void ip_table_free(struct IpTable *table);

/**
 * Number of variables, or 0 for a null handle.
 */
size_t ip_table_n(const struct IpTable *table);

/**
 * Shapley value of every variable; `out` holds `n` doubles.
 */
enum IpStatus ip_shapley(const struct IpTable *table, double *out, size_t len);

/**
 * Plain AND (Harsanyi) spectrum of one table, OR effects all zero.
 */
enum IpStatus ip_harsanyi(const struct IpTable *table, struct IpSpectrum **out);

void ip_spectrum_free(struct IpSpectrum *spectrum);

size_t ip_spectrum_n(const struct IpSpectrum *spectrum);

/**
 * Copy the AND effects (`2^n` values) into `out`.
 */
enum IpStatus ip_spectrum_and(const struct IpSpectrum *spectrum, double *out, size_t len);

/**
 * Copy the OR effects (`2^n` values) into `out`.
 */
enum IpStatus ip_spectrum_or(const struct IpSpectrum *spectrum, double *out, size_t len);

/**
 * Output on mask `bits` rebuilt from every AND and OR effect.
 */
enum IpStatus ip_spectrum_match(const struct IpSpectrum *spectrum, uint32_t bits, double *out);

struct IpExtractOptions ip_extract_options_default(void);

/**
 * Learn the decomposition for `count` tables of equal `n` and extract their spectra.
 * A null `options` uses [`ip_extract_options_default`].
 */
enum IpStatus ip_extract(const struct IpTable *const *tables,
                         size_t count,
                         const struct IpExtractOptions *options,
                         struct IpExtraction **out);

void ip_extraction_free(struct IpExtraction *extraction);

size_t ip_extraction_model_count(const struct IpExtraction *extraction);

/**
 * Borrowed spectrum of model `index`; null when out of range. Do not free it.
 */
const struct IpSpectrum *ip_extraction_spectrum(const struct IpExtraction *extraction,
                                                size_t index);

/**
 * Loss before and after optimization.
 */
enum IpStatus ip_extraction_loss(const struct IpExtraction *extraction,
                                 double *initial,
                                 double *final_);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INTERPRIM_H */
