#ifndef KSPACE_RL_H
#define KSPACE_RL_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KsrlMetric {
  KSRL_METRIC_SSIM = 0,
  KSRL_METRIC_NEG_MSE = 1,
} KsrlMetric;

typedef enum KsrlStatus {
  KSRL_STATUS_OK = 0,
  KSRL_STATUS_NULL_POINTER = 1,
  KSRL_STATUS_INVALID_INPUT = 2,
  KSRL_STATUS_INVALID_CONFIG = 3,
  KSRL_STATUS_TRAINING_DIVERGED = 4,
  KSRL_STATUS_ASSUMPTION_VIOLATED = 5,
  KSRL_STATUS_LOAD = 6,
  KSRL_STATUS_IO = 7,
  KSRL_STATUS_OTHER = 8,
  KSRL_STATUS_PANIC = 9,
} KsrlStatus;

// Opaque dataset handle.
typedef struct KsrlDataset KsrlDataset;

// Opaque sampler policy handle.
typedef struct KsrlPolicy KsrlPolicy;

// Opaque reconstructor handle.
typedef struct KsrlRecon KsrlRecon;

// Headline numbers of an evaluation.
typedef struct KsrlEvalSummary {
  size_t n_images;
  double mean_ssim;
  double std_ssim;
  double mean_psnr;
  double std_psnr;
  uint64_t policy_calls;
  uint64_t recon_calls;
} KsrlEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *ksrl_last_error(void);

// Library version as a static nul-terminated string.
const char *ksrl_version(void);

// Generates `count` phantoms of width `n` with the default shape settings.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum KsrlStatus ksrl_dataset_generate(size_t n,
                                      size_t count,
                                      uint64_t seed,
                                      struct KsrlDataset **out);

// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum KsrlStatus ksrl_dataset_load(const char *path, struct KsrlDataset **out);

// # Safety
// `ds` must be a live handle and `path` a nul-terminated string.
enum KsrlStatus ksrl_dataset_save(const struct KsrlDataset *ds, const char *path);

// Number of images, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t ksrl_dataset_len(const struct KsrlDataset *ds);

// Image width, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
size_t ksrl_dataset_width(const struct KsrlDataset *ds);

// Copies image `index` row-major into `buf`, which holds `len = n*n` values.
//
// # Safety
// `ds` must be a live handle and `buf` valid for `len` writes.
enum KsrlStatus ksrl_dataset_image(const struct KsrlDataset *ds,
                                   size_t index,
                                   double *buf,
                                   size_t len);

// # Safety
// `ds` must be null or a handle not yet freed.
void ksrl_dataset_free(struct KsrlDataset *ds);

// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum KsrlStatus ksrl_recon_load(const char *path, struct KsrlRecon **out);

// Reconstructor with the default architecture and zero residual, so it
// returns the zero-filled image.
//
// # Safety
// `out` must be writable.
enum KsrlStatus ksrl_recon_zero(size_t n, struct KsrlRecon **out);

// # Safety
// `r` must be null or a handle not yet freed.
void ksrl_recon_free(struct KsrlRecon *r);

// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum KsrlStatus ksrl_policy_load(const char *path, struct KsrlPolicy **out);

// # Safety
// `p` must be null or a handle not yet freed.
void ksrl_policy_free(struct KsrlPolicy *p);

// Evaluates on the dataset's held-out split (test, else val, else train)
// in the sparse environment with acceleration `accel` and the base initial
// block. A null `policy` samples uniformly at random.
//
// # Safety
// `ds` and `recon` must be live handles, `policy` null or live, `out`
// writable.
enum KsrlStatus ksrl_evaluate(const struct KsrlDataset *ds,
                              const struct KsrlPolicy *policy,
                              const struct KsrlRecon *recon,
                              double accel,
                              uint64_t seed,
                              struct KsrlEvalSummary *out);

// Similarity of `xhat` to `x` (both `n*n`, row-major) with default settings
// for `metric`.
//
// # Safety
// `xhat` and `x` must be valid for `n*n` reads and `out` writable.
enum KsrlStatus ksrl_similarity(const double *xhat,
                                const double *x,
                                size_t n,
                                enum KsrlMetric metric,
                                double *out);

// Unitary 2-D DFT (natural frequency order) of a real `n*n` image into real and
// imaginary buffers.
//
// # Safety
// `img` must be valid for `n*n` reads, `re` and `im` for `n*n` writes.
enum KsrlStatus ksrl_dft2(const double *img, size_t n, double *re, double *im);

// Inverse of [`ksrl_dft2`], complex to complex, in place on `re` and `im`.
//
// # Safety
// `re` and `im` must be valid for `n*n` reads and writes.
enum KsrlStatus ksrl_idft2(double *re, double *im, size_t n);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KSPACE_RL_H */
