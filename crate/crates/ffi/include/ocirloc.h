#ifndef OCIRLOC_H
#define OCIRLOC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OcirStatus {
  OCIR_STATUS_OK = 0,
  OCIR_STATUS_NULL_POINTER = 1,
  OCIR_STATUS_INVALID_ARGUMENT = 2,
  OCIR_STATUS_DOMAIN = 3,
  OCIR_STATUS_NUMERICAL = 4,
  OCIR_STATUS_CONFIG = 5,
  OCIR_STATUS_FORMAT = 6,
  OCIR_STATUS_IO = 7,
  OCIR_STATUS_BUFFER_TOO_SMALL = 8,
  OCIR_STATUS_PANIC = 9,
} OcirStatus;

typedef enum OcirDetectorSet {
  OCIR_DETECTOR_SET_ONE_PD = 0,
  OCIR_DETECTOR_SET_TWO_PD = 1,
  OCIR_DETECTOR_SET_ANCHORS = 2,
} OcirDetectorSet;

// Trained network with the input standardization it was fitted with.
typedef struct OcirModel OcirModel;

// Room, detectors and signal parameters of one experiment config.
typedef struct OcirScene OcirScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Scene of a built-in profile (`"fast"` or `"paper"`) with the given seed.
//
// # Safety
// `profile` must be a NUL-terminated string and `out` a valid pointer.
enum OcirStatus ocir_scene_new(const char *profile, uint64_t seed, struct OcirScene **out);

// Scene of a TOML experiment config.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum OcirStatus ocir_scene_from_toml(const char *toml, struct OcirScene **out);

// # Safety
// `scene` must come from a scene constructor and not be used afterwards.
void ocir_scene_free(struct OcirScene *scene);

// Number of ceiling detectors: one-PD, two-PD and anchor layouts in order.
//
// # Safety
// `scene` must be a live handle or null.
size_t ocir_scene_detector_count(const struct OcirScene *scene);

// Impulse response bins of detector `pd` for a transmitter at `(x, y)`.
// Bins are `bin_width` seconds wide; the config's bin width is used.
//
// # Safety
// `scene` must be a live handle, `bins` must hold `capacity` values and
// `len` must be valid.
enum OcirStatus ocir_scene_impulse_response(struct OcirScene *scene,
                                            double x,
                                            double y,
                                            size_t pd,
                                            double *bins,
                                            size_t capacity,
                                            size_t *len,
                                            double *bin_width);

// Fingerprint features of one transmitter location: the sampled received
// waveform of each detector in `set`, concatenated, or one window-averaged
// value per detector when `rate_hz` is 0. The config's pulse is used with
// `energy_j` per pulse. Noise with `noise_psd` (A²/Hz, 0 for none) is drawn
// from `noise_seed`.
//
// # Safety
// `scene` must be a live handle, `out` must hold `capacity` values and
// `len` must be valid.
enum OcirStatus ocir_scene_features(struct OcirScene *scene,
                                    double x,
                                    double y,
                                    enum OcirDetectorSet set,
                                    double rate_hz,
                                    double energy_j,
                                    double noise_psd,
                                    uint64_t noise_seed,
                                    double *out,
                                    size_t capacity,
                                    size_t *len);

// Loads a network checkpoint from a file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum OcirStatus ocir_model_load(const char *path, struct OcirModel **out);

// Loads a network checkpoint from memory.
//
// # Safety
// `data` must point to `len` readable bytes and `out` must be valid.
enum OcirStatus ocir_model_load_bytes(const uint8_t *data, size_t len, struct OcirModel **out);

// # Safety
// `model` must come from a model loader and not be used afterwards.
void ocir_model_free(struct OcirModel *model);

// Feature count the network expects.
//
// # Safety
// `model` must be a live handle or null.
size_t ocir_model_input_len(const struct OcirModel *model);

// Estimated position in meters from raw features; the stored
// standardization is applied first.
//
// # Safety
// `model` must be a live handle, `features` must hold `n` values and
// `xy` must hold two.
enum OcirStatus ocir_model_predict(const struct OcirModel *model,
                                   const double *features,
                                   size_t n,
                                   double *xy);

// Copies the calling thread's last error message, NUL-terminated and
// truncated to `capacity`. Returns the full message length without the
// terminator.
//
// # Safety
// `buf` must hold `capacity` bytes or be null.
size_t ocir_last_error(char *buf, size_t capacity);

// Library version, a static NUL-terminated string.
const char *ocir_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OCIRLOC_H */
