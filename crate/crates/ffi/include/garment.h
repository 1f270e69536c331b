#ifndef GARMENT_H
#define GARMENT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GarmentStatus {
  GARMENT_STATUS_OK = 0,
  GARMENT_STATUS_INVALID_ARGUMENT = 1,
  GARMENT_STATUS_NULL_POINTER = 2,
  GARMENT_STATUS_DIMENSION_MISMATCH = 3,
  GARMENT_STATUS_OPEN_CONTOUR = 4,
  GARMENT_STATUS_UNKNOWN_COLOR = 5,
  GARMENT_STATUS_UNKNOWN_CLUSTER = 6,
  GARMENT_STATUS_IMAGE_DECODE = 7,
  GARMENT_STATUS_IO = 8,
  GARMENT_STATUS_JSON = 9,
  GARMENT_STATUS_UNPROCESSABLE = 10,
  GARMENT_STATUS_PANIC = 11,
} GarmentStatus;

/*
 Opaque design document.
 */
typedef struct GarmentDocument GarmentDocument;

/*
 Opaque RGB image.
 */
typedef struct GarmentImage GarmentImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. Valid until the
 next call into the library on the same thread.
 */
const char *garment_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *garment_version(void);

/*
 Parses and validates a design document from NUL-terminated JSON.

 # Safety
 `json` must be a valid C string and `out` a valid pointer.
 */
enum GarmentStatus garment_document_from_json(const char *json, struct GarmentDocument **out);

/*
 Serializes a document to JSON; free the result with `garment_string_free`.

 # Safety
 `doc` must come from this library and `out` must be a valid pointer.
 */
enum GarmentStatus garment_document_to_json(const struct GarmentDocument *doc, char **out);

/*
 Replaces color `from` by `to` in the texture layer and color points.

 # Safety
 `doc` must come from this library; `from` and `to` point to 3 bytes;
 `replaced` may be NULL.
 */
enum GarmentStatus garment_document_recolor(struct GarmentDocument *doc,
                                            const uint8_t *from,
                                            const uint8_t *to,
                                            size_t *replaced);

/*
 # Safety
 `doc` must come from this library or be NULL.
 */
void garment_document_free(struct GarmentDocument *doc);

/*
 Synthesizes the shaded garment of a document with default settings.

 # Safety
 `doc` must come from this library and `out` must be a valid pointer.
 */
enum GarmentStatus garment_synthesize(const struct GarmentDocument *doc, struct GarmentImage **out);

/*
 Extracts a sparse-mode design document from a photo.

 # Safety
 `img` must come from this library and `out` must be a valid pointer.
 */
enum GarmentStatus garment_extract(const struct GarmentImage *img, struct GarmentDocument **out);

/*
 Expands a texture patch to `width` x `height`.

 # Safety
 `patch` must come from this library and `out` must be a valid pointer.
 */
enum GarmentStatus garment_expand_texture(const struct GarmentImage *patch,
                                          size_t width,
                                          size_t height,
                                          uint64_t seed,
                                          struct GarmentImage **out);

/*
 Decodes a PNG or JPEG buffer.

 # Safety
 `data` must point to `len` readable bytes and `out` must be valid.
 */
enum GarmentStatus garment_image_decode(const uint8_t *data, size_t len, struct GarmentImage **out);

/*
 Builds an image from interleaved 8-bit RGB rows.

 # Safety
 `rgb` must point to `width * height * 3` readable bytes.
 */
enum GarmentStatus garment_image_from_rgb8(const uint8_t *rgb,
                                           size_t width,
                                           size_t height,
                                           struct GarmentImage **out);

/*
 # Safety
 `img` must come from this library.
 */
size_t garment_image_width(const struct GarmentImage *img);

/*
 # Safety
 `img` must come from this library.
 */
size_t garment_image_height(const struct GarmentImage *img);

/*
 Copies the pixels as interleaved 8-bit RGB into `buf`, which must hold
 `width * height * 3` bytes.

 # Safety
 `img` must come from this library and `buf` must hold `len` bytes.
 */
enum GarmentStatus garment_image_copy_rgb8(const struct GarmentImage *img,
                                           uint8_t *buf,
                                           size_t len);

/*
 Encodes an image as PNG; free the buffer with `garment_bytes_free`.

 # Safety
 `img` must come from this library; `data` and `len` must be valid.
 */
enum GarmentStatus garment_image_encode_png(const struct GarmentImage *img,
                                            uint8_t **data,
                                            size_t *len);

/*
 # Safety
 `img` must come from this library or be NULL.
 */
void garment_image_free(struct GarmentImage *img);

/*
 # Safety
 `s` must come from this library or be NULL.
 */
void garment_string_free(char *s);

/*
 # Safety
 `data` and `len` must come from `garment_image_encode_png`.
 */
void garment_bytes_free(uint8_t *data, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GARMENT_H */
