/*
 * C boundary for an external range-coder implementation.
 *
 * A shared library exporting these symbols can replace the reference coder. It must produce
 * byte-identical payloads (same 16-bit cdf precision, same renormalization and flush) and
 * decode payloads from either implementation. Cdf tables travel flattened: the cumulative
 * table of symbol i is cdf_data[cdf_offsets[i] .. cdf_offsets[i + 1]), first entry 0, last
 * entry 65536. Decoding is session based so a caller can supply the tables of one quadtree
 * step at a time.
 */
#ifndef GLC_NATIVE_CODER_ABI_H
#define GLC_NATIVE_CODER_ABI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define GLC_NATIVE_ABI_VERSION 1u

enum glc_native_status {
    GLC_NATIVE_OK = 0,
    GLC_NATIVE_ERR_SYMBOL = 1,    /* symbol outside its cdf support */
    GLC_NATIVE_ERR_CDF = 2,       /* malformed cdf table */
    GLC_NATIVE_ERR_TRUNCATED = 3, /* payload ended early */
    GLC_NATIVE_ERR_CORRUPT = 4,   /* payload inconsistent with the tables */
    GLC_NATIVE_ERR_CAPACITY = 5   /* output buffer too small */
};

typedef uint32_t (*glc_native_abi_version_fn)(void);

typedef int (*glc_native_range_encode_fn)(const uint32_t* symbols, size_t n, const uint32_t* cdf_data,
                                          const size_t* cdf_offsets, uint8_t* out, size_t out_capacity,
                                          size_t* out_len);

typedef void* (*glc_native_decoder_open_fn)(const uint8_t* payload, size_t len, int* status);

typedef int (*glc_native_decoder_decode_fn)(void* session, const uint32_t* cdf_data, const size_t* cdf_offsets,
                                            size_t n, uint32_t* symbols_out);

typedef void (*glc_native_decoder_close_fn)(void* session);

#ifdef __cplusplus
}
#endif

#endif
