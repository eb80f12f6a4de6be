#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace glc {

// ---------------------------------------------------------------------------
// Quantized cdf tables
// ---------------------------------------------------------------------------

inline constexpr int kCdfPrecisionBits = 16;
inline constexpr std::uint32_t kCdfTotal = 1u << kCdfPrecisionBits;

/// Cumulative frequencies over symbols 0..n-1 at 16-bit precision.
/// Invariant: cum.front() == 0, cum.back() == 65536, strictly increasing.
struct CdfTable {
    std::vector<std::uint32_t> cum;

    std::size_t num_symbols() const { return cum.empty() ? 0 : cum.size() - 1; }
    std::uint32_t frequency(std::size_t symbol) const { return cum[symbol + 1] - cum[symbol]; }
    double probability(std::size_t symbol) const {
        return static_cast<double>(frequency(symbol)) / kCdfTotal;
    }
    /// Throws CoderError when the invariant above does not hold.
    void validate() const;

    bool operator==(const CdfTable&) const = default;
};

/// Quantizes a pmf to a CdfTable. Every symbol keeps at least one frequency unit and the
/// frequencies sum to exactly 2^16. The pmf must be non-negative with at least one entry
/// and at most 2^16 entries; it need not be normalized.
CdfTable quantize_pmf(std::span<const double> pmf);

/// Ideal codelength sum(-log2 p_quantized(s_i)) in bits.
double ideal_codelength_bits(std::span<const std::uint32_t> symbols, std::span<const CdfTable> cdfs);

// ---------------------------------------------------------------------------
// Range coder
//
// 32-bit range, 16-bit probabilities, byte-wise renormalization with carry
// propagation through a cached byte. Interval splits use exact 64-bit products
// (range * cum >> 16), so the coder state is integer-only and bit-exact.
// A stream is one leading zero byte, the renormalization bytes, and four flush
// bytes; the decoder consumes exactly the bytes the encoder produced.
// ---------------------------------------------------------------------------

class RangeEncoder {
  public:
    void encode(std::uint32_t symbol, const CdfTable& cdf);
    /// Low-level entry: encode the interval [cum_low, cum_high) of a 2^16 total.
    void encode_interval(std::uint32_t cum_low, std::uint32_t cum_high);
    std::vector<std::uint8_t> finish();

  private:
    void shift_low();

    std::uint64_t low_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
    std::uint8_t cache_ = 0;
    std::uint64_t cache_size_ = 1;
    std::vector<std::uint8_t> out_;
    bool finished_ = false;
};

class RangeDecoder {
  public:
    /// Throws TruncatedPayload when the payload is shorter than the stream preamble.
    explicit RangeDecoder(std::span<const std::uint8_t> payload);

    std::uint32_t decode(const CdfTable& cdf);
    std::size_t bytes_consumed() const { return pos_; }

  private:
    std::uint8_t next_byte();

    std::span<const std::uint8_t> payload_;
    std::size_t pos_ = 0;
    std::uint32_t code_ = 0;
    std::uint32_t range_ = 0xFFFFFFFFu;
};

std::vector<std::uint8_t> range_encode(std::span<const std::uint32_t> symbols,
                                       std::span<const CdfTable> cdfs);

/// Supplies the cdf for symbol `index` given every symbol decoded before it.
using CdfProvider = std::function<CdfTable(std::size_t index, std::span<const std::uint32_t> decoded)>;

std::vector<std::uint32_t> range_decode(std::span<const std::uint8_t> payload,
                                        const CdfProvider& provider, std::size_t n);

// ---------------------------------------------------------------------------
// .glc container
//
//   "GLC1" | version u8 | orig_height u32 | orig_width u32 | rate_index u8 |
//   hyper_height u16 | hyper_width u16 | hyper_codebook_size u32 |
//   support_min i16 | support_max i16 | hyper indices (MSB-first, ceil(log2 M_h) bits each,
//   zero-padded to a byte) | y_payload_len u32 | y payload |
//   model_fingerprint u32 | symbol_checksum u32
//
// All multi-byte fields are big-endian. The trailing 8 bytes form the header extension.
// ---------------------------------------------------------------------------

inline constexpr std::array<std::uint8_t, 4> kStreamMagic = {'G', 'L', 'C', '1'};
inline constexpr std::uint8_t kStreamVersion = 1;

struct StreamHeader {
    std::uint32_t orig_height = 0;
    std::uint32_t orig_width = 0;
    std::uint8_t rate_index = 0;
    std::uint16_t hyper_height = 0;
    std::uint16_t hyper_width = 0;
    std::uint32_t hyper_codebook_size = 0;
    std::int16_t support_min = -64;
    std::int16_t support_max = 63;

    bool operator==(const StreamHeader&) const = default;
};

struct Bitstream {
    StreamHeader header;
    std::vector<std::uint32_t> hyper_indices;  // row-major, hyper_height * hyper_width
    std::vector<std::uint8_t> y_payload;
    std::uint32_t model_fingerprint = 0;
    std::uint32_t symbol_checksum = 0;

    bool operator==(const Bitstream&) const = default;
};

/// Bytes taken by the fixed-length hyper index section.
std::size_t hyper_section_bytes(std::size_t height, std::size_t width, std::uint32_t hyper_codebook_size);

std::vector<std::uint8_t> pack_bitstream(const Bitstream& stream);
Bitstream unpack_bitstream(std::span<const std::uint8_t> bytes);

/// CRC-32 (zlib polynomial) of a byte range.
std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace glc
