#include "glc/entropy_coder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>
#include <string>

#include <zlib.h>

#include "glc/config.hpp"
#include "glc/errors.hpp"

namespace glc {

namespace {

constexpr std::uint32_t kTopValue = 1u << 24;

}  // namespace

void CdfTable::validate() const {
    if (cum.size() < 2) throw CoderError("malformed cdf: needs at least one symbol");
    if (cum.front() != 0) throw CoderError("malformed cdf: first entry must be 0");
    if (cum.back() != kCdfTotal) throw CoderError("malformed cdf: last entry must be 65536");
    for (std::size_t i = 1; i < cum.size(); ++i)
        if (cum[i] <= cum[i - 1]) throw CoderError("malformed cdf: not strictly increasing");
}

CdfTable quantize_pmf(std::span<const double> pmf) {
    const std::size_t n = pmf.size();
    if (n == 0 || n > kCdfTotal) throw CoderError("pmf must have between 1 and 65536 entries");
    double sum = 0.0;
    for (double p : pmf) {
        if (!std::isfinite(p) || p < 0.0) throw CoderError("pmf entries must be finite and non-negative");
        sum += p;
    }
    if (sum <= 0.0) throw CoderError("pmf has zero mass");

    std::vector<std::int64_t> freq(n);
    std::int64_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        freq[i] = std::max<std::int64_t>(1, std::llround(pmf[i] / sum * kCdfTotal));
        total += freq[i];
    }
    // Settle the rounding residue on the most probable symbols.
    std::int64_t diff = static_cast<std::int64_t>(kCdfTotal) - total;
    while (diff != 0) {
        const auto top = static_cast<std::size_t>(std::max_element(freq.begin(), freq.end()) - freq.begin());
        if (diff > 0) {
            freq[top] += diff;
            diff = 0;
        } else {
            const std::int64_t take = std::min(-diff, freq[top] - 1);
            freq[top] -= take;
            diff += take;
        }
    }

    CdfTable cdf;
    cdf.cum.resize(n + 1);
    cdf.cum[0] = 0;
    for (std::size_t i = 0; i < n; ++i) cdf.cum[i + 1] = cdf.cum[i] + static_cast<std::uint32_t>(freq[i]);
    return cdf;
}

double ideal_codelength_bits(std::span<const std::uint32_t> symbols, std::span<const CdfTable> cdfs) {
    if (symbols.size() != cdfs.size()) throw CoderError("one cdf per symbol required");
    double bits = 0.0;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (symbols[i] >= cdfs[i].num_symbols()) throw CoderError("symbol outside cdf support");
        bits -= std::log2(cdfs[i].probability(symbols[i]));
    }
    return bits;
}

// --- RangeEncoder ----------------------------------------------------------

void RangeEncoder::encode(std::uint32_t symbol, const CdfTable& cdf) {
    if (symbol >= cdf.num_symbols())
        throw CoderError("symbol " + std::to_string(symbol) + " outside cdf support of " +
                         std::to_string(cdf.num_symbols()));
    encode_interval(cdf.cum[symbol], cdf.cum[symbol + 1]);
}

void RangeEncoder::encode_interval(std::uint32_t cum_low, std::uint32_t cum_high) {
    if (finished_) throw CoderError("encoder already finished");
    if (cum_low >= cum_high || cum_high > kCdfTotal) throw CoderError("malformed cdf interval");
    const std::uint64_t r = range_;
    const std::uint64_t lo = (r * cum_low) >> kCdfPrecisionBits;
    const std::uint64_t hi = (r * cum_high) >> kCdfPrecisionBits;
    low_ += lo;
    range_ = static_cast<std::uint32_t>(hi - lo);
    while (range_ < kTopValue) {
        range_ <<= 8;
        shift_low();
    }
}

void RangeEncoder::shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
        const auto carry = static_cast<std::uint8_t>(low_ >> 32);
        std::uint8_t pending = cache_;
        do {
            out_.push_back(static_cast<std::uint8_t>(pending + carry));
            pending = 0xFF;
        } while (--cache_size_ != 0);
        cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
    if (finished_) throw CoderError("encoder already finished");
    for (int i = 0; i < 5; ++i) shift_low();
    finished_ = true;
    return std::move(out_);
}

// --- RangeDecoder ----------------------------------------------------------

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> payload) : payload_(payload) {
    if (payload_.size() < 5) throw TruncatedPayload("range-coded payload shorter than its 5-byte preamble");
    next_byte();  // leading cache byte, always zero for well-formed streams
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
    if (pos_ >= payload_.size()) throw TruncatedPayload("range-coded payload is truncated");
    return payload_[pos_++];
}

std::uint32_t RangeDecoder::decode(const CdfTable& cdf) {
    const std::size_t n = cdf.num_symbols();
    if (n == 0) throw CoderError("malformed cdf: no symbols");
    if (code_ >= range_) throw CoderError("corrupt range-coded payload");
    const std::uint64_t r = range_;
    auto split = [&](std::size_t s) { return static_cast<std::uint32_t>((r * cdf.cum[s]) >> kCdfPrecisionBits); };

    // Largest s with split(s) <= code.
    std::size_t first = 0, last = n;
    while (last - first > 1) {
        const std::size_t mid = first + (last - first) / 2;
        if (split(mid) <= code_) first = mid;
        else last = mid;
    }
    const std::uint32_t lo = split(first);
    const std::uint32_t hi = split(first + 1);
    if (hi <= lo) throw CoderError("malformed cdf: empty interval");
    code_ -= lo;
    range_ = hi - lo;
    while (range_ < kTopValue) {
        code_ = (code_ << 8) | next_byte();
        range_ <<= 8;
    }
    return static_cast<std::uint32_t>(first);
}

std::vector<std::uint8_t> range_encode(std::span<const std::uint32_t> symbols, std::span<const CdfTable> cdfs) {
    if (symbols.size() != cdfs.size()) throw CoderError("one cdf per symbol required");
    RangeEncoder enc;
    for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode(symbols[i], cdfs[i]);
    return enc.finish();
}

std::vector<std::uint32_t> range_decode(std::span<const std::uint8_t> payload, const CdfProvider& provider,
                                        std::size_t n) {
    RangeDecoder dec(payload);
    std::vector<std::uint32_t> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const CdfTable cdf = provider(i, std::span<const std::uint32_t>(out));
        out.push_back(dec.decode(cdf));
    }
    return out;
}

// --- Container -------------------------------------------------------------

namespace {

class ByteWriter {
  public:
    template <typename T>
    void put(T value) {
        using U = std::make_unsigned_t<T>;
        const auto u = static_cast<U>(value);
        for (int shift = 8 * (static_cast<int>(sizeof(T)) - 1); shift >= 0; shift -= 8)
            bytes.push_back(static_cast<std::uint8_t>(u >> shift));
    }
    void append(std::span<const std::uint8_t> data) { bytes.insert(bytes.end(), data.begin(), data.end()); }

    std::vector<std::uint8_t> bytes;
};

class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    template <typename T>
    T get() {
        using U = std::make_unsigned_t<T>;
        require(sizeof(T));
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<U>((u << 8) | data_[pos_++]);
        return static_cast<T>(u);
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        require(n);
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }
    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    void require(std::size_t n) const {
        if (data_.size() - pos_ < n) throw BitstreamError("truncated .glc stream");
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t hyper_section_bytes(std::size_t height, std::size_t width, std::uint32_t hyper_codebook_size) {
    const auto bits = static_cast<std::size_t>(bits_for_alphabet(hyper_codebook_size));
    return (height * width * bits + 7) / 8;
}

std::vector<std::uint8_t> pack_bitstream(const Bitstream& s) {
    const StreamHeader& h = s.header;
    if (h.hyper_codebook_size < 2) throw BitstreamError("hyper codebook size must be >= 2");
    if (h.support_min >= h.support_max) throw BitstreamError("support bounds must satisfy min < max");
    const std::size_t count = static_cast<std::size_t>(h.hyper_height) * h.hyper_width;
    if (s.hyper_indices.size() != count)
        throw BitstreamError("hyper index count " + std::to_string(s.hyper_indices.size()) +
                             " does not match hyper grid " + std::to_string(count));
    if (s.y_payload.size() > std::numeric_limits<std::uint32_t>::max())
        throw BitstreamError("y payload exceeds 32-bit length field");

    ByteWriter w;
    w.append(kStreamMagic);
    w.put(kStreamVersion);
    w.put(h.orig_height);
    w.put(h.orig_width);
    w.put(h.rate_index);
    w.put(h.hyper_height);
    w.put(h.hyper_width);
    w.put(h.hyper_codebook_size);
    w.put(h.support_min);
    w.put(h.support_max);

    const int bits = bits_for_alphabet(h.hyper_codebook_size);
    std::vector<std::uint8_t> section(hyper_section_bytes(h.hyper_height, h.hyper_width, h.hyper_codebook_size), 0);
    std::size_t bitpos = 0;
    for (std::uint32_t index : s.hyper_indices) {
        if (index >= h.hyper_codebook_size) throw BitstreamError("hyper index exceeds codebook size");
        for (int b = bits - 1; b >= 0; --b, ++bitpos)
            if ((index >> b) & 1u) section[bitpos / 8] |= static_cast<std::uint8_t>(0x80u >> (bitpos % 8));
    }
    w.append(section);

    w.put(static_cast<std::uint32_t>(s.y_payload.size()));
    w.append(s.y_payload);
    w.put(s.model_fingerprint);
    w.put(s.symbol_checksum);
    return std::move(w.bytes);
}

Bitstream unpack_bitstream(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto magic = r.take(kStreamMagic.size());
    if (!std::equal(magic.begin(), magic.end(), kStreamMagic.begin())) throw BitstreamError("not a .glc stream (bad magic)");
    const auto version = r.get<std::uint8_t>();
    if (version != kStreamVersion)
        throw UnsupportedVersion("unsupported .glc version " + std::to_string(version) + " (decoder supports " +
                                 std::to_string(kStreamVersion) + ")");

    Bitstream s;
    StreamHeader& h = s.header;
    h.orig_height = r.get<std::uint32_t>();
    h.orig_width = r.get<std::uint32_t>();
    h.rate_index = r.get<std::uint8_t>();
    h.hyper_height = r.get<std::uint16_t>();
    h.hyper_width = r.get<std::uint16_t>();
    h.hyper_codebook_size = r.get<std::uint32_t>();
    h.support_min = r.get<std::int16_t>();
    h.support_max = r.get<std::int16_t>();
    if (h.hyper_codebook_size < 2) throw BitstreamError("hyper codebook size must be >= 2");
    if (h.support_min >= h.support_max) throw BitstreamError("support bounds must satisfy min < max");

    const int bits = bits_for_alphabet(h.hyper_codebook_size);
    const std::size_t count = static_cast<std::size_t>(h.hyper_height) * h.hyper_width;
    const auto section = r.take(hyper_section_bytes(h.hyper_height, h.hyper_width, h.hyper_codebook_size));
    s.hyper_indices.resize(count);
    std::size_t bitpos = 0;
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t index = 0;
        for (int b = 0; b < bits; ++b, ++bitpos)
            index = (index << 1) | ((section[bitpos / 8] >> (7 - bitpos % 8)) & 1u);
        if (index >= h.hyper_codebook_size) throw BitstreamError("hyper index exceeds codebook size");
        s.hyper_indices[i] = index;
    }

    const auto payload_len = r.get<std::uint32_t>();
    const auto payload = r.take(payload_len);
    s.y_payload.assign(payload.begin(), payload.end());
    s.model_fingerprint = r.get<std::uint32_t>();
    s.symbol_checksum = r.get<std::uint32_t>();
    if (r.remaining() != 0) throw BitstreamError("trailing bytes after .glc stream");
    return s;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for very large buffers.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = crc32(crc, bytes.data() + pos, chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace glc
