#include "glc/symbol_coder.hpp"

#include <dlfcn.h>

#include <cstdlib>

#include "glc/errors.hpp"
#include "glc/native_coder_abi.h"

namespace glc {

CoderKind parse_coder_kind(const std::string& name) {
    if (name == "reference") return CoderKind::Reference;
    if (name == "native") return CoderKind::Native;
    throw InvalidArgument("unknown coder '" + name + "' (expected reference or native)");
}

std::string to_string(CoderKind kind) { return kind == CoderKind::Reference ? "reference" : "native"; }

CoderKind resolve_coder_kind(CoderKind requested) {
    const char* env = std::getenv(kCoderEnv);
    if (env == nullptr || *env == '\0') return requested;
    return parse_coder_kind(env);
}

namespace {

// --- Reference -------------------------------------------------------------

class ReferenceStepDecoder : public StepDecoder {
  public:
    explicit ReferenceStepDecoder(std::span<const std::uint8_t> payload) : decoder_(payload) {}

    std::vector<std::uint32_t> decode(std::span<const CdfTable> cdfs) override {
        std::vector<std::uint32_t> out;
        out.reserve(cdfs.size());
        for (const auto& cdf : cdfs) out.push_back(decoder_.decode(cdf));
        return out;
    }

  private:
    RangeDecoder decoder_;
};

class ReferenceCoder : public SymbolCoder {
  public:
    std::vector<std::uint8_t> encode(std::span<const std::uint32_t> symbols,
                                     std::span<const CdfTable> cdfs) override {
        return range_encode(symbols, cdfs);
    }
    std::unique_ptr<StepDecoder> open(std::span<const std::uint8_t> payload) override {
        return std::make_unique<ReferenceStepDecoder>(payload);
    }
};

// --- Native (dynamically loaded) -------------------------------------------

struct NativeApi {
    void* handle = nullptr;
    glc_native_abi_version_fn version = nullptr;
    glc_native_range_encode_fn encode = nullptr;
    glc_native_decoder_open_fn open = nullptr;
    glc_native_decoder_decode_fn decode = nullptr;
    glc_native_decoder_close_fn close = nullptr;
};

void check_status(int status) {
    switch (status) {
        case GLC_NATIVE_OK: return;
        case GLC_NATIVE_ERR_TRUNCATED: throw TruncatedPayload("native coder: payload is truncated");
        case GLC_NATIVE_ERR_SYMBOL: throw CoderError("native coder: symbol outside cdf support");
        case GLC_NATIVE_ERR_CDF: throw CoderError("native coder: malformed cdf");
        case GLC_NATIVE_ERR_CORRUPT: throw CoderError("native coder: corrupt payload");
        default: throw CoderError("native coder: status " + std::to_string(status));
    }
}

const NativeApi& native_api() {
    static const NativeApi api = [] {
        const char* path = std::getenv(kNativeLibraryEnv);
        const std::string lib = path != nullptr && *path != '\0' ? path : kNativeLibraryDefault;
        NativeApi a;
        a.handle = dlopen(lib.c_str(), RTLD_NOW | RTLD_LOCAL);
        if (a.handle == nullptr) return a;
        a.version = reinterpret_cast<glc_native_abi_version_fn>(dlsym(a.handle, "glc_native_abi_version"));
        a.encode = reinterpret_cast<glc_native_range_encode_fn>(dlsym(a.handle, "glc_native_range_encode"));
        a.open = reinterpret_cast<glc_native_decoder_open_fn>(dlsym(a.handle, "glc_native_decoder_open"));
        a.decode = reinterpret_cast<glc_native_decoder_decode_fn>(dlsym(a.handle, "glc_native_decoder_decode"));
        a.close = reinterpret_cast<glc_native_decoder_close_fn>(dlsym(a.handle, "glc_native_decoder_close"));
        return a;
    }();
    if (api.handle == nullptr)
        throw CoderError("native coder requested but its library could not be loaded (set " +
                         std::string(kNativeLibraryEnv) + " or use --coder reference)");
    if (!api.version || !api.encode || !api.open || !api.decode || !api.close)
        throw CoderError("native coder library is missing required symbols");
    if (api.version() != GLC_NATIVE_ABI_VERSION) throw CoderError("native coder library has an incompatible ABI");
    return api;
}

struct FlatCdfs {
    std::vector<std::uint32_t> data;
    std::vector<std::size_t> offsets{0};
};

FlatCdfs flatten(std::span<const CdfTable> cdfs) {
    FlatCdfs f;
    f.offsets.reserve(cdfs.size() + 1);
    for (const auto& cdf : cdfs) {
        f.data.insert(f.data.end(), cdf.cum.begin(), cdf.cum.end());
        f.offsets.push_back(f.data.size());
    }
    return f;
}

class NativeStepDecoder : public StepDecoder {
  public:
    NativeStepDecoder(const NativeApi& api, std::span<const std::uint8_t> payload) : api_(api) {
        int status = GLC_NATIVE_OK;
        session_ = api_.open(payload.data(), payload.size(), &status);
        check_status(status);
        if (session_ == nullptr) throw CoderError("native coder: could not open a decoding session");
    }
    ~NativeStepDecoder() override { api_.close(session_); }
    NativeStepDecoder(const NativeStepDecoder&) = delete;
    NativeStepDecoder& operator=(const NativeStepDecoder&) = delete;

    std::vector<std::uint32_t> decode(std::span<const CdfTable> cdfs) override {
        const auto flat = flatten(cdfs);
        std::vector<std::uint32_t> out(cdfs.size());
        check_status(api_.decode(session_, flat.data.data(), flat.offsets.data(), cdfs.size(), out.data()));
        return out;
    }

  private:
    const NativeApi& api_;
    void* session_ = nullptr;
};

class NativeCoder : public SymbolCoder {
  public:
    NativeCoder() : api_(native_api()) {}

    std::vector<std::uint8_t> encode(std::span<const std::uint32_t> symbols,
                                     std::span<const CdfTable> cdfs) override {
        if (symbols.size() != cdfs.size()) throw CoderError("one cdf per symbol required");
        const auto flat = flatten(cdfs);
        // 16 bits per symbol is the worst case at 16-bit precision, plus the preamble and flush.
        std::vector<std::uint8_t> out(2 * symbols.size() + 16);
        std::size_t len = 0;
        check_status(api_.encode(symbols.data(), symbols.size(), flat.data.data(), flat.offsets.data(), out.data(),
                                 out.size(), &len));
        out.resize(len);
        return out;
    }
    std::unique_ptr<StepDecoder> open(std::span<const std::uint8_t> payload) override {
        return std::make_unique<NativeStepDecoder>(api_, payload);
    }

  private:
    const NativeApi& api_;
};

}  // namespace

std::unique_ptr<SymbolCoder> make_symbol_coder(CoderKind kind) {
    if (kind == CoderKind::Native) return std::make_unique<NativeCoder>();
    return std::make_unique<ReferenceCoder>();
}

}  // namespace glc
