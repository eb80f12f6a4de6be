#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glc/entropy_coder.hpp"

namespace glc {

enum class CoderKind { Reference, Native };

/// Environment variable that, when set to "reference" or "native", overrides the coder
/// requested on the command line.
inline constexpr const char* kCoderEnv = "GLC_CODER";
/// Path of the shared library implementing native_coder_abi.h.
inline constexpr const char* kNativeLibraryEnv = "GLC_NATIVE_CODER_LIB";
inline constexpr const char* kNativeLibraryDefault = "libglc_native_coder.so";

CoderKind parse_coder_kind(const std::string& name);
std::string to_string(CoderKind kind);
/// Applies the GLC_CODER override, if any.
CoderKind resolve_coder_kind(CoderKind requested);

/// Decodes a payload in chunks; each call receives the tables of the next symbols.
class StepDecoder {
  public:
    virtual ~StepDecoder() = default;
    virtual std::vector<std::uint32_t> decode(std::span<const CdfTable> cdfs) = 0;
};

class SymbolCoder {
  public:
    virtual ~SymbolCoder() = default;
    virtual std::vector<std::uint8_t> encode(std::span<const std::uint32_t> symbols,
                                             std::span<const CdfTable> cdfs) = 0;
    virtual std::unique_ptr<StepDecoder> open(std::span<const std::uint8_t> payload) = 0;
};

/// Throws CoderError when the native library is requested but cannot be loaded.
std::unique_ptr<SymbolCoder> make_symbol_coder(CoderKind kind);

}  // namespace glc
