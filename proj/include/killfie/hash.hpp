#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace killfie {

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; a bijective mixer used for seed derivation.
std::uint64_t mix64(std::uint64_t x);

/// Derives a child seed from a parent seed and a label. Parallel units use
/// this so that scheduling order never changes results.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::string& path);

/// Uniform double in [0, 1) from the top 53 bits of a 64-bit draw.
inline double unit_interval(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace killfie
