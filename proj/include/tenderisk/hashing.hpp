#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tenderisk {

/// FNV-1a over arbitrary bytes. Used for schema fingerprints, seed
/// derivation and cheap content identity inside caches.
inline uint64_t fnv1a64_bytes(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64_bytes(s.data(), s.size(), h);
}

/// SHA-256 hex digest of a byte buffer (OpenSSL-backed). Manifests use this
/// for artifact integrity.
std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::vector<unsigned char>& bytes);
std::string sha256_hex(std::string_view s);

/// SHA-256 hex digest of a file's contents.
std::string sha256_file_hex(const std::string& path);

} // namespace tenderisk
