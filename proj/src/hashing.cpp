#include "tenderisk/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <memory>

#include "tenderisk/bytes.hpp"
#include "tenderisk/errors.hpp"

namespace tenderisk {

namespace {

std::string to_hex(const unsigned char* digest, size_t len) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (size_t i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

} // namespace

std::string sha256_hex(const void* data, size_t len) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int digest_len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data, len) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &digest_len) != 1) {
        throw IoError("sha256 digest failed");
    }
    return to_hex(digest.data(), digest_len);
}

std::string sha256_hex(const std::vector<unsigned char>& bytes) {
    return sha256_hex(bytes.data(), bytes.size());
}

std::string sha256_hex(std::string_view s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file_hex(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return sha256_hex(bytes);
}

} // namespace tenderisk
