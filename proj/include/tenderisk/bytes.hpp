#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "tenderisk/errors.hpp"

namespace tenderisk {

// Little-endian binary writer/reader for the versioned cache and model
// formats. Doubles round-trip bit-exactly.

class ByteWriter {
public:
    const std::vector<unsigned char>& bytes() const { return buf_; }
    std::vector<unsigned char> take() { return std::move(buf_); }

    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) { raw(&v, 2); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void i32(int32_t v) { raw(&v, 4); }
    void i64(int64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }

    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void raw(const void* p, size_t n) {
        static_assert(std::endian::native == std::endian::little, "little-endian host required");
        const auto* b = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }

private:
    std::vector<unsigned char> buf_;
};

class ByteReader {
public:
    ByteReader(const unsigned char* data, size_t size) : data_(data), size_(size) {}
    explicit ByteReader(const std::vector<unsigned char>& buf) : ByteReader(buf.data(), buf.size()) {}

    uint8_t u8() { return take<uint8_t>(); }
    uint16_t u16() { return take<uint16_t>(); }
    uint32_t u32() { return take<uint32_t>(); }
    uint64_t u64() { return take<uint64_t>(); }
    int32_t i32() { return take<int32_t>(); }
    int64_t i64() { return take<int64_t>(); }
    double f64() { return take<double>(); }

    std::string str() {
        uint32_t n = u32();
        check(n);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }

    void raw(void* out, size_t n) {
        check(n);
        std::memcpy(out, data_ + pos_, n);
        pos_ += n;
    }

    bool at_end() const { return pos_ == size_; }

private:
    template <typename T>
    T take() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }

    void check(size_t n) const {
        if (pos_ + n > size_) throw IoError("truncated binary payload");
    }

    const unsigned char* data_;
    size_t size_;
    size_t pos_ = 0;
};

// File helpers.
void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes);
std::vector<unsigned char> read_file_bytes(const std::string& path);
void write_file_text(const std::string& path, const std::string& text);
std::string read_file_text(const std::string& path);

} // namespace tenderisk
