#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "curekit/error.hpp"

namespace curekit {

inline std::uint32_t crc32(std::span<const std::byte> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks for large payloads.
    std::size_t offset = 0;
    while (offset < bytes.size()) {
        const std::size_t chunk = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
        crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset), static_cast<uInt>(chunk));
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline std::string hex32(std::uint32_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(8, '0');
    for (int i = 7; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xFu];
        v >>= 4;
    }
    return out;
}

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
    void bytes(std::span<const std::byte> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    void text(std::string_view s) { bytes(std::as_bytes(std::span(s.data(), s.size()))); }

    template <class T>
    void scalar(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        std::byte raw[sizeof(T)];
        std::memcpy(raw, &v, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(std::begin(raw), std::end(raw));
        }
        bytes(raw);
    }

    void u32(std::uint32_t v) { scalar(v); }
    void u64(std::uint64_t v) { scalar(v); }
    void f64(double v) { scalar(v); }

    void f64s(std::span<const double> values) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(std::as_bytes(values));
        } else {
            for (double v : values) f64(v);
        }
    }

    const std::vector<std::byte>& data() const { return buf_; }
    std::vector<std::byte>& data() { return buf_; }

private:
    std::vector<std::byte> buf_;
};

/// Bounds-checked little-endian reader; running past the end is a corruption error.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> data) : data_(data) {}

    std::span<const std::byte> bytes(std::size_t n) {
        if (n > remaining()) {
            throw corruption_error("unexpected end of data (need " + std::to_string(n) + " bytes, have " +
                                   std::to_string(remaining()) + ")");
        }
        auto out = data_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    template <class T>
    T scalar() {
        auto raw = bytes(sizeof(T));
        std::byte tmp[sizeof(T)];
        std::memcpy(tmp, raw.data(), sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(std::begin(tmp), std::end(tmp));
        }
        T v;
        std::memcpy(&v, tmp, sizeof(T));
        return v;
    }

    std::uint32_t u32() { return scalar<std::uint32_t>(); }
    std::uint64_t u64() { return scalar<std::uint64_t>(); }
    double f64() { return scalar<double>(); }

    void f64s(std::span<double> out) {
        if constexpr (std::endian::native == std::endian::little) {
            auto raw = bytes(out.size_bytes());
            std::memcpy(out.data(), raw.data(), raw.size());
        } else {
            for (double& v : out) v = f64();
        }
    }

    std::string text(std::size_t n) {
        auto raw = bytes(n);
        return std::string(reinterpret_cast<const char*>(raw.data()), raw.size());
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::span<const std::byte> data_;
    std::size_t pos_ = 0;
};

}  // namespace curekit
