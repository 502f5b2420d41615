#pragma once

#include <array>
#include <cstdint>
#include <cstddef>

namespace pfncast {

namespace detail {
inline const std::array<uint32_t, 256>& crc32_table() {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}
}  // namespace detail

// CRC-32 (IEEE 802.3, same polynomial as zlib/PNG).
inline uint32_t crc32_update(uint32_t crc, const uint8_t* buf, size_t len) {
    const auto& t = detail::crc32_table();
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < len; ++i) crc = t[(crc ^ buf[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

inline uint32_t crc32(const uint8_t* buf, size_t len) { return crc32_update(0, buf, len); }

inline uint32_t adler32(const uint8_t* buf, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + buf[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

}  // namespace pfncast
