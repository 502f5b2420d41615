#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfncast/checksum.hpp"

// Dependency-free 8-bit RGBA PNG writer. Pixel data goes into a zlib stream
// of stored (uncompressed) deflate blocks; perfectly valid, just not small.

namespace pfncast {

namespace detail_png {

inline void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>(v & 0xff));
}

inline void put_chunk(std::vector<uint8_t>& out, const char type[4],
                      const std::vector<uint8_t>& payload) {
    put_u32_be(out, static_cast<uint32_t>(payload.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    put_u32_be(out, crc32(out.data() + crc_start, out.size() - crc_start));
}

inline std::vector<uint8_t> zlib_store(const std::vector<uint8_t>& raw) {
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t off = 0;
    do {
        size_t block = std::min<size_t>(65535, raw.size() - off);
        bool final = off + block == raw.size();
        z.push_back(final ? 1 : 0);
        z.push_back(static_cast<uint8_t>(block & 0xff));
        z.push_back(static_cast<uint8_t>((block >> 8) & 0xff));
        z.push_back(static_cast<uint8_t>(~block & 0xff));
        z.push_back(static_cast<uint8_t>((~block >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + static_cast<std::ptrdiff_t>(off),
                 raw.begin() + static_cast<std::ptrdiff_t>(off + block));
        off += block;
    } while (off < raw.size());
    uint32_t a = adler32(raw.data(), raw.size());
    put_u32_be(z, a);
    return z;
}

}  // namespace detail_png

/// rgba: row-major, 4 bytes per pixel.
inline std::vector<uint8_t> encode_png_rgba(uint32_t width, uint32_t height,
                                            const std::vector<uint8_t>& rgba) {
    if (rgba.size() != static_cast<size_t>(width) * height * 4)
        throw std::invalid_argument("encode_png_rgba: buffer size mismatch");
    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

    std::vector<uint8_t> ihdr;
    detail_png::put_u32_be(ihdr, width);
    detail_png::put_u32_be(ihdr, height);
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(6);   // color type RGBA
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    detail_png::put_chunk(out, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve((static_cast<size_t>(width) * 4 + 1) * height);
    for (uint32_t y = 0; y < height; ++y) {
        raw.push_back(0);  // filter type none
        const uint8_t* row = rgba.data() + static_cast<size_t>(y) * width * 4;
        raw.insert(raw.end(), row, row + static_cast<size_t>(width) * 4);
    }
    detail_png::put_chunk(out, "IDAT", detail_png::zlib_store(raw));
    detail_png::put_chunk(out, "IEND", {});
    return out;
}

}  // namespace pfncast
