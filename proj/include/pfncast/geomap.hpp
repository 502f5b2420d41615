#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfncast/checksum.hpp"
#include "pfncast/dataset.hpp"
#include "pfncast/png.hpp"
#include "pfncast/preprocess.hpp"
#include "pfncast/rng.hpp"
#include "pfncast/tensor.hpp"

// Per-pixel probability rasters: a feature-plane grid goes through the same
// fitted preprocessing and predictor as tabular rows, masked pixels stay
// nodata, and the result renders as a green-to-yellow heatmap.

namespace pfncast {

struct GridFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GeoRef {
    double origin_x = 0, origin_y = 0;
    double pixel_size_x = 1, pixel_size_y = 1;
};

struct PixelGrid {
    uint32_t width = 0, height = 0;
    std::vector<std::string> feature_names;
    std::vector<float> planes;       // n_features * width * height, plane-major
    std::vector<uint8_t> nodata;     // bit per pixel, LSB-first; 1 = nodata
    std::vector<uint32_t> block_ids; // optional, one per pixel
    GeoRef georef;                   // carried through untouched

    uint32_t n_features() const { return static_cast<uint32_t>(feature_names.size()); }
    size_t n_pixels() const { return static_cast<size_t>(width) * height; }
    bool has_blocks() const { return !block_ids.empty(); }

    bool is_nodata(size_t pixel) const {
        return (nodata[pixel >> 3] >> (pixel & 7)) & 1;
    }
    void set_nodata(size_t pixel, bool v) {
        if (v)
            nodata[pixel >> 3] |= static_cast<uint8_t>(1u << (pixel & 7));
        else
            nodata[pixel >> 3] &= static_cast<uint8_t>(~(1u << (pixel & 7)));
    }
    float plane_at(uint32_t feature, size_t pixel) const {
        return planes[static_cast<size_t>(feature) * n_pixels() + pixel];
    }
};

struct ProbabilityRaster {
    uint32_t width = 0, height = 0;
    std::vector<double> p;        // probability per pixel; meaningless when nodata
    std::vector<uint8_t> nodata;  // same bitmask layout as the grid

    bool is_nodata(size_t pixel) const { return (nodata[pixel >> 3] >> (pixel & 7)) & 1; }
};

// ---------------------------------------------------------------------------
// Grid file: magic "PXGR", u32 LE version, width, height, n_features,
// 4 x f64 georef, length-prefixed feature names, nodata bitmask, f32 planes,
// optional block-id plane, trailing CRC-32 of everything before it.
// ---------------------------------------------------------------------------

namespace detail_grid {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::vector<uint8_t>& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    const uint8_t* p;
    size_t size;
    size_t off = 0;

    void need(size_t n) const {
        if (off + n > size) throw GridFormatError("grid file truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + static_cast<size_t>(i)]) << (8 * i);
        off += 4;
        return v;
    }
    double f64() {
        need(8);
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[off + static_cast<size_t>(i)]) << (8 * i);
        off += 8;
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    float f32() {
        uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    std::string str(uint32_t len) {
        need(len);
        std::string s(reinterpret_cast<const char*>(p + off), len);
        off += len;
        return s;
    }
};

}  // namespace detail_grid

inline std::vector<uint8_t> serialize_grid(const PixelGrid& g) {
    if (g.planes.size() != g.n_pixels() * g.n_features())
        throw std::invalid_argument("serialize_grid: plane size mismatch");
    std::vector<uint8_t> out = {'P', 'X', 'G', 'R'};
    detail_grid::put_u32(out, 1);
    detail_grid::put_u32(out, g.width);
    detail_grid::put_u32(out, g.height);
    detail_grid::put_u32(out, g.n_features());
    detail_grid::put_f64(out, g.georef.origin_x);
    detail_grid::put_f64(out, g.georef.origin_y);
    detail_grid::put_f64(out, g.georef.pixel_size_x);
    detail_grid::put_f64(out, g.georef.pixel_size_y);
    for (const auto& name : g.feature_names) {
        detail_grid::put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
    }
    out.insert(out.end(), g.nodata.begin(), g.nodata.end());
    for (float f : g.planes) {
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail_grid::put_u32(out, bits);
    }
    out.push_back(g.has_blocks() ? 1 : 0);
    if (g.has_blocks())
        for (uint32_t b : g.block_ids) detail_grid::put_u32(out, b);
    detail_grid::put_u32(out, crc32(out.data(), out.size()));
    return out;
}

inline PixelGrid deserialize_grid(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), "PXGR", 4) != 0)
        throw GridFormatError("bad grid magic");
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
        stored |= static_cast<uint32_t>(bytes[bytes.size() - 4 + static_cast<size_t>(i)]) << (8 * i);
    if (crc32(bytes.data(), bytes.size() - 4) != stored)
        throw GridFormatError("grid crc mismatch (file corrupted)");

    detail_grid::Reader r{bytes.data(), bytes.size() - 4, 4};
    uint32_t version = r.u32();
    if (version != 1) throw GridFormatError("unsupported grid version " + std::to_string(version));
    PixelGrid g;
    g.width = r.u32();
    g.height = r.u32();
    uint32_t nf = r.u32();
    if (g.width == 0 || g.height == 0 || g.n_pixels() > (1u << 26) || nf > 4096)
        throw GridFormatError("implausible grid dimensions");
    g.georef.origin_x = r.f64();
    g.georef.origin_y = r.f64();
    g.georef.pixel_size_x = r.f64();
    g.georef.pixel_size_y = r.f64();
    for (uint32_t i = 0; i < nf; ++i) g.feature_names.push_back(r.str(r.u32()));
    size_t mask_bytes = (g.n_pixels() + 7) / 8;
    r.need(mask_bytes);
    g.nodata.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.off),
                    bytes.begin() + static_cast<std::ptrdiff_t>(r.off + mask_bytes));
    r.off += mask_bytes;
    g.planes.resize(g.n_pixels() * nf);
    for (float& f : g.planes) f = r.f32();
    r.need(1);
    uint8_t has_blocks = bytes[r.off++];
    if (has_blocks) {
        g.block_ids.resize(g.n_pixels());
        for (uint32_t& b : g.block_ids) b = r.u32();
    }
    if (r.off != r.size) throw GridFormatError("grid file has trailing bytes");
    return g;
}

// ---------------------------------------------------------------------------
// Prediction and rendering
// ---------------------------------------------------------------------------

/// A fitted probability model over raw feature rows. The closure owns
/// whatever preprocessing the model was trained with, so grid pixels go
/// through the identical transform path as tabular rows.
struct ProbPredictor {
    int n_features = 0;
    std::function<std::vector<double>(const Tensor& raw_rows)> predict;
};

inline ProbabilityRaster predict_grid(const ProbPredictor& predictor, const PixelGrid& grid,
                                      int64_t batch_pixels = 4096) {
    if (static_cast<int>(grid.n_features()) != predictor.n_features)
        throw std::invalid_argument("predict_grid: predictor expects " +
                                    std::to_string(predictor.n_features) + " features, grid has " +
                                    std::to_string(grid.n_features()));
    ProbabilityRaster raster;
    raster.width = grid.width;
    raster.height = grid.height;
    raster.nodata = grid.nodata;
    raster.p.assign(grid.n_pixels(), 0.0);

    std::vector<size_t> pending;
    pending.reserve(static_cast<size_t>(batch_pixels));
    auto flush = [&] {
        if (pending.empty()) return;
        Tensor rows = Tensor::zeros({static_cast<int64_t>(pending.size()),
                                     static_cast<int64_t>(grid.n_features())});
        for (size_t i = 0; i < pending.size(); ++i)
            for (uint32_t f = 0; f < grid.n_features(); ++f)
                rows.at(static_cast<int64_t>(i), f) =
                    static_cast<double>(grid.plane_at(f, pending[i]));
        std::vector<double> proba = predictor.predict(rows);
        if (proba.size() != pending.size())
            throw std::runtime_error("predict_grid: predictor returned wrong row count");
        for (size_t i = 0; i < pending.size(); ++i) raster.p[pending[i]] = proba[i];
        pending.clear();
    };

    for (size_t px = 0; px < grid.n_pixels(); ++px) {
        if (grid.is_nodata(px)) continue;
        pending.push_back(px);
        if (static_cast<int64_t>(pending.size()) >= batch_pixels) flush();
    }
    flush();
    return raster;
}

struct Colormap {
    uint8_t lo[3] = {0, 128, 0};    // green at p=0
    uint8_t hi[3] = {255, 255, 0};  // yellow at p=1
};

/// Linear RGB ramp, rounding half-up; nodata pixels are fully transparent.
inline std::vector<uint8_t> render_png(const ProbabilityRaster& raster,
                                       const Colormap& cmap = {}) {
    std::vector<uint8_t> rgba(raster.p.size() * 4, 0);
    for (size_t px = 0; px < raster.p.size(); ++px) {
        if (raster.is_nodata(px)) continue;  // alpha stays 0
        double p = std::min(std::max(raster.p[px], 0.0), 1.0);
        for (int c = 0; c < 3; ++c) {
            double v = static_cast<double>(cmap.lo[c]) +
                       p * (static_cast<double>(cmap.hi[c]) - static_cast<double>(cmap.lo[c]));
            rgba[px * 4 + static_cast<size_t>(c)] = static_cast<uint8_t>(std::floor(v + 0.5));
        }
        rgba[px * 4 + 3] = 255;
    }
    return encode_png_rgba(raster.width, raster.height, rgba);
}

struct BlockAggregate {
    uint32_t block_id = 0;
    double mean_probability = 0;
    uint64_t n_pixels = 0;
};

/// Mean probability over unmasked pixels per block; empty blocks omitted.
inline std::vector<BlockAggregate> aggregate_blocks(const ProbabilityRaster& raster,
                                                    const std::vector<uint32_t>& block_ids) {
    if (block_ids.size() != raster.p.size())
        throw std::invalid_argument("aggregate_blocks: block id count mismatch");
    std::map<uint32_t, std::pair<double, uint64_t>> acc;
    for (size_t px = 0; px < raster.p.size(); ++px) {
        if (raster.is_nodata(px)) continue;
        auto& slot = acc[block_ids[px]];
        slot.first += raster.p[px];
        slot.second += 1;
    }
    std::vector<BlockAggregate> out;
    out.reserve(acc.size());
    for (const auto& [id, sums] : acc)
        out.push_back({id, sums.first / static_cast<double>(sums.second), sums.second});
    return out;
}

inline std::string block_aggregate_csv(const std::vector<BlockAggregate>& blocks) {
    std::string out = "block_id,mean_probability,n_pixels\n";
    char buf[96];
    for (const auto& b : blocks) {
        int len = std::snprintf(buf, sizeof(buf), "%u,%.6g,%llu\n", b.block_id,
                                b.mean_probability,
                                static_cast<unsigned long long>(b.n_pixels));
        out.append(buf, static_cast<size_t>(len));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Demo grid synthesis
// ---------------------------------------------------------------------------

/// Builds a rectangular demo field from a tabular dataset: a tiling of
/// blocks, each seeded from one dataset row with smooth per-pixel jitter,
/// plus a nodata border. Feature names carry over from the dataset.
inline PixelGrid make_demo_grid(const TabularDataset& ds, uint32_t width, uint32_t height,
                                int n_blocks, uint64_t seed) {
    if (ds.n_rows() < 1) throw std::invalid_argument("make_demo_grid: empty dataset");
    if (n_blocks < 1) throw std::invalid_argument("make_demo_grid: n_blocks must be >= 1");
    Rng rng(mix_seed(seed, 0x9e0deedULL));

    PixelGrid g;
    g.width = width;
    g.height = height;
    g.feature_names = ds.feature_names;
    g.georef = {500000.0, 6200000.0, 10.0, -10.0};
    g.planes.assign(g.n_pixels() * g.n_features(), 0.0f);
    g.nodata.assign((g.n_pixels() + 7) / 8, 0);
    g.block_ids.assign(g.n_pixels(), 0);

    // column medians fill missing entries; columns scales drive jitter
    const int64_t f = ds.n_features();
    std::vector<double> fill(static_cast<size_t>(f), 0.0), scale(static_cast<size_t>(f), 1.0);
    for (int64_t j = 0; j < f; ++j) {
        std::vector<double> vals;
        for (int64_t i = 0; i < ds.n_rows(); ++i)
            if (!std::isnan(ds.x.at(i, j))) vals.push_back(ds.x.at(i, j));
        if (vals.empty()) continue;
        std::sort(vals.begin(), vals.end());
        fill[static_cast<size_t>(j)] = vals[vals.size() / 2];
        double mean = 0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double var = 0;
        for (double v : vals) var += (v - mean) * (v - mean);
        scale[static_cast<size_t>(j)] = std::sqrt(var / static_cast<double>(vals.size()));
    }

    // block tiling: ceil(sqrt) columns, nodata margin of one pixel
    int cols = 1;
    while (cols * cols < n_blocks) ++cols;
    int rows = (n_blocks + cols - 1) / cols;
    const uint32_t cell_w = std::max(1u, width / static_cast<uint32_t>(cols));
    const uint32_t cell_h = std::max(1u, height / static_cast<uint32_t>(rows));

    std::vector<int64_t> source_row(static_cast<size_t>(n_blocks));
    for (auto& s : source_row) s = rng.uniform_int(0, ds.n_rows() - 1);

    for (uint32_t y = 0; y < height; ++y) {
        for (uint32_t x = 0; x < width; ++x) {
            size_t px = static_cast<size_t>(y) * width + x;
            int bx = static_cast<int>(x / cell_w);
            int by = static_cast<int>(y / cell_h);
            int block = by * cols + bx;
            bool margin = (x % cell_w == 0) || (y % cell_h == 0) || x + 1 == width ||
                          y + 1 == height;
            if (block >= n_blocks || bx >= cols || by >= rows || margin) {
                g.set_nodata(px, true);
                continue;
            }
            g.block_ids[px] = static_cast<uint32_t>(block + 1);
            const int64_t src = source_row[static_cast<size_t>(block)];
            for (int64_t j = 0; j < f; ++j) {
                double base = ds.x.at(src, j);
                if (std::isnan(base)) base = fill[static_cast<size_t>(j)];
                double jitter = 0.15 * scale[static_cast<size_t>(j)] * rng.normal();
                g.planes[static_cast<size_t>(j) * g.n_pixels() + px] =
                    static_cast<float>(base + jitter);
            }
        }
    }
    return g;
}

}  // namespace pfncast
