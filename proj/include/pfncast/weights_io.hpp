#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfncast/checksum.hpp"
#include "pfncast/pfn.hpp"

// Weights container: magic "PFNW", little-endian version, length-prefixed
// config JSON, named tensor table (f32 data), trailing CRC-32 over all
// preceding bytes. Any single-bit corruption fails the CRC check cleanly.

namespace pfncast {

struct WeightsFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail_wio {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

inline void put_f32(std::vector<uint8_t>& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

struct Reader {
    const uint8_t* p;
    size_t size;
    size_t off = 0;

    uint32_t u32() {
        if (off + 4 > size) throw WeightsFormatError("weights file truncated");
        uint32_t v = static_cast<uint32_t>(p[off]) | (static_cast<uint32_t>(p[off + 1]) << 8) |
                     (static_cast<uint32_t>(p[off + 2]) << 16) |
                     (static_cast<uint32_t>(p[off + 3]) << 24);
        off += 4;
        return v;
    }

    float f32() {
        uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }

    std::string str(uint32_t len) {
        if (off + len > size) throw WeightsFormatError("weights file truncated");
        std::string s(reinterpret_cast<const char*>(p + off), len);
        off += len;
        return s;
    }
};

inline std::string config_json(const PfnConfig& c) {
    nlohmann::ordered_json j;
    j["n_layers"] = c.n_layers;
    j["emb_dim"] = c.emb_dim;
    j["n_heads"] = c.n_heads;
    j["ff_dim"] = c.ff_dim;
    j["max_features"] = c.max_features;
    j["max_classes"] = c.max_classes;
    j["dropout"] = c.dropout;
    return j.dump();
}

inline PfnConfig config_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw WeightsFormatError("weights config block is not valid JSON");
    PfnConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.emb_dim = j.at("emb_dim").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.max_features = j.at("max_features").get<int>();
    c.max_classes = j.at("max_classes").get<int>();
    c.dropout = j.value("dropout", 0.0);
    c.validate();
    return c;
}

}  // namespace detail_wio

inline std::vector<uint8_t> serialize_weights(const PfnWeights& w) {
    std::vector<uint8_t> out;
    out.push_back('P');
    out.push_back('F');
    out.push_back('N');
    out.push_back('W');
    detail_wio::put_u32(out, 1);  // version

    std::string cfg = detail_wio::config_json(w.config);
    detail_wio::put_u32(out, static_cast<uint32_t>(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());

    uint32_t count = 0;
    w.for_each_tensor([&](const std::string&, const Tensor&) { ++count; });
    detail_wio::put_u32(out, count);
    w.for_each_tensor([&](const std::string& name, const Tensor& t) {
        detail_wio::put_u32(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        detail_wio::put_u32(out, static_cast<uint32_t>(t.shape.size()));
        for (int64_t d : t.shape) detail_wio::put_u32(out, static_cast<uint32_t>(d));
        for (double v : t.data) detail_wio::put_f32(out, static_cast<float>(v));
    });

    detail_wio::put_u32(out, crc32(out.data(), out.size()));
    return out;
}

inline PfnWeights deserialize_weights(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12) throw WeightsFormatError("weights file truncated");
    if (std::memcmp(bytes.data(), "PFNW", 4) != 0)
        throw WeightsFormatError("bad weights magic");
    uint32_t stored_crc = static_cast<uint32_t>(bytes[bytes.size() - 4]) |
                          (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
                          (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
                          (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw WeightsFormatError("weights crc mismatch (file corrupted)");

    detail_wio::Reader r{bytes.data(), bytes.size() - 4, 4};
    uint32_t version = r.u32();
    if (version != 1)
        throw WeightsFormatError("unsupported weights version " + std::to_string(version));
    std::string cfg_text = r.str(r.u32());
    PfnConfig cfg = detail_wio::config_from_json(cfg_text);

    // read the tensor table into a name-indexed staging area
    uint32_t count = r.u32();
    std::vector<std::pair<std::string, Tensor>> table;
    table.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u32());
        uint32_t rank = r.u32();
        std::vector<int64_t> shape;
        shape.reserve(rank);
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            uint32_t dim = r.u32();
            if (dim == 0 || dim > (1u << 24)) throw WeightsFormatError("implausible tensor dim");
            shape.push_back(static_cast<int64_t>(dim));
            numel *= dim;
        }
        Tensor t;
        t.shape = std::move(shape);
        t.data.resize(static_cast<size_t>(numel));
        for (int64_t k = 0; k < numel; ++k)
            t.data[static_cast<size_t>(k)] = static_cast<double>(r.f32());
        table.emplace_back(std::move(name), std::move(t));
    }

    // materialize against the config-implied structure, by name and shape
    PfnWeights w = PfnWeights::init(cfg, 0);
    size_t idx = 0;
    w.for_each_tensor([&](const std::string& name, Tensor& t) {
        if (idx >= table.size() || table[idx].first != name)
            throw WeightsFormatError("weights tensor table mismatch at '" + name + "'");
        if (table[idx].second.shape != t.shape)
            throw WeightsFormatError("tensor '" + name + "' has shape " +
                                     table[idx].second.shape_str() + ", expected " +
                                     t.shape_str());
        t = std::move(table[idx].second);
        ++idx;
    });
    if (idx != table.size()) throw WeightsFormatError("weights file has extra tensors");
    if (!w.all_finite()) throw WeightsFormatError("weights contain non-finite values");
    return w;
}

}  // namespace pfncast
