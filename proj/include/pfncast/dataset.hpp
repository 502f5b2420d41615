#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfncast/rng.hpp"
#include "pfncast/tensor.hpp"

// Tabular data plus the evaluation-protocol primitives: binarized targets,
// stratified seeded splits with largest-remainder allocation, and seeded
// minority oversampling.

namespace pfncast {

struct TabularDataset {
    std::vector<std::string> feature_names;
    Tensor x;                                // n x f, NaN marks missing
    std::vector<int> labels;                 // binary targets (may be empty pre-binarize)
    std::vector<std::string> disease_names;  // indicator columns, if present
    std::vector<uint8_t> disease;            // n x |disease_names|, row-major
    std::vector<std::string> block_ids;      // optional

    int64_t n_rows() const { return x.rank() == 2 ? x.dim(0) : 0; }
    int64_t n_features() const { return x.rank() == 2 ? x.dim(1) : 0; }

    uint8_t disease_at(int64_t row, size_t d) const {
        return disease[static_cast<size_t>(row) * disease_names.size() + d];
    }
};

/// Label a row positive when any disease indicator fires.
inline std::vector<int> binarize_target(const TabularDataset& ds) {
    if (ds.disease_names.empty())
        throw std::invalid_argument("binarize_target: dataset has no disease indicators");
    std::vector<int> out(static_cast<size_t>(ds.n_rows()), 0);
    for (int64_t i = 0; i < ds.n_rows(); ++i)
        for (size_t d = 0; d < ds.disease_names.size(); ++d)
            if (ds.disease_at(i, d) != 0) {
                out[static_cast<size_t>(i)] = 1;
                break;
            }
    return out;
}

inline TabularDataset subset(const TabularDataset& ds, const std::vector<int64_t>& rows) {
    TabularDataset out;
    out.feature_names = ds.feature_names;
    out.disease_names = ds.disease_names;
    out.x = Tensor::zeros({static_cast<int64_t>(rows.size()), ds.n_features()});
    out.labels.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(ds.x.row_ptr(rows[i]), ds.n_features(), out.x.row_ptr(static_cast<int64_t>(i)));
        if (!ds.labels.empty()) out.labels.push_back(ds.labels[static_cast<size_t>(rows[i])]);
        if (!ds.disease_names.empty())
            for (size_t d = 0; d < ds.disease_names.size(); ++d)
                out.disease.push_back(ds.disease_at(rows[i], d));
        if (!ds.block_ids.empty())
            out.block_ids.push_back(ds.block_ids[static_cast<size_t>(rows[i])]);
    }
    return out;
}

/// Keeps only the named feature columns, in the given index order.
inline TabularDataset select_features(const TabularDataset& ds, const std::vector<int>& keep) {
    TabularDataset out = ds;
    out.feature_names.clear();
    out.x = Tensor::zeros({ds.n_rows(), static_cast<int64_t>(keep.size())});
    for (size_t j = 0; j < keep.size(); ++j) {
        out.feature_names.push_back(ds.feature_names[static_cast<size_t>(keep[j])]);
        for (int64_t i = 0; i < ds.n_rows(); ++i) out.x.at(i, static_cast<int64_t>(j)) = ds.x.at(i, keep[j]);
    }
    return out;
}

struct SplitSpec {
    double train_fraction = 0.76;
    uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<int64_t> train, test;
};

/// Per-class proportional allocation with largest-remainder rounding; both
/// sides keep at least one row of every class. Deterministic per seed.
inline SplitIndices stratified_split(const std::vector<int>& labels, const SplitSpec& spec) {
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
        throw std::invalid_argument("stratified_split: fraction must be in (0, 1)");
    std::map<int, std::vector<int64_t>> by_class;
    for (size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i]].push_back(static_cast<int64_t>(i));
    for (const auto& [cls, rows] : by_class)
        if (rows.size() < 2)
            throw std::invalid_argument("stratified_split: class " + std::to_string(cls) +
                                        " has fewer than 2 rows");

    const int64_t n = static_cast<int64_t>(labels.size());
    const int64_t target_train = std::llround(spec.train_fraction * static_cast<double>(n));

    struct Quota {
        int cls;
        int64_t base;
        double remainder;
        int64_t cap;
    };
    std::vector<Quota> quotas;
    int64_t base_sum = 0;
    for (const auto& [cls, rows] : by_class) {
        double exact = spec.train_fraction * static_cast<double>(rows.size());
        Quota q;
        q.cls = cls;
        q.base = static_cast<int64_t>(std::floor(exact));
        q.remainder = exact - static_cast<double>(q.base);
        q.cap = static_cast<int64_t>(rows.size()) - 1;
        q.base = std::min(std::max<int64_t>(q.base, 1), q.cap);
        quotas.push_back(q);
        base_sum += q.base;
    }
    int64_t leftover = target_train - base_sum;
    if (leftover > 0) {
        std::vector<size_t> order(quotas.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (quotas[a].remainder != quotas[b].remainder)
                return quotas[a].remainder > quotas[b].remainder;
            return quotas[a].cls < quotas[b].cls;
        });
        for (size_t i = 0; i < order.size() && leftover > 0; ++i) {
            Quota& q = quotas[order[i]];
            int64_t room = q.cap - q.base;
            int64_t take = std::min(room, leftover);
            q.base += take;
            leftover -= take;
        }
    }

    SplitIndices out;
    Rng rng(mix_seed(spec.seed, 0x5b117ULL));
    for (Quota& q : quotas) {
        auto rows = by_class[q.cls];
        rng.shuffle(rows);
        for (size_t i = 0; i < rows.size(); ++i)
            (static_cast<int64_t>(i) < q.base ? out.train : out.test).push_back(rows[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

/// Oversamples the minority class with replacement until parity. Appended
/// rows are seeded draws from the existing minority rows.
inline std::vector<int64_t> balance_training(const std::vector<int>& labels, uint64_t seed) {
    std::vector<int64_t> keep(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) keep[i] = static_cast<int64_t>(i);
    std::vector<int64_t> pos, neg;
    for (size_t i = 0; i < labels.size(); ++i)
        (labels[i] == 1 ? pos : neg).push_back(static_cast<int64_t>(i));
    if (pos.empty() || neg.empty() || pos.size() == neg.size()) return keep;
    auto& minority = pos.size() < neg.size() ? pos : neg;
    int64_t need = static_cast<int64_t>(std::max(pos.size(), neg.size()) - minority.size());
    Rng rng(mix_seed(seed, 0xba1a2ceULL));
    for (int64_t i = 0; i < need; ++i)
        keep.push_back(minority[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(minority.size()) - 1))]);
    return keep;
}

// ---------------------------------------------------------------------------
// CSV interchange: feature columns + "disease:<name>" indicators (or a
// single "label" column) + optional block_id; empty cell = missing; LF rows.
// ---------------------------------------------------------------------------

namespace detail_csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.emplace_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline double parse_cell(const std::string& s, int line_no) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw std::runtime_error("csv: bad numeric cell '" + s + "' on line " +
                                 std::to_string(line_no));
    return v;
}

}  // namespace detail_csv

inline TabularDataset read_csv(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("csv: empty file");
    if (!header.empty() && header.back() == '\r') header.pop_back();

    TabularDataset ds;
    auto cols = detail_csv::split_line(header);
    enum class Kind { Feature, Disease, Label, Block };
    std::vector<Kind> kinds;
    std::vector<int> target_index;  // per column: feature idx or disease idx
    int label_col = -1;
    for (size_t c = 0; c < cols.size(); ++c) {
        const std::string& name = cols[c];
        if (name == "label") {
            kinds.push_back(Kind::Label);
            target_index.push_back(0);
            label_col = static_cast<int>(c);
        } else if (name == "block_id") {
            kinds.push_back(Kind::Block);
            target_index.push_back(0);
        } else if (name.rfind("disease:", 0) == 0) {
            kinds.push_back(Kind::Disease);
            target_index.push_back(static_cast<int>(ds.disease_names.size()));
            ds.disease_names.push_back(name.substr(8));
        } else {
            kinds.push_back(Kind::Feature);
            target_index.push_back(static_cast<int>(ds.feature_names.size()));
            ds.feature_names.push_back(name);
        }
    }

    std::set<std::string> unique_names(ds.feature_names.begin(), ds.feature_names.end());
    if (unique_names.size() != ds.feature_names.size())
        throw std::runtime_error("csv: duplicate feature column names");

    std::vector<double> cells;
    std::vector<int> labels;
    std::vector<uint8_t> disease;
    std::vector<std::string> blocks;
    std::string line;
    int line_no = 1;
    int64_t n_rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail_csv::split_line(line);
        if (fields.size() != cols.size())
            throw std::runtime_error("csv: column count mismatch on line " +
                                     std::to_string(line_no));
        for (size_t c = 0; c < fields.size(); ++c) {
            switch (kinds[c]) {
                case Kind::Feature:
                    cells.push_back(detail_csv::parse_cell(fields[c], line_no));
                    break;
                case Kind::Disease: {
                    double v = detail_csv::parse_cell(fields[c], line_no);
                    disease.push_back(std::isnan(v) ? 0 : (v != 0.0 ? 1 : 0));
                    break;
                }
                case Kind::Label: {
                    double v = detail_csv::parse_cell(fields[c], line_no);
                    labels.push_back(static_cast<int>(v));
                    break;
                }
                case Kind::Block:
                    blocks.push_back(fields[c]);
                    break;
            }
        }
        ++n_rows;
    }
    if (n_rows == 0) throw std::runtime_error("csv: no data rows");

    ds.x.shape = {n_rows, static_cast<int64_t>(ds.feature_names.size())};
    ds.x.data = std::move(cells);
    ds.labels = std::move(labels);
    ds.disease = std::move(disease);
    ds.block_ids = std::move(blocks);
    if (label_col < 0 && !ds.disease_names.empty()) ds.labels = binarize_target(ds);
    return ds;
}

inline TabularDataset read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("csv: cannot open " + path);
    return read_csv(in);
}

inline void format_cell(std::string& out, double v) {
    if (std::isnan(v)) return;  // missing -> empty cell
    char buf[40];
    int len = std::snprintf(buf, sizeof(buf), "%.9g", v);
    out.append(buf, static_cast<size_t>(len));
}

inline std::string write_csv(const TabularDataset& ds) {
    std::string out;
    for (size_t j = 0; j < ds.feature_names.size(); ++j) {
        if (j) out.push_back(',');
        out += ds.feature_names[j];
    }
    for (const auto& d : ds.disease_names) {
        out.push_back(',');
        out += "disease:" + d;
    }
    if (ds.disease_names.empty() && !ds.labels.empty()) out += ",label";
    if (!ds.block_ids.empty()) out += ",block_id";
    out.push_back('\n');

    for (int64_t i = 0; i < ds.n_rows(); ++i) {
        for (int64_t j = 0; j < ds.n_features(); ++j) {
            if (j) out.push_back(',');
            format_cell(out, ds.x.at(i, j));
        }
        for (size_t d = 0; d < ds.disease_names.size(); ++d) {
            out.push_back(',');
            out += ds.disease_at(i, d) ? '1' : '0';
        }
        if (ds.disease_names.empty() && !ds.labels.empty()) {
            out.push_back(',');
            out += std::to_string(ds.labels[static_cast<size_t>(i)]);
        }
        if (!ds.block_ids.empty()) {
            out.push_back(',');
            out += ds.block_ids[static_cast<size_t>(i)];
        }
        out.push_back('\n');
    }
    return out;
}

}  // namespace pfncast
