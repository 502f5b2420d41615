#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfncast {

/// Dense row-major tensor of doubles. The substrate for all model math.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> s) {
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(static_cast<size_t>(numel_of(t.shape)), 0.0);
        return t;
    }

    static Tensor full(std::vector<int64_t> s, double v) {
        Tensor t = zeros(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        Tensor t;
        int64_t r = static_cast<int64_t>(rows.size());
        int64_t c = r > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
        t.shape = {r, c};
        t.data.reserve(static_cast<size_t>(r * c));
        for (const auto& row : rows) {
            if (static_cast<int64_t>(row.size()) != c)
                throw std::invalid_argument("tensor: ragged initializer");
            for (double v : row) t.data.push_back(v);
        }
        return t;
    }

    static Tensor vector_of(std::vector<double> v) {
        Tensor t;
        t.shape = {static_cast<int64_t>(v.size())};
        t.data = std::move(v);
        return t;
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: nonpositive dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    int64_t rows() const { return rank() == 1 ? 1 : dim(0); }
    int64_t cols() const { return rank() == 1 ? dim(0) : dim(rank() - 1); }

    double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

    double* row_ptr(int64_t r) { return data.data() + r * cols(); }
    const double* row_ptr(int64_t r) const { return data.data() + r * cols(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

// Debug-only guard: forward ops on finite inputs must stay finite.
inline void debug_check_finite(const Tensor& t, const char* what) {
#ifndef NDEBUG
    if (!t.all_finite()) throw std::runtime_error(std::string(what) + ": non-finite output");
#else
    (void)t;
    (void)what;
#endif
}

/// Dense boolean matrix, used for attention masks.
struct BoolMatrix {
    int64_t rows = 0, cols = 0;
    std::vector<uint8_t> v;

    BoolMatrix() = default;
    BoolMatrix(int64_t r, int64_t c, bool fill = false)
        : rows(r), cols(c), v(static_cast<size_t>(r * c), fill ? 1 : 0) {}

    uint8_t& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
    bool at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)] != 0; }
};

}  // namespace pfncast
