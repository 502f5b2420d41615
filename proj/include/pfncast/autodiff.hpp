#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfncast/kernels.hpp"
#include "pfncast/tensor.hpp"

// Reverse-mode engine over a flat tape. Nodes are appended in topological
// order (inputs of node k always have id < k), so backward is a single
// reverse sweep with one registered rule per primitive.

namespace pfncast::ad {

enum class Op {
    Input,
    Param,
    MatMul,
    Transpose,
    Add,
    AddRowVec,
    Mul,
    Scale,
    Softmax,
    MaskedSoftmax,
    LayerNorm,
    Gelu,
    TableRows,
    ColSlice,
    ConcatCols,
    CrossEntropy,
    Sum,
    Dot,
};

struct Node {
    Op op;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool needs_grad = false;

    // per-op payload
    double scalar = 0.0;
    int64_t i0 = 0, i1 = 0;
    std::shared_ptr<const BoolMatrix> mask;
    std::shared_ptr<const std::vector<int>> indices;       // gather / label rows
    std::shared_ptr<const std::vector<int>> indices2;      // labels for CE
    std::shared_ptr<const nn::LayerNormCache> ln_cache;
    std::shared_ptr<const Tensor> cached;                  // e.g. softmax of CE logits
};

class Graph {
public:
    int input(Tensor v) { return push(Op::Input, {}, std::move(v), false); }
    int param(Tensor v) { return push(Op::Param, {}, std::move(v), true); }

    int matmul(int a, int b) { return push(Op::MatMul, {a, b}, nn::matmul(val(a), val(b))); }

    int transpose(int a) { return push(Op::Transpose, {a}, nn::transpose(val(a))); }

    int add(int a, int b) { return push(Op::Add, {a, b}, nn::add(val(a), val(b))); }

    int add_rowvec(int a, int v) {
        return push(Op::AddRowVec, {a, v}, nn::add_rowvec(val(a), val(v)));
    }

    int mul(int a, int b) { return push(Op::Mul, {a, b}, nn::mul(val(a), val(b))); }

    int scale(int a, double s) {
        int id = push(Op::Scale, {a}, nn::scale(val(a), s));
        nodes_[id].scalar = s;
        return id;
    }

    int softmax(int a) { return push(Op::Softmax, {a}, nn::softmax(val(a), -1)); }

    int masked_softmax(int a, std::shared_ptr<const BoolMatrix> mask) {
        int id = push(Op::MaskedSoftmax, {a}, nn::masked_softmax(val(a), *mask));
        nodes_[id].mask = std::move(mask);
        return id;
    }

    int layer_norm(int x, int gain, int bias, double eps = 1e-5) {
        auto cache = std::make_shared<nn::LayerNormCache>();
        Tensor out = nn::layer_norm(val(x), val(gain), val(bias), eps, cache.get());
        int id = push(Op::LayerNorm, {x, gain, bias}, std::move(out));
        nodes_[id].scalar = eps;
        nodes_[id].ln_cache = std::move(cache);
        return id;
    }

    int gelu(int a) { return push(Op::Gelu, {a}, nn::gelu(val(a))); }

    int table_rows(int table, std::shared_ptr<const std::vector<int>> idx) {
        int id = push(Op::TableRows, {table}, nn::table_rows(val(table), *idx));
        nodes_[id].indices = std::move(idx);
        return id;
    }

    int col_slice(int a, int64_t start, int64_t len) {
        int id = push(Op::ColSlice, {a}, nn::col_slice(val(a), start, len));
        nodes_[id].i0 = start;
        nodes_[id].i1 = len;
        return id;
    }

    int concat_cols(const std::vector<int>& parts) {
        std::vector<Tensor> vals;
        vals.reserve(parts.size());
        for (int p : parts) vals.push_back(val(p));
        return push(Op::ConcatCols, parts, nn::concat_cols(vals));
    }

    // Mean cross-entropy over listed logit rows; scalar output.
    int cross_entropy(int logits, std::shared_ptr<const std::vector<int>> labels,
                      std::shared_ptr<const std::vector<int>> rows) {
        double loss = nn::cross_entropy_rows(val(logits), *labels, *rows);
        Tensor t;
        t.shape = {1};
        t.data = {loss};
        int id = push(Op::CrossEntropy, {logits}, std::move(t));
        nodes_[id].indices = std::move(rows);
        nodes_[id].indices2 = std::move(labels);
        // softmax rows are needed again in backward; cache them once
        auto sm = std::make_shared<Tensor>(nn::softmax(val(logits), -1));
        nodes_[id].cached = std::move(sm);
        return id;
    }

    int sum(int a) {
        Tensor t;
        t.shape = {1};
        double s = 0.0;
        for (double v : val(a).data) s += v;
        t.data = {s};
        return push(Op::Sum, {a}, std::move(t));
    }

    int dot(int a, int b) {
        check_same_shape(val(a), val(b), "dot");
        Tensor t;
        t.shape = {1};
        double s = 0.0;
        for (size_t i = 0; i < val(a).data.size(); ++i) s += val(a).data[i] * val(b).data[i];
        t.data = {s};
        return push(Op::Dot, {a, b}, std::move(t));
    }

    const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    const Tensor& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
    size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss node; fills grads of every node that
    /// (transitively) feeds a parameter.
    void backward(int loss) {
        Node& ln = nodes_[static_cast<size_t>(loss)];
        if (ln.value.numel() != 1)
            throw std::invalid_argument("backward: loss node is not a scalar");
        for (auto& n : nodes_) {
            if (n.needs_grad) n.grad = Tensor::zeros(n.value.shape);
        }
        if (!ln.needs_grad) return;  // loss does not depend on any parameter
        ln.grad.data[0] = 1.0;
        for (int k = static_cast<int>(nodes_.size()) - 1; k >= 0; --k) {
            Node& n = nodes_[static_cast<size_t>(k)];
            if (!n.needs_grad || n.grad.numel() == 0) continue;
            accumulate(n);
        }
    }

private:
    std::vector<Node> nodes_;

    const Tensor& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor& grad_ref(int id) { return nodes_[static_cast<size_t>(id)].grad; }

    int push(Op op, std::vector<int> inputs, Tensor value, bool leaf_grad = false) {
        Node n;
        n.op = op;
        n.needs_grad = leaf_grad;
        for (int i : inputs) {
            if (i < 0 || i >= static_cast<int>(nodes_.size()))
                throw std::invalid_argument("graph: input id out of range");
            n.needs_grad = n.needs_grad || nodes_[static_cast<size_t>(i)].needs_grad;
        }
        n.inputs = std::move(inputs);
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void add_into(int id, const Tensor& g) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.needs_grad) return;
        for (size_t i = 0; i < g.data.size(); ++i) n.grad.data[i] += g.data[i];
    }

    void accumulate(Node& n) {
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Input:
            case Op::Param:
                break;
            case Op::MatMul: {
                const Tensor& a = val(n.inputs[0]);
                const Tensor& b = val(n.inputs[1]);
                if (nodes_[static_cast<size_t>(n.inputs[0])].needs_grad)
                    add_into(n.inputs[0], nn::matmul(g, nn::transpose(b)));
                if (nodes_[static_cast<size_t>(n.inputs[1])].needs_grad)
                    add_into(n.inputs[1], nn::matmul(nn::transpose(a), g));
                break;
            }
            case Op::Transpose:
                add_into(n.inputs[0], nn::transpose(g));
                break;
            case Op::Add:
                add_into(n.inputs[0], g);
                add_into(n.inputs[1], g);
                break;
            case Op::AddRowVec: {
                add_into(n.inputs[0], g);
                const int64_t m = g.rows(), c = g.cols();
                Tensor gv = Tensor::zeros({c});
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < c; ++j) gv.data[static_cast<size_t>(j)] += g.data[i * c + j];
                add_into(n.inputs[1], gv);
                break;
            }
            case Op::Mul: {
                add_into(n.inputs[0], nn::mul(g, val(n.inputs[1])));
                add_into(n.inputs[1], nn::mul(g, val(n.inputs[0])));
                break;
            }
            case Op::Scale:
                add_into(n.inputs[0], nn::scale(g, n.scalar));
                break;
            case Op::Softmax:
            case Op::MaskedSoftmax: {
                // dx = y * (dy - sum(dy * y)) per row; masked entries stay 0
                const Tensor& y = n.value;
                const int64_t c = y.cols();
                const int64_t m = y.numel() / c;
                Tensor gx = Tensor::zeros(y.shape);
                for (int64_t i = 0; i < m; ++i) {
                    double s = 0.0;
                    for (int64_t j = 0; j < c; ++j) s += g.data[i * c + j] * y.data[i * c + j];
                    for (int64_t j = 0; j < c; ++j)
                        gx.data[i * c + j] = y.data[i * c + j] * (g.data[i * c + j] - s);
                }
                add_into(n.inputs[0], gx);
                break;
            }
            case Op::LayerNorm: {
                const Tensor& x = val(n.inputs[0]);
                const Tensor& gain = val(n.inputs[1]);
                const auto& cache = *n.ln_cache;
                const int64_t c = x.cols();
                const int64_t m = x.numel() / c;
                Tensor gx = Tensor::zeros(x.shape);
                Tensor ggain = Tensor::zeros(gain.shape);
                Tensor gbias = Tensor::zeros(gain.shape);
                for (int64_t i = 0; i < m; ++i) {
                    const double* gr = g.data.data() + i * c;
                    const double* xh = cache.xhat.data.data() + i * c;
                    double rstd = cache.rstd[static_cast<size_t>(i)];
                    double mean_gxh = 0.0, mean_gxh_xh = 0.0;
                    for (int64_t j = 0; j < c; ++j) {
                        double gxh = gr[j] * gain.data[static_cast<size_t>(j)];
                        mean_gxh += gxh;
                        mean_gxh_xh += gxh * xh[j];
                        ggain.data[static_cast<size_t>(j)] += gr[j] * xh[j];
                        gbias.data[static_cast<size_t>(j)] += gr[j];
                    }
                    mean_gxh /= static_cast<double>(c);
                    mean_gxh_xh /= static_cast<double>(c);
                    for (int64_t j = 0; j < c; ++j) {
                        double gxh = gr[j] * gain.data[static_cast<size_t>(j)];
                        gx.data[i * c + j] = rstd * (gxh - mean_gxh - xh[j] * mean_gxh_xh);
                    }
                }
                add_into(n.inputs[0], gx);
                add_into(n.inputs[1], ggain);
                add_into(n.inputs[2], gbias);
                break;
            }
            case Op::Gelu: {
                const Tensor& x = val(n.inputs[0]);
                Tensor gx = g;
                for (size_t i = 0; i < gx.data.size(); ++i)
                    gx.data[i] *= nn::gelu_grad_scalar(x.data[i]);
                add_into(n.inputs[0], gx);
                break;
            }
            case Op::TableRows: {
                const Tensor& table = val(n.inputs[0]);
                const auto& idx = *n.indices;
                Tensor gt = Tensor::zeros(table.shape);
                const int64_t d = table.dim(1);
                for (size_t i = 0; i < idx.size(); ++i)
                    for (int64_t j = 0; j < d; ++j)
                        gt.data[idx[i] * d + j] += g.data[static_cast<int64_t>(i) * d + j];
                add_into(n.inputs[0], gt);
                break;
            }
            case Op::ColSlice: {
                const Tensor& a = val(n.inputs[0]);
                Tensor ga = Tensor::zeros(a.shape);
                const int64_t m = a.dim(0), c = a.dim(1);
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n.i1; ++j)
                        ga.data[i * c + n.i0 + j] = g.data[i * n.i1 + j];
                add_into(n.inputs[0], ga);
                break;
            }
            case Op::ConcatCols: {
                int64_t off = 0;
                const int64_t total = n.value.dim(1);
                const int64_t m = n.value.dim(0);
                for (int in_id : n.inputs) {
                    const int64_t w = val(in_id).dim(1);
                    Tensor gp = Tensor::zeros({m, w});
                    for (int64_t i = 0; i < m; ++i)
                        std::copy_n(g.data.data() + i * total + off, w, gp.data.data() + i * w);
                    add_into(in_id, gp);
                    off += w;
                }
                break;
            }
            case Op::CrossEntropy: {
                const Tensor& sm = *n.cached;
                const auto& rows = *n.indices;
                const auto& labels = *n.indices2;
                const double gs = g.data[0] / static_cast<double>(rows.size());
                Tensor gl = Tensor::zeros(sm.shape);
                const int64_t c = sm.cols();
                for (size_t i = 0; i < rows.size(); ++i) {
                    const int64_t r = rows[i];
                    for (int64_t j = 0; j < c; ++j) gl.data[r * c + j] += gs * sm.data[r * c + j];
                    gl.data[r * c + labels[i]] -= gs;
                }
                add_into(n.inputs[0], gl);
                break;
            }
            case Op::Sum: {
                Tensor ga = Tensor::full(val(n.inputs[0]).shape, g.data[0]);
                add_into(n.inputs[0], ga);
                break;
            }
            case Op::Dot: {
                add_into(n.inputs[0], nn::scale(val(n.inputs[1]), g.data[0]));
                add_into(n.inputs[1], nn::scale(val(n.inputs[0]), g.data[0]));
                break;
            }
        }
    }
};

/// Graph-building counterpart of nn::attention (single head).
inline int attention(Graph& g, int q, int k, int v, std::shared_ptr<const BoolMatrix> mask) {
    const int64_t d = g.value(q).dim(1);
    int scores = g.scale(g.matmul(q, g.transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    int w = g.masked_softmax(scores, std::move(mask));
    return g.matmul(w, v);
}

}  // namespace pfncast::ad
