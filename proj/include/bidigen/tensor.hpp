// Dense double-precision tensors with reverse-mode autodiff.
//
// A Tensor is a shared handle to a node in a dynamically built computation
// graph. Ops record a backprop closure on the result node; backward() runs
// the closures in reverse topological order and accumulates gradients on
// every node with requires_grad set.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace bidigen {

using TokenId = std::uint32_t;
using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // allocated lazily; persists across backward calls
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    bool wants_grad() const { return requires_grad || static_cast<bool>(backprop); }
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad);
    }

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
        auto node = std::make_shared<TensorNode>();
        const std::size_t n = shape_size(shape);
        if (data.empty()) data.assign(n, 0.0);
        if (data.size() != n) throw std::invalid_argument("tensor data does not match shape");
        node->shape = std::move(shape);
        node->data = std::move(data);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    static Tensor scalar(double v) { return from_data({1}, {v}); }

    static Tensor randn(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad = true) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::normal_distribution<double> dist(0.0, stddev);
        for (double& x : t.data()) x = dist(rng);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t size() const { return node_->data.size(); }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    const std::vector<double>& grad() const { return node_->grad; }

    bool requires_grad() const { return node_->requires_grad; }

    double value() const {
        if (size() != 1) throw std::invalid_argument("value() on non-scalar tensor");
        return node_->data[0];
    }

    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    std::shared_ptr<TensorNode> node() const { return node_; }

    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline CMapMat as_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
    return CMapMat(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MapMat as_matrix(std::vector<double>& v, std::size_t rows, std::size_t cols) {
    return MapMat(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require_matrix(const Tensor& t, const char* who) {
    if (t.rank() != 2) throw std::invalid_argument(std::string(who) + ": expected a rank-2 tensor");
}

// Builds the result node for an op. The backprop closure is installed only
// when some input participates in gradient flow.
inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::vector<std::shared_ptr<TensorNode>> parents,
                          std::function<void(TensorNode&)> backprop) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data));
    bool any = false;
    for (const auto& p : parents)
        if (p->wants_grad()) { any = true; break; }
    if (any) {
        out.node()->parents = std::move(parents);
        out.node()->backprop = std::move(backprop);
    }
    return out;
}

inline void accumulate(const std::shared_ptr<TensorNode>& node, std::size_t idx, double v) {
    if (!node->wants_grad()) return;
    node->ensure_grad();
    node->grad[idx] += v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise / shape ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto pa = a.node(), pb = b.node();
    return detail::make_result(a.shape(), std::move(out), {pa, pb}, [pa, pb](TensorNode& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            detail::accumulate(pa, i, self.grad[i]);
            detail::accumulate(pb, i, self.grad[i]);
        }
    });
}

inline Tensor mul_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {pa}, [pa, c](TensorNode& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) detail::accumulate(pa, i, self.grad[i] * c);
    });
}

inline Tensor sum(const Tensor& a) {
    double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
    auto pa = a.node();
    return detail::make_result({1}, {s}, {pa}, [pa](TensorNode& self) {
        const double g = self.grad[0];
        for (std::size_t i = 0; i < pa->data.size(); ++i) detail::accumulate(pa, i, g);
    });
}

// broadcast add of a length-C bias over the rows of an R x C matrix
inline Tensor add_bias_rows(const Tensor& m, const Tensor& bias) {
    detail::require_matrix(m, "add_bias_rows");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    if (bias.size() != cols) throw std::invalid_argument("add_bias_rows: bias length mismatch");
    std::vector<double> out(m.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = m.data()[r * cols + c] + bias.data()[c];
    auto pm = m.node(), pb = bias.node();
    return detail::make_result(m.shape(), std::move(out), {pm, pb}, [pm, pb, rows, cols](TensorNode& self) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                detail::accumulate(pm, r * cols + c, self.grad[r * cols + c]);
                detail::accumulate(pb, c, self.grad[r * cols + c]);
            }
    });
}

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    detail::require_matrix(a, "slice_cols");
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    if (c0 >= c1 || c1 > cols) throw std::invalid_argument("slice_cols: bad column range");
    const std::size_t w = c1 - c0;
    std::vector<double> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(r * cols + c0), w, out.begin() + static_cast<std::ptrdiff_t>(r * w));
    auto pa = a.node();
    return detail::make_result({rows, w}, std::move(out), {pa}, [pa, rows, cols, c0, w](TensorNode& self) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) detail::accumulate(pa, r * cols + c0 + c, self.grad[r * w + c]);
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const std::size_t rows = parts[0].dim(0);
    std::size_t cols = 0;
    for (const auto& p : parts) {
        detail::require_matrix(p, "concat_cols");
        if (p.dim(0) != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p.dim(1);
    }
    std::vector<double> out(rows * cols);
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::vector<std::size_t> widths;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(r * w), w, out.begin() + static_cast<std::ptrdiff_t>(r * cols + off));
        parents.push_back(p.node());
        widths.push_back(w);
        off += w;
    }
    auto ps = parents;
    return detail::make_result({rows, cols}, std::move(out), std::move(parents),
                               [ps, widths, rows, cols](TensorNode& self) {
                                   std::size_t off = 0;
                                   for (std::size_t k = 0; k < ps.size(); ++k) {
                                       const std::size_t w = widths[k];
                                       for (std::size_t r = 0; r < rows; ++r)
                                           for (std::size_t c = 0; c < w; ++c)
                                               detail::accumulate(ps[k], r * w + c, self.grad[r * cols + off + c]);
                                       off += w;
                                   }
                               });
}

// row gather: out[i] = table[ids[i]]; also serves as the embedding lookup
inline Tensor gather_rows(const Tensor& table, std::span<const TokenId> ids) {
    detail::require_matrix(table, "gather_rows");
    const std::size_t n = table.dim(0), cols = table.dim(1);
    std::vector<double> out(ids.size() * cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= n) throw std::out_of_range("gather_rows: row id out of range");
        std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(ids[i] * cols), cols,
                    out.begin() + static_cast<std::ptrdiff_t>(i * cols));
    }
    auto pt = table.node();
    std::vector<TokenId> idv(ids.begin(), ids.end());
    return detail::make_result({ids.size(), cols}, std::move(out), {pt}, [pt, idv, cols](TensorNode& self) {
        for (std::size_t i = 0; i < idv.size(); ++i)
            for (std::size_t c = 0; c < cols; ++c)
                detail::accumulate(pt, static_cast<std::size_t>(idv[i]) * cols + c, self.grad[i * cols + c]);
    });
}

// ---------------------------------------------------------------------------
// Matrix products (Eigen-backed kernels)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    const std::size_t r = a.dim(0), k = a.dim(1), c = b.dim(1);
    if (b.dim(0) != k) throw std::invalid_argument("matmul: inner dimension mismatch");
    std::vector<double> out(r * c);
    detail::as_matrix(out, r, c) = detail::as_matrix(a.data(), r, k) * detail::as_matrix(b.data(), k, c);
    auto pa = a.node(), pb = b.node();
    return detail::make_result({r, c}, std::move(out), {pa, pb}, [pa, pb, r, k, c](TensorNode& self) {
        auto dout = detail::as_matrix(self.grad, r, c);
        if (pa->wants_grad()) {
            pa->ensure_grad();
            detail::as_matrix(pa->grad, r, k) += dout * detail::as_matrix(pb->data, k, c).transpose();
        }
        if (pb->wants_grad()) {
            pb->ensure_grad();
            detail::as_matrix(pb->grad, k, c) += detail::as_matrix(pa->data, r, k).transpose() * dout;
        }
    });
}

// a * b^T without materializing the transpose
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul_nt");
    detail::require_matrix(b, "matmul_nt");
    const std::size_t r = a.dim(0), k = a.dim(1), c = b.dim(0);
    if (b.dim(1) != k) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    std::vector<double> out(r * c);
    detail::as_matrix(out, r, c) = detail::as_matrix(a.data(), r, k) * detail::as_matrix(b.data(), c, k).transpose();
    auto pa = a.node(), pb = b.node();
    return detail::make_result({r, c}, std::move(out), {pa, pb}, [pa, pb, r, k, c](TensorNode& self) {
        auto dout = detail::as_matrix(self.grad, r, c);
        if (pa->wants_grad()) {
            pa->ensure_grad();
            detail::as_matrix(pa->grad, r, k) += dout * detail::as_matrix(pb->data, c, k);
        }
        if (pb->wants_grad()) {
            pb->ensure_grad();
            detail::as_matrix(pb->grad, c, k) += dout.transpose() * detail::as_matrix(pa->data, r, k);
        }
    });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

inline Tensor gelu(const Tensor& a) {
    static constexpr double kInvSqrt2 = 0.7071067811865475244;
    static constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    auto pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {pa}, [pa](TensorNode& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double x = pa->data[i];
            const double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
            detail::accumulate(pa, i, self.grad[i] * d);
        }
    });
}

// per-row layer normalization with affine parameters
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
    detail::require_matrix(x, "layer_norm_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (gamma.size() != cols || beta.size() != cols) throw std::invalid_argument("layer_norm_rows: affine size mismatch");
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t c = 0; c < cols; ++c) {
            const double h = (xr[c] - mean) * is;
            xhat[r * cols + c] = h;
            out[r * cols + c] = gamma.data()[c] * h + beta.data()[c];
        }
    }
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    return detail::make_result(x.shape(), std::move(out), {px, pg, pb},
                               [px, pg, pb, rows, cols, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& self) {
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       const double* dout = self.grad.data() + r * cols;
                                       const double* h = xhat.data() + r * cols;
                                       double mean_dxhat = 0.0, mean_dxhat_h = 0.0;
                                       for (std::size_t c = 0; c < cols; ++c) {
                                           const double dxh = dout[c] * pg->data[c];
                                           mean_dxhat += dxh;
                                           mean_dxhat_h += dxh * h[c];
                                           detail::accumulate(pg, c, dout[c] * h[c]);
                                           detail::accumulate(pb, c, dout[c]);
                                       }
                                       mean_dxhat /= static_cast<double>(cols);
                                       mean_dxhat_h /= static_cast<double>(cols);
                                       if (!px->wants_grad()) continue;
                                       px->ensure_grad();
                                       for (std::size_t c = 0; c < cols; ++c) {
                                           const double dxh = dout[c] * pg->data[c];
                                           px->grad[r * cols + c] += inv_std[r] * (dxh - mean_dxhat - h[c] * mean_dxhat_h);
                                       }
                                   }
                               });
}

// row softmax over the columns allowed by key_mask; masked columns are exactly 0
inline Tensor softmax_rows_masked(const Tensor& z, const std::vector<std::uint8_t>& key_mask) {
    detail::require_matrix(z, "softmax_rows_masked");
    const std::size_t rows = z.dim(0), cols = z.dim(1);
    if (key_mask.size() != cols) throw std::invalid_argument("softmax_rows_masked: mask length mismatch");
    if (std::find(key_mask.begin(), key_mask.end(), std::uint8_t{1}) == key_mask.end())
        throw std::invalid_argument("softmax_rows_masked: all keys masked");
    std::vector<double> out(z.size(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* zr = z.data().data() + r * cols;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cols; ++c)
            if (key_mask[c]) m = std::max(m, zr[c]);
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c)
            if (key_mask[c]) {
                out[r * cols + c] = std::exp(zr[c] - m);
                s += out[r * cols + c];
            }
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= s;
    }
    auto pz = z.node();
    auto pout = std::make_shared<std::vector<double>>(out);
    return detail::make_result(z.shape(), std::move(out), {pz}, [pz, pout, rows, cols](TensorNode& self) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* p = pout->data() + r * cols;
            const double* dout = self.grad.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += dout[c] * p[c];
            for (std::size_t c = 0; c < cols; ++c) detail::accumulate(pz, r * cols + c, p[c] * (dout[c] - dot));
        }
    });
}

// inverted dropout; identity when rate == 0
inline Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (rate == 0.0) return a;
    const double keep = 1.0 - rate;
    std::bernoulli_distribution dist(keep);
    auto mask = std::make_shared<std::vector<std::uint8_t>>(a.size());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = dist(rng) ? 1 : 0;
        out[i] = (*mask)[i] ? a.data()[i] / keep : 0.0;
    }
    auto pa = a.node();
    return detail::make_result(a.shape(), std::move(out), {pa}, [pa, mask, keep](TensorNode& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if ((*mask)[i]) detail::accumulate(pa, i, self.grad[i] / keep);
    });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// weighted sum over rows of -log softmax(logits_r)[target_r]
inline Tensor cross_entropy_rows(const Tensor& logits, std::span<const TokenId> targets,
                                 std::span<const double> weights) {
    detail::require_matrix(logits, "cross_entropy_rows");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    if (targets.size() != rows || weights.size() != rows)
        throw std::invalid_argument("cross_entropy_rows: targets/weights length mismatch");
    auto probs = std::make_shared<std::vector<double>>(logits.size());
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] >= cols) throw std::out_of_range("cross_entropy_rows: target id out of range");
        const double* zr = logits.data().data() + r * cols;
        const double m = *std::max_element(zr, zr + cols);
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            (*probs)[r * cols + c] = std::exp(zr[c] - m);
            s += (*probs)[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) (*probs)[r * cols + c] /= s;
        loss += weights[r] * (std::log(s) - (zr[targets[r]] - m));
    }
    auto pl = logits.node();
    std::vector<TokenId> tv(targets.begin(), targets.end());
    std::vector<double> wv(weights.begin(), weights.end());
    return detail::make_result({1}, {loss}, {pl}, [pl, probs, tv, wv, rows, cols](TensorNode& self) {
        const double g = self.grad[0];
        for (std::size_t r = 0; r < rows; ++r) {
            if (wv[r] == 0.0) continue;
            for (std::size_t c = 0; c < cols; ++c) {
                const double onehot = (c == tv[r]) ? 1.0 : 0.0;
                detail::accumulate(pl, r * cols + c, g * wv[r] * ((*probs)[r * cols + c] - onehot));
            }
        }
    });
}

// loss for a single logits row against one target id
inline Tensor cross_entropy(const Tensor& logits_row, TokenId target) {
    if (logits_row.rank() == 1) {
        const std::size_t v = logits_row.size();
        if (target >= v) throw std::out_of_range("cross_entropy: target id out of range");
        const double* z = logits_row.data().data();
        const double m = *std::max_element(z, z + v);
        double s = 0.0;
        for (std::size_t c = 0; c < v; ++c) s += std::exp(z[c] - m);
        const double loss = std::log(s) - (z[target] - m);
        auto pz = logits_row.node();
        return detail::make_result({1}, {loss}, {pz}, [pz, target, v](TensorNode& self) {
            const double g = self.grad[0];
            const double* z = pz->data.data();
            const double m = *std::max_element(z, z + v);
            double s = 0.0;
            for (std::size_t c = 0; c < v; ++c) s += std::exp(z[c] - m);
            for (std::size_t c = 0; c < v; ++c) {
                const double p = std::exp(z[c] - m) / s;
                const double onehot = (c == target) ? 1.0 : 0.0;
                detail::accumulate(pz, c, g * (p - onehot));
            }
        });
    }
    if (logits_row.rank() == 2 && logits_row.dim(0) == 1) {
        const TokenId t = target;
        const double w = 1.0;
        return cross_entropy_rows(logits_row, std::span<const TokenId>(&t, 1), std::span<const double>(&w, 1));
    }
    throw std::invalid_argument("cross_entropy: expected a single logits row");
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    // iterative post-order over the graph
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    struct Frame { TensorNode* node; std::size_t next; };
    std::vector<Frame> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorNode* p = f.node->parents[f.next++].get();
            if (p->backprop && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

}  // namespace bidigen
