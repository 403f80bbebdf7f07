#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bislot/errors.hpp"
#include "bislot/rng.hpp"

namespace bislot {

namespace detail {

inline size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= size_t(d);
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// One tape node. Parents are the op inputs; backprop pulls this node's grad
// into the parents' grads. Values are never mutated after construction except
// through Tensor::value_mut on leaves.
struct Node {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;
};

using NodePtr = std::shared_ptr<Node>;

inline void ensure_grad(Node& n) {
    if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
}

// C += A·B with A m×k, B k×n, all row-major.
inline void mm_nn(const double* __restrict a, const double* __restrict b,
                  double* __restrict c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + size_t(i) * k;
        double* ci = c + size_t(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + size_t(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C += A·Bᵀ with A m×k, B n×k.
inline void mm_nt(const double* __restrict a, const double* __restrict b,
                  double* __restrict c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + size_t(i) * k;
        double* ci = c + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + size_t(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// C += Aᵀ·B with A k×m, B k×n.
inline void mm_tn(const double* __restrict a, const double* __restrict b,
                  double* __restrict c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* ap = a + size_t(p) * m;
        const double* bp = b + size_t(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = ap[i];
            double* ci = c + size_t(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

}  // namespace detail

// Dense row-major 64-bit float tensor with reverse-mode differentiation.
// A Tensor is a cheap handle onto a graph node; the graph is rebuilt every
// forward pass and freed when the handles go out of scope.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}

    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false) {
        check_shape(shape);
        if (detail::numel(shape) != data.size())
            throw ShapeError("tensor: shape " + detail::shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        if (requires_grad) n->grad.assign(n->value.size(), 0.0);
        return Tensor(std::move(n));
    }

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        check_shape(shape);
        std::vector<double> d(detail::numel(shape), 0.0);
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(std::vector<int> shape, double v, bool requires_grad = false) {
        check_shape(shape);
        std::vector<double> d(detail::numel(shape), v);
        return from_data(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(double v) { return from_data({1}, {v}); }

    bool defined() const { return n_ != nullptr; }
    const std::vector<int>& shape() const { return n_->shape; }
    int ndim() const { return int(n_->shape.size()); }
    int rows() const { return n_->shape.at(0); }
    int cols() const { return n_->shape.size() > 1 ? n_->shape[1] : 1; }
    size_t size() const { return n_->value.size(); }
    bool requires_grad() const { return n_->requires_grad; }

    const std::vector<double>& value() const { return n_->value; }
    double item() const {
        if (size() != 1) throw ShapeError("item: tensor " + detail::shape_str(shape()) + " is not scalar");
        return n_->value[0];
    }
    double at(int i) const { return n_->value[size_t(i)]; }
    double at(int i, int j) const { return n_->value[size_t(i) * cols() + j]; }

    // Leaf mutation hooks for initializers, optimizers, and finite differences.
    std::vector<double>& value_mut() { return n_->value; }

    // Leaf-only: toggling trainability (parameter freezing).
    void set_requires_grad(bool rg) {
        n_->requires_grad = rg;
        if (rg) detail::ensure_grad(*n_);
    }

    const std::vector<double>& grad() const {
        detail::ensure_grad(*n_);
        return n_->grad;
    }
    std::vector<double>& grad_mut() {
        detail::ensure_grad(*n_);
        return n_->grad;
    }
    void zero_grad() { n_->grad.assign(n_->value.size(), 0.0); }

    const detail::NodePtr& node() const { return n_; }

private:
    static void check_shape(const std::vector<int>& shape) {
        if (shape.empty()) throw ShapeError("tensor: empty shape");
        for (int d : shape)
            if (d <= 0) throw ShapeError("tensor: non-positive extent in " + detail::shape_str(shape));
    }

    detail::NodePtr n_;
};

namespace detail {

inline Tensor make_op(std::vector<int> shape, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(numel(n->shape), 0.0);
    for (auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) n->parents = std::move(parents);
    return Tensor(std::move(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd dfdx_from_x) {
    Tensor out = make_op(x.shape(), {x.node()});
    Node* o = out.node().get();
    const auto& xv = x.value();
    for (size_t i = 0; i < xv.size(); ++i) o->value[i] = fwd(xv[i]);
    if (o->requires_grad) {
        Node* xp = x.node().get();
        o->backprop = [o, xp, dfdx_from_x]() {
            for (size_t i = 0; i < o->value.size(); ++i)
                xp->grad[i] += o->grad[i] * dfdx_from_x(xp->value[i]);
        };
    }
    return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    Tensor out = detail::make_op(a.shape(), {a.node(), b.node()});
    detail::Node* o = out.node().get();
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < av.size(); ++i) o->value[i] = av[i] + bv[i];
    if (o->requires_grad) {
        detail::Node* pa = a.node().get();
        detail::Node* pb = b.node().get();
        o->backprop = [o, pa, pb]() {
            if (pa->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
            if (pb->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] += o->grad[i];
        };
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor out = detail::make_op(a.shape(), {a.node(), b.node()});
    detail::Node* o = out.node().get();
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < av.size(); ++i) o->value[i] = av[i] - bv[i];
    if (o->requires_grad) {
        detail::Node* pa = a.node().get();
        detail::Node* pb = b.node().get();
        o->backprop = [o, pa, pb]() {
            if (pa->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
            if (pb->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] -= o->grad[i];
        };
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor out = detail::make_op(a.shape(), {a.node(), b.node()});
    detail::Node* o = out.node().get();
    const auto& av = a.value();
    const auto& bv = b.value();
    for (size_t i = 0; i < av.size(); ++i) o->value[i] = av[i] * bv[i];
    if (o->requires_grad) {
        detail::Node* pa = a.node().get();
        detail::Node* pb = b.node().get();
        o->backprop = [o, pa, pb]() {
            if (pa->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i] * pb->value[i];
            if (pb->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] += o->grad[i] * pa->value[i];
        };
    }
    return out;
}

inline Tensor mul_scalar(const Tensor& x, double s) {
    return detail::unary_op(
        x, [s](double v) { return v * s; }, [s](double) { return s; });
}

inline Tensor add_scalar(const Tensor& x, double s) {
    return detail::unary_op(
        x, [s](double v) { return v + s; }, [](double) { return 1.0; });
}

inline Tensor sigmoid(const Tensor& x) {
    auto f = [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); };
    return detail::unary_op(x, f, [f](double v) {
        double s = f(v);
        return s * (1.0 - s);
    });
}

inline Tensor tanh(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double v) {
            double t = std::tanh(v);
            return 1.0 - t * t;
        });
}

inline Tensor clamp(const Tensor& x, double lo, double hi) {
    return detail::unary_op(
        x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& x) {
    return detail::unary_op(
        x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

// tanh-approximation GELU.
inline Tensor gelu(const Tensor& x) {
    constexpr double k = 0.7978845608028653558798921198687;  // sqrt(2/pi)
    constexpr double c = 0.044715;
    auto f = [](double v) {
        double inner = k * (v + c * v * v * v);
        return 0.5 * v * (1.0 + std::tanh(inner));
    };
    auto df = [](double v) {
        double inner = k * (v + c * v * v * v);
        double t = std::tanh(inner);
        double sech2 = 1.0 - t * t;
        return 0.5 * (1.0 + t) + 0.5 * v * sech2 * k * (1.0 + 3.0 * c * v * v);
    };
    return detail::unary_op(x, f, df);
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows())
        throw ShapeError("matmul: shapes " + detail::shape_str(a.shape()) + " and " +
                         detail::shape_str(b.shape()) + " are incompatible");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = detail::make_op({m, n}, {a.node(), b.node()});
    detail::Node* o = out.node().get();
    detail::mm_nn(a.value().data(), b.value().data(), o->value.data(), m, k, n);
    if (o->requires_grad) {
        detail::Node* pa = a.node().get();
        detail::Node* pb = b.node().get();
        o->backprop = [o, pa, pb, m, k, n]() {
            if (pa->requires_grad)
                detail::mm_nt(o->grad.data(), pb->value.data(), pa->grad.data(), m, n, k);
            if (pb->requires_grad)
                detail::mm_tn(pa->value.data(), o->grad.data(), pb->grad.data(), k, m, n);
        };
    }
    return out;
}

// a·bᵀ with a m×k, b n×k.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols())
        throw ShapeError("matmul_nt: shapes " + detail::shape_str(a.shape()) + " and " +
                         detail::shape_str(b.shape()) + " are incompatible");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Tensor out = detail::make_op({m, n}, {a.node(), b.node()});
    detail::Node* o = out.node().get();
    detail::mm_nt(a.value().data(), b.value().data(), o->value.data(), m, k, n);
    if (o->requires_grad) {
        detail::Node* pa = a.node().get();
        detail::Node* pb = b.node().get();
        o->backprop = [o, pa, pb, m, k, n]() {
            if (pa->requires_grad)
                detail::mm_nn(o->grad.data(), pb->value.data(), pa->grad.data(), m, n, k);
            if (pb->requires_grad)
                detail::mm_tn(o->grad.data(), pa->value.data(), pb->grad.data(), n, m, k);
        };
    }
    return out;
}

// a + b broadcast over rows; a M×N, b length-N vector (or 1×N).
inline Tensor add_row(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.size() != size_t(a.cols()))
        throw ShapeError("add_row: shapes " + detail::shape_str(a.shape()) + " and " +
                         detail::shape_str(b.shape()) + " are incompatible");
    const int m = a.rows(), n = a.cols();
    Tensor out = detail::make_op(a.shape(), {a.node(), b.node()});
    detail::Node* o = out.node().get();
    const auto& av = a.value();
    const auto& bv = b.value();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) o->value[size_t(i) * n + j] = av[size_t(i) * n + j] + bv[j];
    if (o->requires_grad) {
        detail::Node* pa = a.node().get();
        detail::Node* pb = b.node().get();
        o->backprop = [o, pa, pb, m, n]() {
            if (pa->requires_grad)
                for (size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i];
            if (pb->requires_grad)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) pb->grad[j] += o->grad[size_t(i) * n + j];
        };
    }
    return out;
}

// out[i,j] = a[i] + b[j]; a length-M, b length-N.
inline Tensor outer_add(const Tensor& a, const Tensor& b) {
    const int m = int(a.size()), n = int(b.size());
    Tensor out = detail::make_op({m, n}, {a.node(), b.node()});
    detail::Node* o = out.node().get();
    const auto& av = a.value();
    const auto& bv = b.value();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) o->value[size_t(i) * n + j] = av[i] + bv[j];
    if (o->requires_grad) {
        detail::Node* pa = a.node().get();
        detail::Node* pb = b.node().get();
        o->backprop = [o, pa, pb, m, n]() {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    double g = o->grad[size_t(i) * n + j];
                    if (pa->requires_grad) pa->grad[i] += g;
                    if (pb->requires_grad) pb->grad[j] += g;
                }
        };
    }
    return out;
}

inline Tensor transpose(const Tensor& x) {
    if (x.ndim() != 2) throw ShapeError("transpose: need a 2-D tensor");
    const int m = x.rows(), n = x.cols();
    Tensor out = detail::make_op({n, m}, {x.node()});
    detail::Node* o = out.node().get();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) o->value[size_t(j) * m + i] = x.value()[size_t(i) * n + j];
    if (o->requires_grad) {
        detail::Node* px = x.node().get();
        o->backprop = [o, px, m, n]() {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) px->grad[size_t(i) * n + j] += o->grad[size_t(j) * m + i];
        };
    }
    return out;
}

// Column j of a 2-D tensor as a length-M vector.
inline Tensor col(const Tensor& x, int j) {
    if (x.ndim() != 2 || j < 0 || j >= x.cols())
        throw ShapeError("col: index " + std::to_string(j) + " out of range for " +
                         detail::shape_str(x.shape()));
    const int m = x.rows(), n = x.cols();
    Tensor out = detail::make_op({m}, {x.node()});
    detail::Node* o = out.node().get();
    for (int i = 0; i < m; ++i) o->value[i] = x.value()[size_t(i) * n + j];
    if (o->requires_grad) {
        detail::Node* px = x.node().get();
        o->backprop = [o, px, m, n, j]() {
            for (int i = 0; i < m; ++i) px->grad[size_t(i) * n + j] += o->grad[i];
        };
    }
    return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const int m = parts[0].rows();
    int total = 0;
    std::vector<detail::NodePtr> parents;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.rows() != m)
            throw ShapeError("concat_cols: row mismatch at " + detail::shape_str(p.shape()));
        total += p.cols();
        parents.push_back(p.node());
    }
    Tensor out = detail::make_op({m, total}, parents);
    detail::Node* o = out.node().get();
    int off = 0;
    for (const auto& p : parts) {
        const int n = p.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                o->value[size_t(i) * total + off + j] = p.value()[size_t(i) * n + j];
        off += n;
    }
    if (o->requires_grad) {
        std::vector<detail::Node*> ps;
        std::vector<int> widths;
        for (const auto& p : parts) {
            ps.push_back(p.node().get());
            widths.push_back(p.cols());
        }
        o->backprop = [o, ps, widths, m, total]() {
            int off = 0;
            for (size_t t = 0; t < ps.size(); ++t) {
                const int n = widths[t];
                if (ps[t]->requires_grad)
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < n; ++j)
                            ps[t]->grad[size_t(i) * n + j] += o->grad[size_t(i) * total + off + j];
                off += n;
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
    Tensor out = detail::make_op({1}, {x.node()});
    detail::Node* o = out.node().get();
    double s = 0.0;
    for (double v : x.value()) s += v;
    o->value[0] = s;
    if (o->requires_grad) {
        detail::Node* px = x.node().get();
        o->backprop = [o, px]() {
            for (size_t i = 0; i < px->grad.size(); ++i) px->grad[i] += o->grad[0];
        };
    }
    return out;
}

// axis 0: column sums (1×N); axis 1: row sums (M×1).
inline Tensor sum_axis(const Tensor& x, int axis) {
    if (x.ndim() != 2 || (axis != 0 && axis != 1))
        throw ShapeError("sum_axis: need a 2-D tensor and axis 0 or 1");
    const int m = x.rows(), n = x.cols();
    std::vector<int> shape = axis == 0 ? std::vector<int>{1, n} : std::vector<int>{m, 1};
    Tensor out = detail::make_op(shape, {x.node()});
    detail::Node* o = out.node().get();
    const auto& xv = x.value();
    if (axis == 0) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) o->value[j] += xv[size_t(i) * n + j];
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) o->value[i] += xv[size_t(i) * n + j];
    }
    if (o->requires_grad) {
        detail::Node* px = x.node().get();
        o->backprop = [o, px, m, n, axis]() {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    px->grad[size_t(i) * n + j] += o->grad[axis == 0 ? j : i];
        };
    }
    return out;
}

inline Tensor mean_rows(const Tensor& x) { return mul_scalar(sum_axis(x, 0), 1.0 / x.rows()); }

// ---------------------------------------------------------------------------
// normalization ops
// ---------------------------------------------------------------------------

// Max-stabilized softmax along the given axis of a 2-D tensor.
inline Tensor softmax(const Tensor& x, int axis) {
    if (x.ndim() != 2 || (axis != 0 && axis != 1))
        throw ShapeError("softmax: need a 2-D tensor and axis 0 or 1");
    const int m = x.rows(), n = x.cols();
    Tensor out = detail::make_op(x.shape(), {x.node()});
    detail::Node* o = out.node().get();
    const auto& xv = x.value();
    const int slices = axis == 0 ? n : m;
    const int len = axis == 0 ? m : n;
    const size_t stride = axis == 0 ? size_t(n) : 1;
    for (int s = 0; s < slices; ++s) {
        const size_t base = axis == 0 ? size_t(s) : size_t(s) * n;
        double mx = -1e308;
        for (int t = 0; t < len; ++t) mx = std::max(mx, xv[base + t * stride]);
        double denom = 0.0;
        for (int t = 0; t < len; ++t) {
            double e = std::exp(xv[base + t * stride] - mx);
            o->value[base + t * stride] = e;
            denom += e;
        }
        for (int t = 0; t < len; ++t) o->value[base + t * stride] /= denom;
    }
    if (o->requires_grad) {
        detail::Node* px = x.node().get();
        o->backprop = [o, px, m, n, axis]() {
            const int slices = axis == 0 ? n : m;
            const int len = axis == 0 ? m : n;
            const size_t stride = axis == 0 ? size_t(n) : 1;
            for (int s = 0; s < slices; ++s) {
                const size_t base = axis == 0 ? size_t(s) : size_t(s) * n;
                double dot = 0.0;
                for (int t = 0; t < len; ++t)
                    dot += o->grad[base + t * stride] * o->value[base + t * stride];
                for (int t = 0; t < len; ++t) {
                    const size_t idx = base + t * stride;
                    px->grad[idx] += o->value[idx] * (o->grad[idx] - dot);
                }
            }
        };
    }
    return out;
}

// Per-row layer normalization with affine; population variance, axis must be
// the feature (last) axis of a 2-D tensor.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int axis = 1,
                         double eps = 1e-5) {
    if (x.ndim() != 2) throw ShapeError("layer_norm: need a 2-D tensor");
    if (axis != 1 && axis != -1) throw ShapeError("layer_norm: only the feature axis is supported");
    const int m = x.rows(), n = x.cols();
    if (n == 0) throw ShapeError("layer_norm: zero-length axis");
    if (gamma.size() != size_t(n) || beta.size() != size_t(n))
        throw ShapeError("layer_norm: affine shape mismatch with " + detail::shape_str(x.shape()));
    if (eps <= 0) throw NumericError("layer_norm: eps must be positive");
    Tensor out = detail::make_op(x.shape(), {x.node(), gamma.node(), beta.node()});
    detail::Node* o = out.node().get();
    const auto& xv = x.value();
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    for (int i = 0; i < m; ++i) {
        const double* xi = xv.data() + size_t(i) * n;
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += xi[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        double* oi = o->value.data() + size_t(i) * n;
        for (int j = 0; j < n; ++j) oi[j] = gv[j] * (xi[j] - mean) * inv + bv[j];
    }
    if (o->requires_grad) {
        detail::Node* px = x.node().get();
        detail::Node* pg = gamma.node().get();
        detail::Node* pb = beta.node().get();
        o->backprop = [o, px, pg, pb, m, n, eps]() {
            std::vector<double> xhat(n);
            for (int i = 0; i < m; ++i) {
                const double* xi = px->value.data() + size_t(i) * n;
                const double* doi = o->grad.data() + size_t(i) * n;
                double mean = 0.0;
                for (int j = 0; j < n; ++j) mean += xi[j];
                mean /= n;
                double var = 0.0;
                for (int j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
                var /= n;
                const double inv = 1.0 / std::sqrt(var + eps);
                for (int j = 0; j < n; ++j) xhat[j] = (xi[j] - mean) * inv;
                if (pb->requires_grad)
                    for (int j = 0; j < n; ++j) pb->grad[j] += doi[j];
                if (pg->requires_grad)
                    for (int j = 0; j < n; ++j) pg->grad[j] += doi[j] * xhat[j];
                if (px->requires_grad) {
                    double mg = 0.0, mgx = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double g = doi[j] * pg->value[j];
                        mg += g;
                        mgx += g * xhat[j];
                    }
                    mg /= n;
                    mgx /= n;
                    for (int j = 0; j < n; ++j) {
                        const double g = doi[j] * pg->value[j];
                        px->grad[size_t(i) * n + j] += (g - mg - xhat[j] * mgx) * inv;
                    }
                }
            }
        };
    }
    return out;
}

// L1 row normalization with a vanishing-row guard: each row is divided by
// max(row_sum, eps). Rows are assumed nonnegative (softmax outputs).
inline Tensor row_l1_normalize(const Tensor& x, double eps = 1e-8) {
    if (x.ndim() != 2) throw ShapeError("row_l1_normalize: need a 2-D tensor");
    const int m = x.rows(), n = x.cols();
    Tensor out = detail::make_op(x.shape(), {x.node()});
    detail::Node* o = out.node().get();
    const auto& xv = x.value();
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += xv[size_t(i) * n + j];
        const double denom = std::max(s, eps);
        for (int j = 0; j < n; ++j) o->value[size_t(i) * n + j] = xv[size_t(i) * n + j] / denom;
    }
    if (o->requires_grad) {
        detail::Node* px = x.node().get();
        o->backprop = [o, px, m, n, eps]() {
            for (int i = 0; i < m; ++i) {
                const double* xi = px->value.data() + size_t(i) * n;
                const double* doi = o->grad.data() + size_t(i) * n;
                const double* oi = o->value.data() + size_t(i) * n;
                double s = 0.0;
                for (int j = 0; j < n; ++j) s += xi[j];
                if (s > eps) {
                    double dot = 0.0;
                    for (int j = 0; j < n; ++j) dot += doi[j] * oi[j];
                    for (int j = 0; j < n; ++j)
                        px->grad[size_t(i) * n + j] += (doi[j] - dot) / s;
                } else {
                    for (int j = 0; j < n; ++j) px->grad[size_t(i) * n + j] += doi[j] / eps;
                }
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// stochastic / loss ops
// ---------------------------------------------------------------------------

// Inverted dropout; caller applies only in training mode.
inline Tensor dropout(const Tensor& x, double p, Rng& rng) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw NumericError("dropout: p must be < 1");
    const double keep = 1.0 - p;
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    Tensor out = detail::make_op(x.shape(), {x.node()});
    detail::Node* o = out.node().get();
    const auto& xv = x.value();
    for (size_t i = 0; i < xv.size(); ++i) o->value[i] = xv[i] * mask[i];
    if (o->requires_grad) {
        detail::Node* px = x.node().get();
        o->backprop = [o, px, mask = std::move(mask)]() {
            for (size_t i = 0; i < o->grad.size(); ++i) px->grad[i] += o->grad[i] * mask[i];
        };
    }
    return out;
}

// Mean binary cross-entropy over C logits in the numerically stable logit
// form; logits are clamped to ±clamp before the loss (gradient is zero
// outside the clamp).
inline Tensor bce_with_logits_mean(const Tensor& logits, const std::vector<double>& y,
                                   double clamp = 30.0) {
    if (logits.size() != y.size())
        throw ShapeError("bce_with_logits_mean: " + std::to_string(logits.size()) + " logits vs " +
                         std::to_string(y.size()) + " labels");
    const int c = int(y.size());
    Tensor out = detail::make_op({1}, {logits.node()});
    detail::Node* o = out.node().get();
    double total = 0.0;
    for (int i = 0; i < c; ++i) {
        double z = std::clamp(logits.value()[i], -clamp, clamp);
        total += std::max(z, 0.0) - z * y[i] + std::log1p(std::exp(-std::abs(z)));
    }
    o->value[0] = total / c;
    if (o->requires_grad) {
        detail::Node* pl = logits.node().get();
        o->backprop = [o, pl, y, c, clamp]() {
            for (int i = 0; i < c; ++i) {
                const double raw = pl->value[i];
                if (raw <= -clamp || raw >= clamp) continue;
                const double s = 1.0 / (1.0 + std::exp(-raw));
                pl->grad[i] += o->grad[0] * (s - y[i]) / c;
            }
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// backward + gradient checking
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
    detail::Node* root = loss.node().get();
    if (loss.size() != 1)
        throw ShapeError("backward: loss " + detail::shape_str(loss.shape()) + " is not scalar");
    if (!root->requires_grad) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            detail::Node* p = n->parents[i++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (detail::Node* n : order) detail::ensure_grad(*n);
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop();
}

inline void zero_grads(const std::vector<Tensor>& params) {
    for (auto& p : params) const_cast<Tensor&>(p).zero_grad();
}

// Central-difference check of d f / d params. Returns the max over sampled
// coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                         double h = 1e-5, int max_coords_per_param = 0, Rng* coord_rng = nullptr) {
    if (!(h >= 1e-7 && h <= 1e-3)) throw NumericError("grad_check: h outside [1e-7, 1e-3]");
    zero_grads(params);
    Tensor y = f();
    if (!std::isfinite(y.item())) throw NumericError("grad_check: non-finite objective");
    backward(y);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p.grad());

    Rng fallback(0x9dc5);
    Rng& rng = coord_rng ? *coord_rng : fallback;
    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].value_mut();
        std::vector<size_t> coords;
        if (max_coords_per_param > 0 && vals.size() > size_t(max_coords_per_param)) {
            for (int t = 0; t < max_coords_per_param; ++t)
                coords.push_back(size_t(rng.uniform_int(vals.size())));
        } else {
            coords.resize(vals.size());
            for (size_t i = 0; i < vals.size(); ++i) coords[i] = i;
        }
        for (size_t ci : coords) {
            const double orig = vals[ci];
            vals[ci] = orig + h;
            const double up = f().item();
            vals[ci] = orig - h;
            const double dn = f().item();
            vals[ci] = orig;
            if (!std::isfinite(up) || !std::isfinite(dn))
                throw NumericError("grad_check: non-finite objective");
            const double numeric = (up - dn) / (2.0 * h);
            const double a = analytic[pi][ci];
            const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// gated recurrent unit
// ---------------------------------------------------------------------------

// Standard update/reset/candidate gates, input size == hidden size.
struct GruParams {
    Tensor Wz, Uz, bz;
    Tensor Wr, Ur, br;
    Tensor Wh, Uh, bh;

    static GruParams init(int dim, Rng& rng, double scale) {
        auto mat = [&](void) {
            std::vector<double> d(size_t(dim) * dim);
            for (auto& v : d) v = rng.normal() * scale;
            return Tensor::from_data({dim, dim}, std::move(d), true);
        };
        GruParams p;
        p.Wz = mat(); p.Uz = mat(); p.bz = Tensor::zeros({dim}, true);
        p.Wr = mat(); p.Ur = mat(); p.br = Tensor::zeros({dim}, true);
        p.Wh = mat(); p.Uh = mat(); p.bh = Tensor::zeros({dim}, true);
        return p;
    }

    std::vector<Tensor> params() const { return {Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh}; }
};

// h' = (1-z)⊙h + z⊙h_cand, gates applied row-wise on K×D inputs.
inline Tensor gru_cell(const Tensor& u, const Tensor& h, const GruParams& p) {
    detail::check_same_shape(u, h, "gru_cell");
    Tensor z = sigmoid(add_row(add(matmul(u, p.Wz), matmul(h, p.Uz)), p.bz));
    Tensor r = sigmoid(add_row(add(matmul(u, p.Wr), matmul(h, p.Ur)), p.br));
    Tensor cand = tanh(add_row(add(matmul(u, p.Wh), matmul(mul(r, h), p.Uh)), p.bh));
    Tensor one_minus_z = add_scalar(mul_scalar(z, -1.0), 1.0);
    return add(mul(one_minus_z, h), mul(z, cand));
}

}  // namespace bislot
