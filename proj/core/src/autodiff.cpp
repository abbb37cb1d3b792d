#include "powercast/autodiff.hpp"

#include "powercast/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace powercast::autodiff {

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    std::uint64_t seq = 0;

    std::size_t numel() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

} // namespace detail

using detail::Node;

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool g_grad_enabled = true;

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
    return node;
}

[[noreturn]] void shape_mismatch(const std::string& op, const Shape& a, const Shape& b) {
    throw ShapeError(op + ": incompatible shapes " + shape_to_string(a) + " and " +
                     shape_to_string(b));
}

} // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ')';
    return out.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

class OpBuilder {
public:
    static Tensor make(Shape shape, std::vector<double> values,
                       std::initializer_list<Tensor> parents,
                       std::function<void(Node&)> backward_fn) {
        if (shape_numel(shape) != values.size()) {
            throw ShapeError("op result: " + std::to_string(values.size()) +
                             " values for shape " + shape_to_string(shape));
        }
        auto node = new_node(std::move(shape), std::move(values));
        bool needs = false;
        for (const Tensor& p : parents) needs = needs || p.requires_grad();
        if (g_grad_enabled && needs) {
            node->requires_grad = true;
            for (const Tensor& p : parents) node->parents.push_back(p.node_);
            node->backward_fn = std::move(backward_fn);
        }
        return Tensor(std::move(node));
    }

    static Tensor make_from_node(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }
    static Node& node(const Tensor& t) { return *t.node_; }
    static std::shared_ptr<Node> node_ptr(const Tensor& t) { return t.node_; }
};

namespace {
Node& node_of(const Tensor& t) {
    if (!t.defined()) throw UsageError("operation on an undefined tensor");
    return OpBuilder::node(t);
}
} // namespace

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                         " values for shape " + shape_to_string(shape));
    }
    auto node = new_node(std::move(shape), std::move(values));
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> values(shape_numel(shape), 0.0);
    return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
    std::vector<double> values(shape_numel(shape), value);
    return from(std::move(shape), std::move(values), false);
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

const Shape& Tensor::shape() const { return node_of(*this).shape; }
std::size_t Tensor::numel() const { return node_of(*this).numel(); }
std::size_t Tensor::rank() const { return node_of(*this).shape.size(); }
const std::vector<double>& Tensor::values() const { return node_of(*this).values; }
std::vector<double>& Tensor::mutable_values() { return node_of(*this).values; }

double Tensor::item() const {
    const Node& n = node_of(*this);
    if (n.numel() != 1) {
        throw UsageError("item() requires a scalar tensor, got shape " +
                         shape_to_string(n.shape));
    }
    return n.values[0];
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }
bool Tensor::has_grad() const { return !node_of(*this).grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    const Node& n = node_of(*this);
    if (n.grad.empty()) throw UsageError("tensor has no gradient; run backward() first");
    return n.grad;
}

void Tensor::zero_grad() {
    Node& n = node_of(*this);
    if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

std::uint64_t Tensor::id() const { return node_of(*this).seq; }

// ---------------------------------------------------------------------------
// Broadcasting machinery
// ---------------------------------------------------------------------------

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1) shape_mismatch("broadcast", a, b);
        out[i] = std::max(da, db);
    }
    return out;
}

/// Per-out-axis element strides into an operand (0 where the operand broadcasts).
std::vector<std::size_t> broadcast_strides(const Shape& out, const Shape& in) {
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t axis_in = in.size() - 1 - i;
        const std::size_t axis_out = out.size() - 1 - i;
        strides[axis_out] = in[axis_in] == 1 ? 0 : stride;
        stride *= in[axis_in];
    }
    return strides;
}

template <typename Fn>
std::vector<double> broadcast_apply(const std::vector<double>& av, const Shape& ash,
                                    const std::vector<double>& bv, const Shape& bsh,
                                    const Shape& out, Fn&& fn) {
    std::vector<double> result(shape_numel(out));
    if (ash == bsh) {
        for (std::size_t i = 0; i < result.size(); ++i) result[i] = fn(av[i], bv[i]);
        return result;
    }
    if (bv.size() == 1 && out == ash) {
        const double b0 = bv[0];
        for (std::size_t i = 0; i < result.size(); ++i) result[i] = fn(av[i], b0);
        return result;
    }
    if (av.size() == 1 && out == bsh) {
        const double a0 = av[0];
        for (std::size_t i = 0; i < result.size(); ++i) result[i] = fn(a0, bv[i]);
        return result;
    }
    // Trailing broadcast (e.g. bias over (B,T,F)+(F)) and the general case.
    if (out == ash && bv.size() != 0 && result.size() % bv.size() == 0) {
        bool pure_suffix = true;
        std::size_t check = 1;
        for (std::size_t i = 0; i < bsh.size(); ++i) {
            const std::size_t axis_out = out.size() - 1 - i;
            const std::size_t axis_in = bsh.size() - 1 - i;
            if (bsh[axis_in] != out[axis_out]) pure_suffix = false;
            check *= bsh[axis_in];
        }
        if (pure_suffix && check == bv.size()) {
            const std::size_t tile = bv.size();
            for (std::size_t i = 0; i < result.size(); ++i) result[i] = fn(av[i], bv[i % tile]);
            return result;
        }
    }
    const std::vector<std::size_t> astr = broadcast_strides(out, ash);
    const std::vector<std::size_t> bstr = broadcast_strides(out, bsh);
    std::vector<std::size_t> idx(out.size(), 0);
    std::size_t aoff = 0, boff = 0;
    for (std::size_t i = 0; i < result.size(); ++i) {
        result[i] = fn(av[aoff], bv[boff]);
        for (std::size_t axis = out.size(); axis-- > 0;) {
            ++idx[axis];
            aoff += astr[axis];
            boff += bstr[axis];
            if (idx[axis] < out[axis]) break;
            aoff -= astr[axis] * out[axis];
            boff -= bstr[axis] * out[axis];
            idx[axis] = 0;
        }
    }
    return result;
}

/// Sum `full` (of shape `from`) into the broadcast-reduced shape `to`.
void reduce_into(const std::vector<double>& full, const Shape& from, const Shape& to,
                 std::vector<double>& target) {
    if (from == to) {
        for (std::size_t i = 0; i < full.size(); ++i) target[i] += full[i];
        return;
    }
    const std::vector<std::size_t> tstr = broadcast_strides(from, to);
    std::vector<std::size_t> idx(from.size(), 0);
    std::size_t toff = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        target[toff] += full[i];
        for (std::size_t axis = from.size(); axis-- > 0;) {
            ++idx[axis];
            toff += tstr[axis];
            if (idx[axis] < from[axis]) break;
            toff -= tstr[axis] * from[axis];
            idx[axis] = 0;
        }
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Element-wise binary ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    const Node& an = node_of(a);
    const Node& bn = node_of(b);
    Shape out = broadcast_shape(an.shape, bn.shape);
    auto values = broadcast_apply(an.values, an.shape, bn.values, bn.shape, out,
                                  [](double x, double y) { return x + y; });
    Shape out_copy = out;
    return OpBuilder::make(std::move(out), std::move(values), {a, b},
                           [out_copy](Node& self) {
                               Node& pa = *self.parents[0];
                               Node& pb = *self.parents[1];
                               if (pa.requires_grad) {
                                   pa.ensure_grad();
                                   reduce_into(self.grad, out_copy, pa.shape, pa.grad);
                               }
                               if (pb.requires_grad) {
                                   pb.ensure_grad();
                                   reduce_into(self.grad, out_copy, pb.shape, pb.grad);
                               }
                           });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const Node& an = node_of(a);
    const Node& bn = node_of(b);
    Shape out = broadcast_shape(an.shape, bn.shape);
    auto values = broadcast_apply(an.values, an.shape, bn.values, bn.shape, out,
                                  [](double x, double y) { return x - y; });
    Shape out_copy = out;
    return OpBuilder::make(std::move(out), std::move(values), {a, b},
                           [out_copy](Node& self) {
                               Node& pa = *self.parents[0];
                               Node& pb = *self.parents[1];
                               if (pa.requires_grad) {
                                   pa.ensure_grad();
                                   reduce_into(self.grad, out_copy, pa.shape, pa.grad);
                               }
                               if (pb.requires_grad) {
                                   pb.ensure_grad();
                                   std::vector<double> neg(self.grad.size());
                                   for (std::size_t i = 0; i < neg.size(); ++i)
                                       neg[i] = -self.grad[i];
                                   reduce_into(neg, out_copy, pb.shape, pb.grad);
                               }
                           });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const Node& an = node_of(a);
    const Node& bn = node_of(b);
    Shape out = broadcast_shape(an.shape, bn.shape);
    auto values = broadcast_apply(an.values, an.shape, bn.values, bn.shape, out,
                                  [](double x, double y) { return x * y; });
    Shape out_copy = out;
    return OpBuilder::make(
        std::move(out), std::move(values), {a, b}, [out_copy](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                auto full = broadcast_apply(self.grad, out_copy, pb.values, pb.shape,
                                            out_copy, [](double g, double y) { return g * y; });
                reduce_into(full, out_copy, pa.shape, pa.grad);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                auto full = broadcast_apply(self.grad, out_copy, pa.values, pa.shape,
                                            out_copy, [](double g, double x) { return g * x; });
                reduce_into(full, out_copy, pb.shape, pb.grad);
            }
        });
}

Tensor scale(const Tensor& a, double factor) {
    const Node& an = node_of(a);
    std::vector<double> values(an.numel());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = an.values[i] * factor;
    return OpBuilder::make(an.shape, std::move(values), {a}, [factor](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += factor * self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// Unary element-wise ops
// ---------------------------------------------------------------------------

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Tensor sigmoid(const Tensor& a) {
    const Node& an = node_of(a);
    std::vector<double> values(an.numel());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = stable_sigmoid(an.values[i]);
    return OpBuilder::make(an.shape, std::move(values), {a}, [](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.values[i];
            pa.grad[i] += self.grad[i] * y * (1.0 - y);
        }
    });
}

Tensor tanh(const Tensor& a) {
    const Node& an = node_of(a);
    std::vector<double> values(an.numel());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::tanh(an.values[i]);
    return OpBuilder::make(an.shape, std::move(values), {a}, [](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.values[i];
            pa.grad[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

Tensor relu(const Tensor& a) {
    const Node& an = node_of(a);
    std::vector<double> values(an.numel());
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = an.values[i] > 0.0 ? an.values[i] : 0.0;
    return OpBuilder::make(an.shape, std::move(values), {a}, [](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.values[i] > 0.0) pa.grad[i] += self.grad[i];
        }
    });
}

Tensor sin(const Tensor& a) {
    const Node& an = node_of(a);
    std::vector<double> values(an.numel());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::sin(an.values[i]);
    return OpBuilder::make(an.shape, std::move(values), {a}, [](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            pa.grad[i] += self.grad[i] * std::cos(pa.values[i]);
    });
}

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Node& an = node_of(a);
    const Node& bn = node_of(b);
    const Shape& ash = an.shape;
    const Shape& bsh = bn.shape;

    if (ash.size() == 2 && bsh.size() == 2) {
        if (ash[1] != bsh[0]) shape_mismatch("matmul", ash, bsh);
        const std::size_t m = ash[0], k = ash[1], n = bsh[1];
        std::vector<double> values(m * n);
        MapC A(an.values.data(), m, k);
        MapC B(bn.values.data(), k, n);
        MapM C(values.data(), m, n);
        C.noalias() = A * B;
        return OpBuilder::make({m, n}, std::move(values), {a, b}, [m, k, n](Node& self) {
            Node& pa = *self.parents[0];
            Node& pb = *self.parents[1];
            MapC dC(self.grad.data(), m, n);
            if (pa.requires_grad) {
                pa.ensure_grad();
                MapC B(pb.values.data(), k, n);
                MapM dA(pa.grad.data(), m, k);
                dA.noalias() += dC * B.transpose();
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                MapC A(pa.values.data(), m, k);
                MapM dB(pb.grad.data(), k, n);
                dB.noalias() += A.transpose() * dC;
            }
        });
    }

    if (ash.size() == 3 && bsh.size() == 2) {
        if (ash[2] != bsh[0]) shape_mismatch("matmul", ash, bsh);
        const std::size_t batch = ash[0], m = ash[1], k = ash[2], n = bsh[1];
        std::vector<double> values(batch * m * n);
        MapC A(an.values.data(), batch * m, k);
        MapC B(bn.values.data(), k, n);
        MapM C(values.data(), batch * m, n);
        C.noalias() = A * B;
        return OpBuilder::make({batch, m, n}, std::move(values), {a, b},
                               [batch, m, k, n](Node& self) {
                                   Node& pa = *self.parents[0];
                                   Node& pb = *self.parents[1];
                                   MapC dC(self.grad.data(), batch * m, n);
                                   if (pa.requires_grad) {
                                       pa.ensure_grad();
                                       MapC B(pb.values.data(), k, n);
                                       MapM dA(pa.grad.data(), batch * m, k);
                                       dA.noalias() += dC * B.transpose();
                                   }
                                   if (pb.requires_grad) {
                                       pb.ensure_grad();
                                       MapC A(pa.values.data(), batch * m, k);
                                       MapM dB(pb.grad.data(), k, n);
                                       dB.noalias() += A.transpose() * dC;
                                   }
                               });
    }

    if (ash.size() == 3 && bsh.size() == 3) {
        if (ash[0] != bsh[0] || ash[2] != bsh[1]) shape_mismatch("matmul", ash, bsh);
        const std::size_t batch = ash[0], m = ash[1], k = ash[2], n = bsh[2];
        std::vector<double> values(batch * m * n);
        for (std::size_t i = 0; i < batch; ++i) {
            MapC A(an.values.data() + i * m * k, m, k);
            MapC B(bn.values.data() + i * k * n, k, n);
            MapM C(values.data() + i * m * n, m, n);
            C.noalias() = A * B;
        }
        return OpBuilder::make(
            {batch, m, n}, std::move(values), {a, b}, [batch, m, k, n](Node& self) {
                Node& pa = *self.parents[0];
                Node& pb = *self.parents[1];
                if (pa.requires_grad) pa.ensure_grad();
                if (pb.requires_grad) pb.ensure_grad();
                for (std::size_t i = 0; i < batch; ++i) {
                    MapC dC(self.grad.data() + i * m * n, m, n);
                    if (pa.requires_grad) {
                        MapC B(pb.values.data() + i * k * n, k, n);
                        MapM dA(pa.grad.data() + i * m * k, m, k);
                        dA.noalias() += dC * B.transpose();
                    }
                    if (pb.requires_grad) {
                        MapC A(pa.values.data() + i * m * k, m, k);
                        MapM dB(pb.grad.data() + i * k * n, k, n);
                        dB.noalias() += A.transpose() * dC;
                    }
                }
            });
    }

    shape_mismatch("matmul", ash, bsh);
}

Tensor transpose_last(const Tensor& a) {
    const Node& an = node_of(a);
    const Shape& sh = an.shape;
    if (sh.size() < 2) {
        throw ShapeError("transpose_last requires rank >= 2, got " + shape_to_string(sh));
    }
    const std::size_t m = sh[sh.size() - 2], n = sh[sh.size() - 1];
    const std::size_t batch = an.numel() / (m * n);
    Shape out = sh;
    std::swap(out[out.size() - 2], out[out.size() - 1]);
    std::vector<double> values(an.numel());
    for (std::size_t b = 0; b < batch; ++b) {
        const double* src = an.values.data() + b * m * n;
        double* dst = values.data() + b * m * n;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    }
    return OpBuilder::make(std::move(out), std::move(values), {a}, [batch, m, n](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t b = 0; b < batch; ++b) {
            const double* g = self.grad.data() + b * m * n;
            double* dst = pa.grad.data() + b * m * n;
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t i = 0; i < m; ++i) dst[i * n + j] += g[j * m + i];
        }
    });
}

// ---------------------------------------------------------------------------
// Softmax / layer norm / dropout
// ---------------------------------------------------------------------------

Tensor softmax_lastdim(const Tensor& a) {
    const Node& an = node_of(a);
    if (an.shape.empty()) throw ShapeError("softmax_lastdim on rank-0 tensor");
    const std::size_t dim = an.shape.back();
    const std::size_t rows = an.numel() / dim;
    std::vector<double> values(an.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = an.values.data() + r * dim;
        double* y = values.data() + r * dim;
        double mx = x[0];
        for (std::size_t i = 1; i < dim; ++i) mx = std::max(mx, x[i]);
        double sum = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += y[i];
        }
        const double inv = 1.0 / sum;
        for (std::size_t i = 0; i < dim; ++i) y[i] *= inv;
    }
    return OpBuilder::make(an.shape, std::move(values), {a}, [rows, dim](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.values.data() + r * dim;
            const double* dy = self.grad.data() + r * dim;
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += dy[i] * y[i];
            double* dx = pa.grad.data() + r * dim;
            for (std::size_t i = 0; i < dim; ++i) dx[i] += y[i] * (dy[i] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, double epsilon) {
    const Node& xn = node_of(x);
    if (xn.shape.empty()) throw ShapeError("layer_norm on rank-0 tensor");
    const std::size_t dim = xn.shape.back();
    const std::size_t rows = xn.numel() / dim;
    std::vector<double> values(xn.numel());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* v = xn.values.data() + r * dim;
        double mean = 0.0;
        for (std::size_t i = 0; i < dim; ++i) mean += v[i];
        mean /= static_cast<double>(dim);
        double var = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = v[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(dim);
        const double inv = 1.0 / std::sqrt(var + epsilon);
        inv_std[r] = inv;
        double* y = values.data() + r * dim;
        for (std::size_t i = 0; i < dim; ++i) y[i] = (v[i] - mean) * inv;
    }
    return OpBuilder::make(
        xn.shape, std::move(values), {x},
        [rows, dim, inv_std = std::move(inv_std)](Node& self) {
            Node& pa = *self.parents[0];
            if (!pa.requires_grad) return;
            pa.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = self.values.data() + r * dim;
                const double* dy = self.grad.data() + r * dim;
                double mean_dy = 0.0, mean_dyy = 0.0;
                for (std::size_t i = 0; i < dim; ++i) {
                    mean_dy += dy[i];
                    mean_dyy += dy[i] * y[i];
                }
                mean_dy /= static_cast<double>(dim);
                mean_dyy /= static_cast<double>(dim);
                double* dx = pa.grad.data() + r * dim;
                for (std::size_t i = 0; i < dim; ++i)
                    dx[i] += inv_std[r] * (dy[i] - mean_dy - y[i] * mean_dyy);
            }
        });
}

Tensor dropout(const Tensor& x, const std::vector<double>& mask, double keep_prob) {
    const Node& xn = node_of(x);
    if (mask.size() != xn.numel()) {
        throw ShapeError("dropout mask size " + std::to_string(mask.size()) +
                         " does not match tensor " + shape_to_string(xn.shape));
    }
    if (keep_prob <= 0.0 || keep_prob > 1.0) {
        throw UsageError("dropout keep probability must lie in (0, 1]");
    }
    std::vector<double> scaled(mask.size());
    const double inv = 1.0 / keep_prob;
    for (std::size_t i = 0; i < mask.size(); ++i) scaled[i] = mask[i] * inv;
    std::vector<double> values(xn.numel());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = xn.values[i] * scaled[i];
    return OpBuilder::make(xn.shape, std::move(values), {x},
                           [scaled = std::move(scaled)](Node& self) {
                               Node& pa = *self.parents[0];
                               if (!pa.requires_grad) return;
                               pa.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                   pa.grad[i] += self.grad[i] * scaled[i];
                           });
}

std::vector<double> dropout_mask(std::size_t size, double keep_prob, std::mt19937_64& rng) {
    std::vector<double> mask(size);
    for (std::size_t i = 0; i < size; ++i) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        mask[i] = u < keep_prob ? 1.0 : 0.0;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

Tensor conv1d(const Tensor& x, const Tensor& w, ConvPadding padding) {
    const Node& xn = node_of(x);
    const Node& wn = node_of(w);
    if (xn.shape.size() != 3 || wn.shape.size() != 3) {
        shape_mismatch("conv1d expects x(B,T,Cin), w(K,Cin,Cout)", xn.shape, wn.shape);
    }
    const std::size_t batch = xn.shape[0], steps = xn.shape[1], cin = xn.shape[2];
    const std::size_t taps = wn.shape[0], cout = wn.shape[2];
    if (wn.shape[1] != cin) shape_mismatch("conv1d channels", xn.shape, wn.shape);
    if (padding == ConvPadding::valid && steps < taps) {
        shape_mismatch("conv1d: kernel longer than sequence", xn.shape, wn.shape);
    }
    const std::size_t pad_left = padding == ConvPadding::same ? (taps - 1) / 2 : 0;
    const std::size_t out_steps = padding == ConvPadding::same ? steps : steps - taps + 1;

    std::vector<double> values(batch * out_steps * cout, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        MapC X(xn.values.data() + b * steps * cin, steps, cin);
        MapM O(values.data() + b * out_steps * cout, out_steps, cout);
        for (std::size_t k = 0; k < taps; ++k) {
            // out row t reads input row t + k - pad_left
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) -
                                         static_cast<std::ptrdiff_t>(pad_left);
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
            const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
                static_cast<std::ptrdiff_t>(out_steps),
                static_cast<std::ptrdiff_t>(steps) - shift);
            if (hi <= lo) continue;
            MapC Wk(wn.values.data() + k * cin * cout, cin, cout);
            O.middleRows(lo, hi - lo).noalias() += X.middleRows(lo + shift, hi - lo) * Wk;
        }
    }
    return OpBuilder::make(
        {batch, out_steps, cout}, std::move(values), {x, w},
        [batch, steps, cin, taps, cout, pad_left, out_steps](Node& self) {
            Node& px = *self.parents[0];
            Node& pw = *self.parents[1];
            if (px.requires_grad) px.ensure_grad();
            if (pw.requires_grad) pw.ensure_grad();
            for (std::size_t b = 0; b < batch; ++b) {
                MapC dO(self.grad.data() + b * out_steps * cout, out_steps, cout);
                for (std::size_t k = 0; k < taps; ++k) {
                    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) -
                                                 static_cast<std::ptrdiff_t>(pad_left);
                    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
                    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
                        static_cast<std::ptrdiff_t>(out_steps),
                        static_cast<std::ptrdiff_t>(steps) - shift);
                    if (hi <= lo) continue;
                    if (px.requires_grad) {
                        MapC Wk(pw.values.data() + k * cin * cout, cin, cout);
                        MapM dX(px.grad.data() + b * steps * cin, steps, cin);
                        dX.middleRows(lo + shift, hi - lo).noalias() +=
                            dO.middleRows(lo, hi - lo) * Wk.transpose();
                    }
                    if (pw.requires_grad) {
                        MapC X(px.values.data() + b * steps * cin, steps, cin);
                        MapM dW(pw.grad.data() + k * cin * cout, cin, cout);
                        dW.noalias() += X.middleRows(lo + shift, hi - lo).transpose() *
                                        dO.middleRows(lo, hi - lo);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

Tensor concat_lastdim(std::span<const Tensor> parts) {
    if (parts.empty()) throw UsageError("concat_lastdim of zero tensors");
    const Shape& first = node_of(parts[0]).shape;
    if (first.empty()) throw ShapeError("concat_lastdim on rank-0 tensor");
    Shape lead(first.begin(), first.end() - 1);
    std::size_t total_dim = 0;
    std::vector<std::size_t> dims;
    for (const Tensor& p : parts) {
        const Shape& sh = node_of(p).shape;
        if (sh.size() != first.size() ||
            !std::equal(lead.begin(), lead.end(), sh.begin())) {
            shape_mismatch("concat_lastdim", first, sh);
        }
        dims.push_back(sh.back());
        total_dim += sh.back();
    }
    const std::size_t rows = shape_numel(lead);
    Shape out = lead;
    out.push_back(total_dim);
    std::vector<double> values(rows * total_dim);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto& src = node_of(parts[p]).values;
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(src.data() + r * dims[p], dims[p],
                        values.data() + r * total_dim + offset);
        }
        offset += dims[p];
    }

    auto node = new_node(std::move(out), std::move(values));
    bool needs = false;
    for (const Tensor& p : parts) needs = needs || p.requires_grad();
    if (grad_enabled() && needs) {
        node->requires_grad = true;
        for (const Tensor& p : parts) node->parents.push_back(OpBuilder::node_ptr(p));
        node->backward_fn = [rows, dims, total_dim](Node& self) {
            std::size_t off = 0;
            for (std::size_t p = 0; p < self.parents.size(); ++p) {
                Node& parent = *self.parents[p];
                if (parent.requires_grad) {
                    parent.ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r) {
                        const double* g = self.grad.data() + r * total_dim + off;
                        double* dst = parent.grad.data() + r * dims[p];
                        for (std::size_t i = 0; i < dims[p]; ++i) dst[i] += g[i];
                    }
                }
                off += dims[p];
            }
        };
    }
    return OpBuilder::make_from_node(std::move(node));
}

Tensor slice_lastdim(const Tensor& x, std::size_t from, std::size_t to) {
    const Node& xn = node_of(x);
    if (xn.shape.empty()) throw ShapeError("slice_lastdim on rank-0 tensor");
    const std::size_t dim = xn.shape.back();
    if (from >= to || to > dim) {
        throw UsageError("slice_lastdim [" + std::to_string(from) + "," + std::to_string(to) +
                         ") out of range for dim " + std::to_string(dim));
    }
    const std::size_t rows = xn.numel() / dim;
    const std::size_t width = to - from;
    Shape out = xn.shape;
    out.back() = width;
    std::vector<double> values(rows * width);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(xn.values.data() + r * dim + from, width, values.data() + r * width);
    }
    return OpBuilder::make(std::move(out), std::move(values), {x},
                           [rows, dim, from, width](Node& self) {
                               Node& pa = *self.parents[0];
                               if (!pa.requires_grad) return;
                               pa.ensure_grad();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const double* g = self.grad.data() + r * width;
                                   double* dst = pa.grad.data() + r * dim + from;
                                   for (std::size_t i = 0; i < width; ++i) dst[i] += g[i];
                               }
                           });
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
    const Node& xn = node_of(x);
    if (axis >= xn.shape.size()) {
        throw UsageError("mean_axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(xn.shape));
    }
    const std::size_t len = xn.shape[axis];
    std::size_t pre = 1, post = 1;
    for (std::size_t i = 0; i < axis; ++i) pre *= xn.shape[i];
    for (std::size_t i = axis + 1; i < xn.shape.size(); ++i) post *= xn.shape[i];
    Shape out;
    for (std::size_t i = 0; i < xn.shape.size(); ++i)
        if (i != axis) out.push_back(xn.shape[i]);
    if (out.empty()) out.push_back(1);

    std::vector<double> values(pre * post, 0.0);
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t p = 0; p < pre; ++p) {
        for (std::size_t l = 0; l < len; ++l) {
            const double* src = xn.values.data() + (p * len + l) * post;
            double* dst = values.data() + p * post;
            for (std::size_t q = 0; q < post; ++q) dst[q] += src[q];
        }
    }
    for (double& v : values) v *= inv;
    return OpBuilder::make(std::move(out), std::move(values), {x},
                           [pre, len, post, inv](Node& self) {
                               Node& pa = *self.parents[0];
                               if (!pa.requires_grad) return;
                               pa.ensure_grad();
                               for (std::size_t p = 0; p < pre; ++p) {
                                   const double* g = self.grad.data() + p * post;
                                   for (std::size_t l = 0; l < len; ++l) {
                                       double* dst = pa.grad.data() + (p * len + l) * post;
                                       for (std::size_t q = 0; q < post; ++q)
                                           dst[q] += g[q] * inv;
                                   }
                               }
                           });
}

Tensor sum_all(const Tensor& x) {
    const Node& xn = node_of(x);
    double total = 0.0;
    for (double v : xn.values) total += v;
    return OpBuilder::make({1}, {total}, {x}, [](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        const double g = self.grad[0];
        for (double& d : pa.grad) d += g;
    });
}

Tensor select_step(const Tensor& x, std::size_t t) {
    const Node& xn = node_of(x);
    if (xn.shape.size() != 3) {
        throw ShapeError("select_step requires rank 3, got " + shape_to_string(xn.shape));
    }
    const std::size_t batch = xn.shape[0], steps = xn.shape[1], feat = xn.shape[2];
    if (t >= steps) {
        throw UsageError("select_step index " + std::to_string(t) + " out of range " +
                         std::to_string(steps));
    }
    std::vector<double> values(batch * feat);
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(xn.values.data() + (b * steps + t) * feat, feat, values.data() + b * feat);
    }
    return OpBuilder::make({batch, feat}, std::move(values), {x},
                           [batch, steps, feat, t](Node& self) {
                               Node& pa = *self.parents[0];
                               if (!pa.requires_grad) return;
                               pa.ensure_grad();
                               for (std::size_t b = 0; b < batch; ++b) {
                                   const double* g = self.grad.data() + b * feat;
                                   double* dst = pa.grad.data() + (b * steps + t) * feat;
                                   for (std::size_t i = 0; i < feat; ++i) dst[i] += g[i];
                               }
                           });
}

Tensor expand_batch(const Tensor& x, std::size_t batch) {
    const Node& xn = node_of(x);
    if (xn.shape.size() != 2) {
        throw ShapeError("expand_batch requires rank 2, got " + shape_to_string(xn.shape));
    }
    if (batch == 0) throw UsageError("expand_batch to zero batch");
    const std::size_t block = xn.numel();
    std::vector<double> values(batch * block);
    for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(xn.values.data(), block, values.data() + b * block);
    }
    Shape out{batch, xn.shape[0], xn.shape[1]};
    return OpBuilder::make(std::move(out), std::move(values), {x}, [batch, block](Node& self) {
        Node& pa = *self.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        for (std::size_t b = 0; b < batch; ++b) {
            const double* g = self.grad.data() + b * block;
            for (std::size_t i = 0; i < block; ++i) pa.grad[i] += g[i];
        }
    });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), b);
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
    if (node_of(prediction).shape != node_of(target).shape) {
        shape_mismatch("mse", node_of(prediction).shape, node_of(target).shape);
    }
    Tensor diff = sub(prediction, target);
    return scale(sum_all(mul(diff, diff)), 1.0 / static_cast<double>(prediction.numel()));
}

Tensor detach(const Tensor& x) {
    const Node& xn = node_of(x);
    return Tensor::from(xn.shape, xn.values, false);
}

// ---------------------------------------------------------------------------
// Backward sweep
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    Node& root = node_of(loss);
    if (root.numel() != 1) {
        throw UsageError("backward requires a scalar loss, got shape " +
                         shape_to_string(root.shape));
    }
    if (!root.requires_grad) return;

    // Iterative post-order DFS; creation order of parents fixes traversal order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(&root, 0);
    visited.insert(&root);
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node* next = node->parents[child].get();
            ++child;
            if (next->requires_grad && !visited.count(next)) {
                visited.insert(next);
                stack.emplace_back(next, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.ensure_grad();
    root.grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& point, double step) {
    const Shape shape = point.shape();
    const std::vector<double> base = point.values();

    Tensor leaf = Tensor::from(shape, base, true);
    Tensor loss = f(leaf);
    backward(loss);
    std::vector<double> analytic(base.size(), 0.0);
    if (leaf.has_grad()) analytic = leaf.grad();

    GradCheckReport report;
    NoGradGuard guard;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> plus = base, minus = base;
        plus[i] += step;
        minus[i] -= step;
        const double fp = f(Tensor::from(shape, std::move(plus), false)).item();
        const double fm = f(Tensor::from(shape, std::move(minus), false)).item();
        const double numeric = (fp - fm) / (2.0 * step);
        if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
            report.all_finite = false;
            report.max_rel_error = std::numeric_limits<double>::infinity();
            report.worst_index = i;
            return report;
        }
        const double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(numeric)});
        const double rel = std::fabs(analytic[i] - numeric) / denom;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    return report;
}

} // namespace powercast::autodiff
