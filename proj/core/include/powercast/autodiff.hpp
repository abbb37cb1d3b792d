#ifndef POWERCAST_AUTODIFF_HPP
#define POWERCAST_AUTODIFF_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace powercast::autodiff {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Disables graph recording while alive. Forward values are still computed;
/// intermediate nodes carry no parent links, so memory is released eagerly.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Dense row-major double tensor participating in a reverse-mode graph.
/// Copying a Tensor copies the handle, not the data.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t rank() const;
    const std::vector<double>& values() const;
    /// Direct write access to stored values (optimizer updates, perturbations).
    std::vector<double>& mutable_values();
    double item() const;

    bool requires_grad() const;
    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    /// Stable identity for gradient maps and determinism checks.
    std::uint64_t id() const;

private:
    friend struct detail::Node;
    friend class OpBuilder;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

// Element-wise binary ops with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// Unary element-wise ops.
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sin(const Tensor& a);

/// Matrix product. Supports (m,k)x(k,n), (B,m,k)x(k,n) and (B,m,k)x(B,k,n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swap the last two axes (rank >= 2).
Tensor transpose_last(const Tensor& a);

/// Row-wise softmax over the last axis, max-shifted for stability.
Tensor softmax_lastdim(const Tensor& a);

enum class ConvPadding { same, valid };

/// 1-D convolution over the middle axis: x (B,T,Cin), w (K,Cin,Cout), stride 1.
/// "same" pads with zeros, splitting K-1 as left=floor((K-1)/2), rest right.
Tensor conv1d(const Tensor& x, const Tensor& w, ConvPadding padding);

/// Normalize the last axis to zero mean / unit variance (no affine part).
Tensor layer_norm(const Tensor& x, double epsilon);

/// Inverted dropout with an externally supplied 0/1 mask of x.numel() entries.
Tensor dropout(const Tensor& x, const std::vector<double>& mask, double keep_prob);
std::vector<double> dropout_mask(std::size_t size, double keep_prob, std::mt19937_64& rng);

Tensor concat_lastdim(std::span<const Tensor> parts);
Tensor slice_lastdim(const Tensor& x, std::size_t from, std::size_t to);
/// Mean over one axis (axis removed from the shape).
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
/// (B,T,F) -> (B,F) at time step t.
Tensor select_step(const Tensor& x, std::size_t t);
/// (d0,d1) -> (batch,d0,d1) by replication.
Tensor expand_batch(const Tensor& x, std::size_t batch);

/// x @ w + b with b broadcast over leading axes.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
/// Mean squared error over all elements.
Tensor mse(const Tensor& prediction, const Tensor& target);

/// Copy values into a fresh constant leaf, cutting the graph.
Tensor detach(const Tensor& x);

/// Reverse-mode sweep from a scalar loss. Accumulates into .grad() of every
/// requires_grad tensor reachable from the loss; each node is visited once.
void backward(const Tensor& loss);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    bool all_finite = true;
};

/// Compare reverse-mode gradients of a scalar function against central finite
/// differences. Relative error per coordinate is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& point, double step = 1e-5);

} // namespace powercast::autodiff

#endif
