#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "elastinv/grid.hpp"

namespace elastinv {

using Shape = std::vector<int>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a backward pass reaches the node
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;
};

}  // namespace detail

/// Handle to a node of a reverse-mode computation graph. Copies share the node.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    /// Leaf with requires_grad set.
    static Tensor leaf(Shape shape, std::vector<double> values);

    [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
    [[nodiscard]] const Shape& shape() const { return node_->shape; }
    [[nodiscard]] int dim(int k) const { return node_->shape.at(static_cast<std::size_t>(k)); }
    [[nodiscard]] std::size_t numel() const { return node_->value.size(); }
    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }

    [[nodiscard]] std::span<const double> values() const { return node_->value; }
    /// Mutable access for leaves (optimizer updates, initialization).
    [[nodiscard]] std::span<double> mutable_values() { return node_->value; }
    [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
    [[nodiscard]] std::span<const double> grad() const { return node_->grad; }
    void clear_grad() { node_->grad.clear(); }

    [[nodiscard]] double item() const;

    /// Reverse pass from this scalar. Every reachable requires_grad tensor receives a freshly
    /// computed gradient (previous gradients are discarded, not accumulated).
    void backward() const;

    /// Detached copy of the values.
    [[nodiscard]] Tensor detach() const;

    [[nodiscard]] detail::Node* node() const { return node_.get(); }

    // Builds an op output; `backward` is kept only when some parent requires grad.
    static Tensor make(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                       std::function<void(detail::Node&)> backward);

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

namespace ops {

/// Cross-correlation of [Cin, H, W] with [Cout, Cin, kh, kw], zero padding, no bias.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride = 1, int padding = 0);
/// Per-channel normalization with the statistics of this single image.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// 2x2, stride 2, floor semantics; gradient goes to the first maximal entry of each window.
Tensor maxpool2(const Tensor& input);
/// Corner-aligned bilinear resize of [C, H, W].
Tensor upsample_bilinear(const Tensor& input, int target_h, int target_w);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a * x + b elementwise, constants a and b.
Tensor affine(const Tensor& x, double a, double b = 0.0);
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// mean(x^2) as a scalar.
Tensor mse(const Tensor& x);
/// Sum of scalar tensors.
Tensor sum(std::span<const Tensor> scalars);

/// Channel c of [C, H, W] as [H, W].
Tensor channel(const Tensor& x, int c);
/// Same values, new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);
/// Entries at flat `indices`, as a 1-D tensor.
Tensor gather(const Tensor& x, std::vector<int> indices);

/// [N, K] x [K, M].
Tensor matmul(const Tensor& a, const Tensor& b);
/// [N, M] plus a row vector [M] broadcast over N.
Tensor add_rowvec(const Tensor& x, const Tensor& b);
/// Column k of [N, M] as [N].
Tensor column(const Tensor& x, int k);

}  // namespace ops

struct AdamSettings {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Parameter;

/// One bias-corrected Adam update at step t >= 1. Consumes (clears) the gradients; throws if a
/// parameter has none.
void adam_step(std::span<Parameter* const> params, const AdamSettings& settings, long t);

/// Trainable tensor with Adam moment accumulators. Ascent parameters climb their gradient.
class Parameter {
public:
    enum class Direction { descent, ascent };

    Parameter(Shape shape, std::vector<double> values, Direction dir = Direction::descent);

    [[nodiscard]] Tensor& tensor() { return tensor_; }
    [[nodiscard]] const Tensor& tensor() const { return tensor_; }
    [[nodiscard]] Direction direction() const { return dir_; }
    [[nodiscard]] std::span<const double> first_moment() const { return m_; }
    [[nodiscard]] std::span<const double> second_moment() const { return v_; }

private:
    friend void adam_step(std::span<Parameter* const>, const AdamSettings&, long);
    Tensor tensor_;
    std::vector<double> m_;
    std::vector<double> v_;
    Direction dir_;
};

}  // namespace elastinv
