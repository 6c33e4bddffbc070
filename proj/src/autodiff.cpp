#include "elastinv/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "elastinv/grid.hpp"

namespace elastinv {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t k = 0; k < s.size(); ++k) os << (k ? ", " : "") << s[k];
    os << ']';
    return os.str();
}

namespace {

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw InvalidArgument("tensor shape " + shape_str(shape) + " does not match " +
                              std::to_string(values.size()) + " values");
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return n;
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    return Tensor(new_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
    const std::size_t n = elastinv::numel(shape);
    return constant(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values) {
    return Tensor(new_node(std::move(shape), std::move(values), true));
}

double Tensor::item() const {
    if (numel() != 1) throw InvalidArgument("item() on a tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

Tensor Tensor::make(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                    std::function<void(detail::Node&)> backward) {
    bool rg = false;
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
    auto n = new_node(std::move(shape), std::move(value), rg);
    if (rg) {
        n->parents.reserve(parents.size());
        for (const Tensor& p : parents) n->parents.push_back(p.node_);
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

void Tensor::backward() const {
    if (numel() != 1) throw InvalidArgument("backward() needs a scalar, got " + shape_str(shape()));
    if (!requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (detail::Node* n : order) n->grad.assign(n->value.size(), 0.0);
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
    // Interior nodes are transient; only leaves keep their gradients.
    for (detail::Node* n : order) {
        if (!n->parents.empty()) {
            n->grad.clear();
            n->grad.shrink_to_fit();
        }
    }
}

Parameter::Parameter(Shape shape, std::vector<double> values, Direction dir)
    : tensor_(Tensor::leaf(std::move(shape), std::move(values))),
      m_(tensor_.numel(), 0.0),
      v_(tensor_.numel(), 0.0),
      dir_(dir) {}

void adam_step(std::span<Parameter* const> params, const AdamSettings& s, long t) {
    if (t < 1) throw InvalidArgument("Adam step index starts at 1");
    for (const Parameter* p : params) {
        if (!p->tensor().has_grad()) throw InvalidArgument("adam_step called before a backward pass");
    }
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(t));
    for (Parameter* p : params) {
        const double sign = p->dir_ == Parameter::Direction::descent ? -1.0 : 1.0;
        std::span<double> w = p->tensor_.mutable_values();
        std::span<const double> g = p->tensor_.grad();
        for (std::size_t k = 0; k < w.size(); ++k) {
            p->m_[k] = s.beta1 * p->m_[k] + (1.0 - s.beta1) * g[k];
            p->v_[k] = s.beta2 * p->v_[k] + (1.0 - s.beta2) * g[k] * g[k];
            const double mhat = p->m_[k] / c1;
            const double vhat = p->v_[k] / c2;
            w[k] += sign * s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
        p->tensor_.clear_grad();
    }
}

}  // namespace elastinv
