#pragma once

// Reverse-mode differentiation over dense tensors.
//
// Operations record themselves as they execute (dynamic graph). A node built
// by stop_gradient() carries its input's values but never propagates a
// gradient to it, so every parameter reachable only through a stopped node
// ends a backward pass with an exactly-zero gradient.

#include "hutd/tensor.hpp"

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hutd::ad {

struct Node;

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    bool defined() const noexcept { return static_cast<bool>(node_); }

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t numel() const { return value().numel(); }
    double item() const;  // value of a single-element node

    bool has_grad() const;
    const Tensor& grad() const;  // throws when no grad slot exists
    bool grad_populated() const;
    bool stopped() const;
    bool requires_grad() const;
    bool is_leaf() const;
    std::string_view op() const;
    const std::vector<Var>& parents() const;

    // Direct access for optimisers and gradient checks on parameter leaves.
    Tensor& mutable_value();
    void zero_grad();

    Node* node() const noexcept { return node_.get(); }

private:
    std::shared_ptr<Node> node_;
};

// Leaves.
Var constant(std::vector<double> values, Shape shape);
Var constant(Tensor value);
Var parameter(Tensor value);

// Elementwise. add/sub broadcast a scalar right operand, or a rank-1 right
// operand across the rows of a rank-2 left operand.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var relu(const Var& a);
Var tanh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);  // throws std::domain_error on non-positive input

// Linear algebra. matmul accepts (n x k)(k x m) or (k)(k x m).
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var take_rows(const Var& a, std::vector<std::size_t> indices);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);

// Row-wise ops. A rank-1 operand is one row; reductions then yield a scalar,
// otherwise a length-n vector.
Var row_sum(const Var& a);
Var l2_norm(const Var& a);     // gradient taken as 0 at the origin
Var normalize(const Var& a);   // throws std::domain_error on a zero row
Var dot(const Var& a, const Var& b);
Var softmax(const Var& a);
Var log_softmax(const Var& a);

Var stop_gradient(const Var& a);

// Accumulates d(loss)/d(leaf) into every parameter reachable through live
// (non-stopped) paths. Parameter gradients accumulate across calls until
// zero_grad(); intermediate gradients are rebuilt per call.
void backward(const Var& loss);

} // namespace hutd::ad
