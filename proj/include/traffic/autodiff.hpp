#pragma once

// Reverse-mode automatic differentiation over the fixed tensor op set.
// A Tape owns an append-only expression graph; forward values are computed
// eagerly at construction, adjoints on backward(). Node ids grow with
// insertion, so insertion order is a topological order and evaluation is
// deterministic.

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "traffic/tensor.hpp"

namespace traffic::ad {

class Tape;

struct Value {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    const Tensor& val() const;
    const Tensor& grad() const;
    bool valid() const { return tape != nullptr && id >= 0; }
};

enum class OpKind {
    Leaf,
    Matmul,
    Add,
    Sub,
    Mul,
    Relu,
    Tanh,
    Scale,
    AddRows,
    MulRows,
    SoftmaxRows,
    LayerNormRows,
    Concat,
    Sum,
    Mean,
    Reshape,
    Transpose,
    GatherRows,
};

class Tape {
public:
    // Leaf that gradients are tracked for (parameters, probed inputs).
    Value leaf(Tensor v);
    // Leaf treated as a constant; backward never writes into it.
    Value constant(Tensor v);

    Value matmul(Value a, Value b);
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);
    Value relu(Value a);
    Value tanh(Value a);
    Value scale(Value a, double c);
    Value add_rows(Value m, Value row);
    Value mul_rows(Value m, Value row);
    Value softmax_rows(Value a);
    Value layer_norm_rows(Value a, double eps);
    Value concat(const std::vector<Value>& parts, std::size_t axis);
    Value sum(Value a);
    Value mean(Value a);
    Value reshape(Value a, Shape new_shape);
    Value transpose(Value a);
    Value gather_rows(Value a, std::vector<std::size_t> indices);

    // Populates adjoints of every grad-requiring node reachable from root.
    // root must be scalar-valued. Resets adjoints from any previous pass.
    void backward(Value root);

    const Tensor& value_of(Value v) const;
    const Tensor& grad_of(Value v) const;
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        OpKind kind = OpKind::Leaf;
        std::vector<std::int32_t> args;
        Tensor value;
        Tensor adjoint;
        bool requires_grad = false;
        double aux = 0.0;                   // Scale constant / LayerNorm eps
        std::size_t axis = 0;               // Concat
        std::vector<std::size_t> indices;   // GatherRows
        std::vector<double> row_inv_std;    // LayerNormRows cache
    };

    // deque: references handed out by value_of/grad_of stay valid while the
    // tape keeps growing
    std::deque<Node> nodes_;

    Value push(Node n);
    Node& node(Value v);
    const Node& node(Value v) const;
    bool any_requires(const std::vector<Value>& vs) const;
    void backprop_node(std::int32_t id);
};

// Central finite differences of a scalar function with respect to the given
// parameter tensors, perturbed in place. Independent oracle for backward().
std::vector<Tensor> finite_diff(const std::function<double()>& f, const std::vector<Tensor*>& params,
                                double eps);

// Elementwise relative error with clamped denominator, reduced to the max.
double max_rel_err(const Tensor& got, const Tensor& want, double denom_floor = 1e-8);

}  // namespace traffic::ad
