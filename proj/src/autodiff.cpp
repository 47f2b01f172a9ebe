#include "traffic/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace traffic::ad {

const Tensor& Value::val() const { return tape->value_of(*this); }
const Tensor& Value::grad() const { return tape->grad_of(*this); }

Value Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Value{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(Value v) { return nodes_[static_cast<std::size_t>(v.id)]; }
const Tape::Node& Tape::node(Value v) const { return nodes_[static_cast<std::size_t>(v.id)]; }

bool Tape::any_requires(const std::vector<Value>& vs) const {
    for (Value v : vs)
        if (node(v).requires_grad) return true;
    return false;
}

const Tensor& Tape::value_of(Value v) const { return node(v).value; }
const Tensor& Tape::grad_of(Value v) const { return node(v).adjoint; }

Value Tape::leaf(Tensor v) {
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(v);
    n.requires_grad = true;
    return push(std::move(n));
}

Value Tape::constant(Tensor v) {
    Node n;
    n.kind = OpKind::Leaf;
    n.value = std::move(v);
    n.requires_grad = false;
    return push(std::move(n));
}

namespace {
void check_same_tape(const Tape* t, std::initializer_list<Value> vs) {
    for (Value v : vs)
        if (v.tape != t) throw ShapeError("autodiff: values from different tapes");
}
}  // namespace

Value Tape::matmul(Value a, Value b) {
    check_same_tape(this, {a, b});
    Node n;
    n.kind = OpKind::Matmul;
    n.args = {a.id, b.id};
    n.value = traffic::matmul(node(a).value, node(b).value);
    n.requires_grad = any_requires({a, b});
    return push(std::move(n));
}

Value Tape::add(Value a, Value b) {
    check_same_tape(this, {a, b});
    Node n;
    n.kind = OpKind::Add;
    n.args = {a.id, b.id};
    n.value = traffic::add(node(a).value, node(b).value);
    n.requires_grad = any_requires({a, b});
    return push(std::move(n));
}

Value Tape::sub(Value a, Value b) {
    check_same_tape(this, {a, b});
    Node n;
    n.kind = OpKind::Sub;
    n.args = {a.id, b.id};
    n.value = traffic::sub(node(a).value, node(b).value);
    n.requires_grad = any_requires({a, b});
    return push(std::move(n));
}

Value Tape::mul(Value a, Value b) {
    check_same_tape(this, {a, b});
    Node n;
    n.kind = OpKind::Mul;
    n.args = {a.id, b.id};
    n.value = traffic::mul(node(a).value, node(b).value);
    n.requires_grad = any_requires({a, b});
    return push(std::move(n));
}

Value Tape::relu(Value a) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::Relu;
    n.args = {a.id};
    n.value = traffic::relu(node(a).value);
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::tanh(Value a) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::Tanh;
    n.args = {a.id};
    n.value = traffic::tanh_op(node(a).value);
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::scale(Value a, double c) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::Scale;
    n.args = {a.id};
    n.aux = c;
    n.value = traffic::scale(node(a).value, c);
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::add_rows(Value m, Value row) {
    check_same_tape(this, {m, row});
    Node n;
    n.kind = OpKind::AddRows;
    n.args = {m.id, row.id};
    n.value = traffic::add_rows(node(m).value, node(row).value);
    n.requires_grad = any_requires({m, row});
    return push(std::move(n));
}

Value Tape::mul_rows(Value m, Value row) {
    check_same_tape(this, {m, row});
    Node n;
    n.kind = OpKind::MulRows;
    n.args = {m.id, row.id};
    n.value = traffic::mul_rows(node(m).value, node(row).value);
    n.requires_grad = any_requires({m, row});
    return push(std::move(n));
}

Value Tape::softmax_rows(Value a) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::SoftmaxRows;
    n.args = {a.id};
    n.value = traffic::softmax_rows(node(a).value);
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::layer_norm_rows(Value a, double eps) {
    check_same_tape(this, {a});
    const Tensor& x = node(a).value;
    if (x.rank() != 2) throw ShapeError("layer_norm_rows: expected rank-2, got " + shape_str(x.shape()));
    Node n;
    n.kind = OpKind::LayerNormRows;
    n.args = {a.id};
    n.aux = eps;
    n.value = Tensor(x.shape());
    n.row_inv_std.resize(x.rows());
    const std::size_t cols = x.cols();
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mu += x(i, j);
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = x(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + eps);
        n.row_inv_std[i] = inv;
        for (std::size_t j = 0; j < cols; ++j) n.value(i, j) = (x(i, j) - mu) * inv;
    }
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::concat(const std::vector<Value>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    check_same_tape(this, {parts.front()});
    std::vector<Tensor> tensors;
    tensors.reserve(parts.size());
    Node n;
    n.kind = OpKind::Concat;
    n.axis = axis;
    for (Value p : parts) {
        check_same_tape(this, {p});
        n.args.push_back(p.id);
        tensors.push_back(node(p).value);
    }
    n.value = traffic::concat(tensors, axis);
    n.requires_grad = any_requires(parts);
    return push(std::move(n));
}

Value Tape::sum(Value a) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::Sum;
    n.args = {a.id};
    n.value = Tensor::scalar(traffic::sum(node(a).value));
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::mean(Value a) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::Mean;
    n.args = {a.id};
    n.value = Tensor::scalar(traffic::mean(node(a).value));
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::reshape(Value a, Shape new_shape) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::Reshape;
    n.args = {a.id};
    n.value = node(a).value.reshaped(std::move(new_shape));
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::transpose(Value a) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::Transpose;
    n.args = {a.id};
    n.value = traffic::transpose(node(a).value);
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

Value Tape::gather_rows(Value a, std::vector<std::size_t> indices) {
    check_same_tape(this, {a});
    Node n;
    n.kind = OpKind::GatherRows;
    n.args = {a.id};
    n.value = traffic::gather_rows(node(a).value, indices);
    n.indices = std::move(indices);
    n.requires_grad = node(a).requires_grad;
    return push(std::move(n));
}

void Tape::backward(Value root) {
    if (root.tape != this) throw ShapeError("backward: root from different tape");
    if (node(root).value.size() != 1) {
        throw ShapeError("backward: root must be scalar, got shape " + shape_str(node(root).value.shape()));
    }
    for (Node& n : nodes_) n.adjoint = Tensor(n.value.shape());
    node(root).adjoint.at(0) = 1.0;
    for (std::int32_t id = root.id; id >= 0; --id) backprop_node(id);
}

void Tape::backprop_node(std::int32_t id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.kind == OpKind::Leaf) return;

    auto arg = [&](std::size_t i) -> Node& { return nodes_[static_cast<std::size_t>(n.args[i])]; };
    auto wants = [&](std::size_t i) { return arg(i).requires_grad; };
    const Tensor& g = n.adjoint;

    switch (n.kind) {
        case OpKind::Leaf:
            break;
        case OpKind::Matmul: {
            if (wants(0)) arg(0).adjoint = traffic::add(arg(0).adjoint, traffic::matmul(g, traffic::transpose(arg(1).value)));
            if (wants(1)) arg(1).adjoint = traffic::add(arg(1).adjoint, traffic::matmul(traffic::transpose(arg(0).value), g));
            break;
        }
        case OpKind::Add: {
            if (wants(0)) arg(0).adjoint = traffic::add(arg(0).adjoint, g);
            if (wants(1)) arg(1).adjoint = traffic::add(arg(1).adjoint, g);
            break;
        }
        case OpKind::Sub: {
            if (wants(0)) arg(0).adjoint = traffic::add(arg(0).adjoint, g);
            if (wants(1)) arg(1).adjoint = traffic::sub(arg(1).adjoint, g);
            break;
        }
        case OpKind::Mul: {
            if (wants(0)) arg(0).adjoint = traffic::add(arg(0).adjoint, traffic::mul(g, arg(1).value));
            if (wants(1)) arg(1).adjoint = traffic::add(arg(1).adjoint, traffic::mul(g, arg(0).value));
            break;
        }
        case OpKind::Relu: {
            if (wants(0)) {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i)
                    if (n.value.at(i) <= 0.0) d.at(i) = 0.0;
                arg(0).adjoint = traffic::add(arg(0).adjoint, d);
            }
            break;
        }
        case OpKind::Tanh: {
            if (wants(0)) {
                Tensor d = g;
                for (std::size_t i = 0; i < d.size(); ++i) d.at(i) *= 1.0 - n.value.at(i) * n.value.at(i);
                arg(0).adjoint = traffic::add(arg(0).adjoint, d);
            }
            break;
        }
        case OpKind::Scale: {
            if (wants(0)) arg(0).adjoint = traffic::add(arg(0).adjoint, traffic::scale(g, n.aux));
            break;
        }
        case OpKind::AddRows: {
            if (wants(0)) arg(0).adjoint = traffic::add(arg(0).adjoint, g);
            if (wants(1)) {
                Tensor& dr = arg(1).adjoint;
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) dr.at(j) += g(i, j);
            }
            break;
        }
        case OpKind::MulRows: {
            const Tensor& m = arg(0).value;
            const Tensor& row = arg(1).value;
            if (wants(0)) {
                Tensor d = g;
                for (std::size_t i = 0; i < d.rows(); ++i)
                    for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) *= row.at(j);
                arg(0).adjoint = traffic::add(arg(0).adjoint, d);
            }
            if (wants(1)) {
                Tensor& dr = arg(1).adjoint;
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < g.cols(); ++j) dr.at(j) += g(i, j) * m(i, j);
            }
            break;
        }
        case OpKind::SoftmaxRows: {
            if (wants(0)) {
                const Tensor& y = n.value;
                Tensor d(y.shape());
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                    for (std::size_t j = 0; j < y.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - dot);
                }
                arg(0).adjoint = traffic::add(arg(0).adjoint, d);
            }
            break;
        }
        case OpKind::LayerNormRows: {
            if (wants(0)) {
                const Tensor& y = n.value;
                const std::size_t cols = y.cols();
                Tensor d(y.shape());
                for (std::size_t i = 0; i < y.rows(); ++i) {
                    double gm = 0.0, gym = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        gm += g(i, j);
                        gym += g(i, j) * y(i, j);
                    }
                    gm /= static_cast<double>(cols);
                    gym /= static_cast<double>(cols);
                    const double inv = n.row_inv_std[i];
                    for (std::size_t j = 0; j < cols; ++j) d(i, j) = inv * (g(i, j) - gm - y(i, j) * gym);
                }
                arg(0).adjoint = traffic::add(arg(0).adjoint, d);
            }
            break;
        }
        case OpKind::Concat: {
            std::size_t outer = 1, inner = 1;
            const Shape& os = n.value.shape();
            for (std::size_t d = 0; d < n.axis; ++d) outer *= os[d];
            for (std::size_t d = n.axis + 1; d < os.size(); ++d) inner *= os[d];
            const std::size_t total_axis = os[n.axis];
            std::size_t axis_offset = 0;
            for (std::size_t p = 0; p < n.args.size(); ++p) {
                const std::size_t pa = arg(p).value.shape()[n.axis];
                if (wants(p)) {
                    Tensor& da = arg(p).adjoint;
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* src = g.data().data() + (o * total_axis + axis_offset) * inner;
                        double* dst = da.data().data() + o * pa * inner;
                        for (std::size_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
                    }
                }
                axis_offset += pa;
            }
            break;
        }
        case OpKind::Sum: {
            if (wants(0)) {
                Tensor& da = arg(0).adjoint;
                const double gv = g.at(0);
                for (std::size_t i = 0; i < da.size(); ++i) da.at(i) += gv;
            }
            break;
        }
        case OpKind::Mean: {
            if (wants(0)) {
                Tensor& da = arg(0).adjoint;
                const double gv = g.at(0) / static_cast<double>(da.size());
                for (std::size_t i = 0; i < da.size(); ++i) da.at(i) += gv;
            }
            break;
        }
        case OpKind::Reshape: {
            if (wants(0)) arg(0).adjoint = traffic::add(arg(0).adjoint, g.reshaped(arg(0).value.shape()));
            break;
        }
        case OpKind::Transpose: {
            if (wants(0)) arg(0).adjoint = traffic::add(arg(0).adjoint, traffic::transpose(g));
            break;
        }
        case OpKind::GatherRows: {
            if (wants(0)) {
                Tensor& da = arg(0).adjoint;
                const std::size_t cols = da.cols();
                for (std::size_t i = 0; i < n.indices.size(); ++i) {
                    const double* src = g.data().data() + i * cols;
                    double* dst = da.data().data() + n.indices[i] * cols;
                    for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
                }
            }
            break;
        }
    }
}

std::vector<Tensor> finite_diff(const std::function<double()>& f, const std::vector<Tensor*>& params,
                                double eps) {
    if (eps <= 0.0) throw ValidationError("finite_diff: eps must be positive");
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (Tensor* p : params) {
        Tensor g(p->shape());
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double saved = p->at(i);
            p->at(i) = saved + eps;
            const double up = f();
            p->at(i) = saved - eps;
            const double down = f();
            p->at(i) = saved;
            g.at(i) = (up - down) / (2.0 * eps);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

double max_rel_err(const Tensor& got, const Tensor& want, double denom_floor) {
    if (!got.same_shape(want)) {
        throw ShapeError("max_rel_err: shapes differ, " + shape_str(got.shape()) + " vs " +
                         shape_str(want.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const double denom = std::max({denom_floor, std::abs(got.at(i)), std::abs(want.at(i))});
        worst = std::max(worst, std::abs(got.at(i) - want.at(i)) / denom);
    }
    return worst;
}

}  // namespace traffic::ad
