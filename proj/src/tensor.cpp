#include "traffic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace traffic {

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

Tensor Tensor::from_external(Shape shape, std::vector<double> data, const std::string& context) {
    Tensor t(std::move(shape), std::move(data));
    if (!t.all_finite()) {
        throw ValidationError("non-finite value in " + context);
    }
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str(shape_));
    return shape_[1];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::scalar_value() const {
    if (size() != 1) throw ShapeError("scalar_value() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_size(new_shape) != size()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && a.data() == b.data();
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void require_rank2(const Tensor& a, const char* op) {
    if (a.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = pb + kk * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor t({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.at(i) += b.at(i);
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.at(i) -= b.at(i);
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.at(i) *= b.at(i);
    return c;
}

Tensor scale(const Tensor& a, double c) {
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r.at(i) *= c;
    return r;
}

Tensor relu(const Tensor& a) {
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i)
        if (r.at(i) < 0.0) r.at(i) = 0.0;
    return r;
}

Tensor tanh_op(const Tensor& a) {
    Tensor r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r.at(i) = std::tanh(r.at(i));
    return r;
}

Tensor add_rows(const Tensor& m, const Tensor& row) {
    require_rank2(m, "add_rows");
    if (row.rank() != 1 || row.size() != m.cols()) {
        throw ShapeError("add_rows: row shape " + shape_str(row.shape()) + " does not match matrix " +
                         shape_str(m.shape()));
    }
    Tensor r = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) r(i, j) += row.at(j);
    return r;
}

Tensor mul_rows(const Tensor& m, const Tensor& row) {
    require_rank2(m, "mul_rows");
    if (row.rank() != 1 || row.size() != m.cols()) {
        throw ShapeError("mul_rows: row shape " + shape_str(row.shape()) + " does not match matrix " +
                         shape_str(m.shape()));
    }
    Tensor r = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) r(i, j) *= row.at(j);
    return r;
}

Tensor softmax_rows(const Tensor& a) {
    require_rank2(a, "softmax_rows");
    Tensor r = a;
    const std::size_t n = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double mx = r(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            r(i, j) = std::exp(r(i, j) - mx);
            total += r(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) r(i, j) /= total;
    }
    return r;
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
    require_rank2(a, "layer_norm_rows");
    Tensor r = a;
    const std::size_t n = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += a(i, j);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = a(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) r(i, j) = (a(i, j) - mu) * inv;
    }
    return r;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no parts");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) {
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
    }
    std::size_t total_axis = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != first.size()) {
            throw ShapeError("concat: rank mismatch, " + shape_str(first) + " vs " + shape_str(p.shape()));
        }
        for (std::size_t d = 0; d < first.size(); ++d) {
            if (d != axis && p.shape()[d] != first[d]) {
                throw ShapeError("concat: non-concat dimension mismatch, " + shape_str(first) + " vs " +
                                 shape_str(p.shape()));
            }
        }
        total_axis += p.shape()[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = total_axis;
    Tensor out(out_shape);

    // outer = product of dims before axis, inner = product after
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

    std::size_t axis_offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t pa = p.shape()[axis];
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = p.data().data() + o * pa * inner;
            double* dst = out.data().data() + (o * total_axis + axis_offset) * inner;
            std::copy(src, src + pa * inner, dst);
        }
        axis_offset += pa;
    }
    return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices) {
    require_rank2(a, "gather_rows");
    Tensor out({indices.size(), a.cols()});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= a.rows()) {
            throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                             shape_str(a.shape()));
        }
        const double* src = a.data().data() + indices[i] * a.cols();
        std::copy(src, src + a.cols(), out.data().data() + i * a.cols());
    }
    return out;
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

double mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean of empty tensor");
    return sum(a) / static_cast<double>(a.size());
}

Tensor slice_axis0(const Tensor& a, std::size_t lo, std::size_t hi) {
    if (a.rank() == 0 || lo > hi || hi > a.shape()[0]) {
        throw ShapeError("slice_axis0 [" + std::to_string(lo) + "," + std::to_string(hi) + ") on " +
                         shape_str(a.shape()));
    }
    Shape s = a.shape();
    s[0] = hi - lo;
    const std::size_t inner = a.shape()[0] == 0 ? 0 : a.size() / a.shape()[0];
    Tensor out(s);
    std::copy(a.data().begin() + static_cast<std::ptrdiff_t>(lo * inner),
              a.data().begin() + static_cast<std::ptrdiff_t>(hi * inner), out.data().begin());
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: shapes differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

}  // namespace traffic
