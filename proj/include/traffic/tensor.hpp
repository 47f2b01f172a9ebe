#pragma once

// Dense row-major tensor of doubles plus the fixed set of array operations
// the model is built from. No broadcasting beyond row-vector add/mul.

#include <cstddef>
#include <string>
#include <vector>

#include "traffic/errors.hpp"

namespace traffic {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_size(const Shape& s);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double v);
    // Construction from untrusted input; rejects NaN/Inf.
    static Tensor from_external(Shape shape, std::vector<double> data, const std::string& context);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;

    double& at(std::size_t i) { return data_[i]; }
    double at(std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    double scalar_value() const;  // size-1 tensors only

    Tensor reshaped(Shape new_shape) const;

private:
    Shape shape_;
    std::vector<double> data_;
};

bool operator==(const Tensor& a, const Tensor& b);  // bitwise on shape and data

// --- fixed operation set -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // rank-2

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor tanh_op(const Tensor& a);

// matrix (m x n) combined with a length-n row vector, broadcast over rows
Tensor add_rows(const Tensor& m, const Tensor& row);
Tensor mul_rows(const Tensor& m, const Tensor& row);

Tensor softmax_rows(const Tensor& a);  // rank-2, numerically stabilized
Tensor layer_norm_rows(const Tensor& a, double eps);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& indices);

double sum(const Tensor& a);
double mean(const Tensor& a);

// contiguous slab [lo, hi) along axis 0
Tensor slice_axis0(const Tensor& a, std::size_t lo, std::size_t hi);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace traffic
