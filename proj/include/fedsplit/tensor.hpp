#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>
#include <vector>

#include "fedsplit/errors.hpp"

namespace fedsplit {

// Dense tensor of 64-bit reals, row-major. Shapes must conform exactly in
// every operation; there is no broadcasting.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size()) {
            throw DimensionError("Tensor: data length " + std::to_string(data_.size()) +
                                 " does not match shape product " +
                                 std::to_string(checked_numel(shape_)));
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vector(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }

    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) throw BoundsError("Tensor::dim: axis out of range");
        return shape_[axis];
    }

    // Matrix accessors (rank 2 only).
    std::size_t rows() const { return dim(0); }
    std::size_t cols() const { return dim(1); }
    double& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    // Largest absolute elementwise difference. Shapes must match.
    double max_abs_diff(const Tensor& other) const {
        if (!same_shape(other)) {
            throw DimensionError("Tensor::max_abs_diff: shape mismatch");
        }
        double m = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) {
            m = std::max(m, std::abs(data_[i] - other.data_[i]));
        }
        return m;
    }

    bool bitwise_equal(const Tensor& other) const {
        if (!same_shape(other)) return false;
        return std::memcmp(data_.data(), other.data_.data(),
                           data_.size() * sizeof(double)) == 0;
    }

    static std::string shape_string(const std::vector<std::size_t>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw DimensionError("Tensor: zero-length dimension");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace fedsplit
