#include "lsast/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "lsast/error.hpp"

namespace lsast {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    require(data_.size() == shape_size(shape_), "tensor payload does not match shape " + shape_str(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
    require(shape_size(shape) == data_.size(),
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor& Tensor::operator+=(const Tensor& other) {
    require(other.size() == size(), "shape mismatch in accumulate");
    const double* src = other.ptr();
    double* dst = ptr();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] += src[i];
    return *this;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), "shape mismatch in max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

}  // namespace lsast
