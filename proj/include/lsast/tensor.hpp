#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace lsast {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

// Payloads start on a cache line so Eigen's vectorized reductions split the
// same way wherever the heap puts them; results then depend only on shapes.
template <class T>
struct CacheAligned {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};
    CacheAligned() = default;
    template <class U>
    CacheAligned(const CacheAligned<U>&) {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }
    template <class U>
    bool operator==(const CacheAligned<U>&) const { return true; }
};

// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D and 4-D element access, row-major.
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    Tensor reshaped(Shape shape) const;
    void fill(double v);
    bool all_finite() const;

    // In-place accumulate; shapes must match.
    Tensor& operator+=(const Tensor& other);

    bool bitwise_equal(const Tensor& other) const;

private:
    Shape shape_;
    std::vector<double, CacheAligned<double>> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& t);

}  // namespace lsast
