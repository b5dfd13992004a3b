#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rcl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles. Plain value type; gradient tracking
/// lives on the Tape (see tape.hpp).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value) { return Tensor({}, {value}); }
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty() && shape_.empty(); }

    // Leading extent; 1 for scalars.
    std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
    // Product of trailing extents.
    std::size_t cols() const;

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    double item() const;
    bool all_finite() const;

    Tensor reshaped(Shape shape) const;
    // Rows [begin, end) along the leading dimension.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    // Rows picked by index along the leading dimension.
    Tensor gather_rows(std::span<const std::size_t> index) const;
    // Collapse to (rows, cols).
    Tensor flattened() const { return reshaped({rows(), cols()}); }

private:
    Shape shape_;
    std::vector<double> data_;
};

// Same shape and identical bit patterns.
bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

Tensor stack_rows(std::span<const Tensor> parts);

}  // namespace rcl
