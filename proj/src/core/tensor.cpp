#include "rcl/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "rcl/error.hpp"

namespace rcl {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::cols() const {
    if (shape_.size() <= 1) return 1;
    std::size_t n = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) n *= shape_[i];
    return n;
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0]) {
        throw ShapeError("row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_str(shape_));
    }
    const std::size_t c = cols();
    Shape s = shape_;
    s[0] = end - begin;
    return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                    data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> index) const {
    if (shape_.empty()) throw ShapeError("gather_rows on a scalar");
    const std::size_t c = cols();
    Shape s = shape_;
    s[0] = index.size();
    std::vector<double> out;
    out.reserve(index.size() * c);
    for (auto i : index) {
        if (i >= shape_[0]) throw ShapeError("gather_rows index out of range");
        out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(i * c),
                   data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    }
    return Tensor(std::move(s), std::move(out));
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor stack_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("stack_rows of nothing");
    Shape s = parts[0].shape();
    if (s.empty()) throw ShapeError("stack_rows of scalars");
    std::size_t rows = 0;
    std::vector<double> out;
    for (const auto& p : parts) {
        if (p.rank() != s.size() || !std::equal(s.begin() + 1, s.end(), p.shape().begin() + 1)) {
            throw ShapeError("stack_rows shape mismatch");
        }
        rows += p.rows();
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    s[0] = rows;
    return Tensor(std::move(s), std::move(out));
}

}  // namespace rcl
