#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hutd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major double array. Rank 0 is a scalar with one element.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);                       // zero filled
    Tensor(Shape shape, std::vector<double> values);    // throws on size mismatch

    static Tensor scalar(double v) { return Tensor({}, {v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    {
        return Tensor({rows, cols}, std::move(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    // Rank-2 conveniences; a rank-1 tensor is treated as a single row.
    std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
    std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const
    {
        return std::span<const double>(data_).subspan(r * cols(), cols());
    }
    std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Rows `indices` of a rank-2 tensor, in the given order.
Tensor take_rows(const Tensor& m, std::span<const std::size_t> indices);

} // namespace hutd
