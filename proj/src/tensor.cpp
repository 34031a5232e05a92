#include "hutd/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace hutd {

std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values))
{
    if (shape_numel(shape_) != data_.size()) {
        throw std::invalid_argument("tensor: shape " + shape_string(shape_) + " needs " +
                                    std::to_string(shape_numel(shape_)) + " values, got " +
                                    std::to_string(data_.size()));
    }
}

Tensor take_rows(const Tensor& m, std::span<const std::size_t> indices)
{
    if (m.rank() != 2) throw std::invalid_argument("take_rows: rank-2 tensor required");
    const std::size_t d = m.cols();
    Tensor out({indices.size(), d});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= m.rows()) throw std::out_of_range("take_rows: row index out of range");
        auto src = m.row(indices[i]);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < d; ++j) dst[j] = src[j];
    }
    return out;
}

} // namespace hutd
