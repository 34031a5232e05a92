#include "hutd/mlp.hpp"

#include "hutd/kernels.hpp"
#include "hutd/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace hutd::nn {

Mlp::Mlp(std::string name, std::vector<std::size_t> widths, Activation act, std::uint64_t seed)
    : name_(std::move(name)), widths_(std::move(widths)), act_(act)
{
    if (widths_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const std::size_t in = widths_[l], out = widths_[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Tensor w({in, out});
        for (auto& v : w.storage()) v = rng.uniform(-bound, bound);
        Tensor b({out});
        for (auto& v : b.storage()) v = rng.uniform(-bound, bound);
        params_.add(name_ + "." + std::to_string(l) + ".weight", std::move(w));
        params_.add(name_ + "." + std::to_string(l) + ".bias", std::move(b));
    }
}

ad::Var Mlp::forward(const ad::Var& x) const
{
    ad::Var h = x;
    const std::size_t layers = widths_.size() - 1;
    auto it = params_.begin();
    for (std::size_t l = 0; l < layers; ++l) {
        const ad::Var& w = (it++)->var;
        const ad::Var& b = (it++)->var;
        h = ad::add(ad::matmul(h, w), b);
        if (l + 1 < layers) h = act_ == Activation::Relu ? ad::relu(h) : ad::tanh(h);
    }
    return h;
}

ad::Var Mlp::forward_frozen(const ad::Var& x) const
{
    ad::Var h = x;
    const std::size_t layers = widths_.size() - 1;
    auto it = params_.begin();
    for (std::size_t l = 0; l < layers; ++l) {
        const ad::Var w = ad::constant((it++)->var.value());
        const ad::Var b = ad::constant((it++)->var.value());
        h = ad::add(ad::matmul(h, w), b);
        if (l + 1 < layers) h = act_ == Activation::Relu ? ad::relu(h) : ad::tanh(h);
    }
    return h;
}

Tensor Mlp::infer(const Tensor& x) const
{
    if (x.rank() != 2 || x.cols() != in_width())
        throw std::invalid_argument("Mlp::infer: expected rows of width " + std::to_string(in_width()) +
                                    ", got " + shape_string(x.shape()));
    Tensor h = x;
    const std::size_t n = x.rows();
    const std::size_t layers = widths_.size() - 1;
    auto it = params_.begin();
    for (std::size_t l = 0; l < layers; ++l) {
        const Tensor& w = (it++)->var.value();
        const Tensor& b = (it++)->var.value();
        const std::size_t in = widths_[l], out = widths_[l + 1];
        Tensor next({n, out});
        kernels::gemm_nn(h.values(), w.values(), next.values(), n, in, out);
        for (std::size_t i = 0; i < next.numel(); ++i) next[i] += b[i % out];
        if (l + 1 < layers) {
            for (auto& v : next.storage())
                v = act_ == Activation::Relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
        }
        h = std::move(next);
    }
    return h;
}

Mlp Mlp::clone() const
{
    Mlp out;
    out.name_ = name_;
    out.widths_ = widths_;
    out.act_ = act_;
    out.params_ = params_.clone();
    return out;
}

} // namespace hutd::nn
