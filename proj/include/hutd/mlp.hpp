#pragma once

#include "hutd/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hutd::nn {

enum class Activation { Relu, Tanh };

// Fully connected stack: affine layers with the activation between them and
// a linear output. Weights are stored (in x out); parameters are named
// "<name>.<layer>.weight" / "<name>.<layer>.bias".
class Mlp {
public:
    Mlp() = default;
    Mlp(std::string name, std::vector<std::size_t> widths, Activation act, std::uint64_t seed);

    // Copies would alias the parameter leaves; use clone().
    Mlp(const Mlp&) = delete;
    Mlp& operator=(const Mlp&) = delete;
    Mlp(Mlp&&) = default;
    Mlp& operator=(Mlp&&) = default;

    // Batch rows in, batch rows out, recorded on the autodiff graph.
    ad::Var forward(const ad::Var& x) const;
    // As forward(), but the weights enter as constants: gradients reach `x`
    // and never the parameters.
    ad::Var forward_frozen(const ad::Var& x) const;
    // Same arithmetic without recording; used for frozen inference.
    Tensor infer(const Tensor& x) const;

    std::size_t in_width() const { return widths_.front(); }
    std::size_t out_width() const { return widths_.back(); }
    const std::vector<std::size_t>& widths() const { return widths_; }
    Activation activation() const { return act_; }
    const std::string& name() const { return name_; }

    ad::ParamSet& params() { return params_; }
    const ad::ParamSet& params() const { return params_; }

    Mlp clone() const;

private:
    std::string name_;
    std::vector<std::size_t> widths_;
    Activation act_ = Activation::Tanh;
    ad::ParamSet params_;
};

} // namespace hutd::nn
