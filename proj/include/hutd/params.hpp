#pragma once

#include "hutd/grad.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace hutd::ad {

struct NamedTensor {
    std::string name;
    Tensor value;
};

// Ordered collection of named parameter leaves.
class ParamSet {
public:
    struct Entry {
        std::string name;
        Var var;
    };

    Var& add(std::string name, Tensor init);  // throws on duplicate names
    const Var& get(std::string_view name) const;
    Var& get(std::string_view name);
    bool contains(std::string_view name) const;

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const;
    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    void zero_grad();

    // Deep copy: fresh leaves with copied values and empty gradients.
    ParamSet clone() const;

    std::vector<NamedTensor> export_values(std::string_view prefix = {}) const;
    // Overwrites values of matching names; every parameter must be present
    // under `prefix` with the same shape.
    void import_values(const std::vector<NamedTensor>& tensors, std::string_view prefix = {});

private:
    std::vector<Entry> entries_;
};

// Checkpoint file: "HUTDCKPT", u32 version, u64 count, then per tensor
// u32 name length, name bytes, u32 rank, u64 extents, little-endian doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name);

// p <- p - lr * (grad + weight_decay * p); clears gradients afterwards.
// Throws if any parameter was not reached by a backward pass.
void sgd_step(ParamSet& params, double lr, double weight_decay);

// Adam with L2 weight decay folded into the gradient.
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps)
    {
    }

    // `group` namespaces the moment buffers so one Adam can serve several sets.
    void step(ParamSet& params, std::string_view group, double lr, double weight_decay);

    std::vector<NamedTensor> export_state(std::string_view prefix) const;
    void import_state(const std::vector<NamedTensor>& tensors, std::string_view prefix);

private:
    struct Moments {
        Tensor m;
        Tensor v;
        double steps = 0.0;
    };
    double beta1_, beta2_, eps_;
    std::map<std::string, Moments> state_;
};

// Cosine annealing from lr_max to lr_min over `horizon` epochs, flat after.
double cosine_lr(std::size_t epoch, double lr_max, double lr_min, std::size_t horizon);

// Compares backward() against a fourth-order central difference
//   (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h
// for every scalar in `params`. Returns the largest |a - n| / max(|a|, |n|, 1e-8).
// `loss` must rebuild its graph from the current parameter values on each call.
// Throws std::runtime_error when the loss is not finite.
double finite_diff_check(const std::function<Var()>& loss, ParamSet& params, double eps);

} // namespace hutd::ad
