#include "hutd/params.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hutd::ad {

// ---- ParamSet ------------------------------------------------------------------

Var& ParamSet::add(std::string name, Tensor init)
{
    if (contains(name)) throw std::invalid_argument("ParamSet: duplicate parameter '" + name + "'");
    entries_.push_back({std::move(name), parameter(std::move(init))});
    return entries_.back().var;
}

const Var& ParamSet::get(std::string_view name) const
{
    for (const auto& e : entries_)
        if (e.name == name) return e.var;
    throw std::out_of_range("ParamSet: no parameter '" + std::string(name) + "'");
}

Var& ParamSet::get(std::string_view name)
{
    return const_cast<Var&>(static_cast<const ParamSet&>(*this).get(name));
}

bool ParamSet::contains(std::string_view name) const
{
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

std::size_t ParamSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.var.numel();
    return n;
}

void ParamSet::zero_grad()
{
    for (auto& e : entries_) e.var.zero_grad();
}

ParamSet ParamSet::clone() const
{
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, e.var.value());
    return out;
}

std::vector<NamedTensor> ParamSet::export_values(std::string_view prefix) const
{
    std::vector<NamedTensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back({std::string(prefix) + e.name, e.var.value()});
    return out;
}

void ParamSet::import_values(const std::vector<NamedTensor>& tensors, std::string_view prefix)
{
    for (auto& e : entries_) {
        const Tensor& src = find_tensor(tensors, std::string(prefix) + e.name);
        if (src.shape() != e.var.shape()) {
            throw std::runtime_error("checkpoint: parameter '" + e.name + "' has shape " +
                                     shape_string(src.shape()) + ", expected " + shape_string(e.var.shape()));
        }
        e.var.mutable_value() = src;
    }
}

// ---- checkpoint io ----------------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic{'H', 'U', 'T', 'D', 'C', 'K', 'P', 'T'};

template <class T>
void put_le(std::ostream& os, T v)
{
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(std::istream& is, const std::filesystem::path& path)
{
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = is.get();
        if (c == EOF) throw std::runtime_error("checkpoint " + path.string() + ": truncated file");
        v |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, kCheckpointVersion);
    put_le<std::uint64_t>(os, tensors.size());
    for (const auto& t : tensors) {
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
        os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.value.rank()));
        for (auto e : t.value.shape()) put_le<std::uint64_t>(os, e);
        for (double v : t.value.values()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
    const auto version = get_le<std::uint32_t>(is, path);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint " + path.string() + ": version " + std::to_string(version) +
                                 " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = get_le<std::uint64_t>(is, path);
    std::vector<NamedTensor> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = get_le<std::uint32_t>(is, path);
        if (len > (1u << 16)) throw std::runtime_error("checkpoint " + path.string() + ": corrupt name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        if (!is) throw std::runtime_error("checkpoint " + path.string() + ": truncated file");
        const auto rank = get_le<std::uint32_t>(is, path);
        if (rank > 8) throw std::runtime_error("checkpoint " + path.string() + ": corrupt rank");
        Shape shape(rank);
        for (auto& e : shape) e = get_le<std::uint64_t>(is, path);
        const std::size_t n = shape_numel(shape);
        if (n > (std::size_t{1} << 32)) throw std::runtime_error("checkpoint " + path.string() + ": corrupt extents");
        std::vector<double> values(n);
        for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is, path));
        out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
    }
    if (is.peek() != EOF) throw std::runtime_error("checkpoint " + path.string() + ": trailing bytes");
    return out;
}

const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name)
{
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw std::runtime_error("checkpoint: missing tensor '" + std::string(name) + "'");
}

// ---- optimisers --------------------------------------------------------------------

void sgd_step(ParamSet& params, double lr, double weight_decay)
{
    for (auto& e : params)
        if (!e.var.grad_populated()) throw std::logic_error("sgd_step: no gradient for '" + e.name + "'");
    for (auto& e : params) {
        Tensor& p = e.var.mutable_value();
        const Tensor& g = e.var.grad();
        for (std::size_t i = 0; i < p.numel(); ++i) p[i] -= lr * (g[i] + weight_decay * p[i]);
        e.var.zero_grad();
    }
}

void Adam::step(ParamSet& params, std::string_view group, double lr, double weight_decay)
{
    for (auto& e : params)
        if (!e.var.grad_populated()) throw std::logic_error("Adam: no gradient for '" + e.name + "'");
    for (auto& e : params) {
        auto& st = state_[std::string(group) + e.name];
        Tensor& p = e.var.mutable_value();
        if (st.m.numel() != p.numel()) {
            st.m = Tensor(p.shape());
            st.v = Tensor(p.shape());
            st.steps = 0.0;
        }
        st.steps += 1.0;
        const double bc1 = 1.0 - std::pow(beta1_, st.steps);
        const double bc2 = 1.0 - std::pow(beta2_, st.steps);
        const Tensor& g = e.var.grad();
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g[i] + weight_decay * p[i];
            st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * gi;
            st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * gi * gi;
            p[i] -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + eps_);
        }
        e.var.zero_grad();
    }
}

std::vector<NamedTensor> Adam::export_state(std::string_view prefix) const
{
    std::vector<NamedTensor> out;
    for (const auto& [name, st] : state_) {
        out.push_back({std::string(prefix) + "m/" + name, st.m});
        out.push_back({std::string(prefix) + "v/" + name, st.v});
        out.push_back({std::string(prefix) + "t/" + name, Tensor::scalar(st.steps)});
    }
    return out;
}

void Adam::import_state(const std::vector<NamedTensor>& tensors, std::string_view prefix)
{
    state_.clear();
    const std::string mp = std::string(prefix) + "m/";
    for (const auto& t : tensors) {
        if (t.name.rfind(mp, 0) != 0) continue;
        const std::string name = t.name.substr(mp.size());
        Moments st;
        st.m = t.value;
        st.v = find_tensor(tensors, std::string(prefix) + "v/" + name);
        st.steps = find_tensor(tensors, std::string(prefix) + "t/" + name)[0];
        state_[name] = std::move(st);
    }
}

double cosine_lr(std::size_t epoch, double lr_max, double lr_min, std::size_t horizon)
{
    if (horizon == 0) return lr_min;
    const double t = static_cast<double>(std::min(epoch, horizon)) / static_cast<double>(horizon);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * t));
}

// ---- gradient check ------------------------------------------------------------------

double finite_diff_check(const std::function<Var()>& loss, ParamSet& params, double eps)
{
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
    auto eval = [&]() {
        const double v = loss().item();
        if (!std::isfinite(v)) throw std::runtime_error("finite_diff_check: non-finite loss value");
        return v;
    };

    params.zero_grad();
    const Var l = loss();
    if (!std::isfinite(l.item())) throw std::runtime_error("finite_diff_check: non-finite loss value");
    backward(l);

    double worst = 0.0;
    for (auto& e : params) {
        const Tensor analytic = e.var.grad();
        Tensor& p = e.var.mutable_value();
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double x0 = p[i];
            p[i] = x0 + 2.0 * eps;
            const double f2p = eval();
            p[i] = x0 + eps;
            const double f1p = eval();
            p[i] = x0 - eps;
            const double f1m = eval();
            p[i] = x0 - 2.0 * eps;
            const double f2m = eval();
            p[i] = x0;
            const double numeric = (8.0 * (f1p - f1m) - (f2p - f2m)) / (12.0 * eps);
            const double a = analytic[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    params.zero_grad();
    return worst;
}

} // namespace hutd::ad
