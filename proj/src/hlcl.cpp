#include "hutd/hlcl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace hutd::hlcl {

// ---- networks ---------------------------------------------------------------------------

NetworkBundle::NetworkBundle(std::size_t bands, std::uint64_t seed, nn::Activation act)
    : encoder("encoder", {bands, kHidden, kEmbed}, act, derive_seed(seed, 1)),
      head_instance("head_i", {kEmbed, kEmbed, kEmbed}, act, derive_seed(seed, 2)),
      head_cluster("head_c", {kEmbed, kEmbed, kEmbed}, act, derive_seed(seed, 3))
{
}

NetworkBundle NetworkBundle::clone() const
{
    NetworkBundle b;
    b.encoder = encoder.clone();
    b.head_instance = head_instance.clone();
    b.head_cluster = head_cluster.clone();
    return b;
}

namespace {

void append(std::vector<ad::NamedTensor>& out, const nn::Mlp& m)
{
    auto v = m.params().export_values();
    out.insert(out.end(), v.begin(), v.end());
}

} // namespace

std::vector<ad::NamedTensor> NetworkBundle::export_values() const
{
    std::vector<ad::NamedTensor> out;
    append(out, encoder);
    append(out, head_instance);
    append(out, head_cluster);
    return out;
}

void NetworkBundle::import_values(const std::vector<ad::NamedTensor>& tensors)
{
    encoder.params().import_values(tensors);
    head_instance.params().import_values(tensors);
    head_cluster.params().import_values(tensors);
}

const char* attack_name(Attack a) { return a == Attack::Fgsm ? "fgsm" : "pgd"; }

Attack parse_attack(const std::string& s)
{
    if (s == "fgsm") return Attack::Fgsm;
    if (s == "pgd") return Attack::Pgd;
    throw std::invalid_argument("unknown attack '" + s + "' (expected fgsm or pgd)");
}

Augmenter::Augmenter(std::size_t bands, std::uint64_t seed, nn::Activation act)
    : encoder("aug_enc", {bands, kHidden, kEmbed}, act, derive_seed(seed, 1)),
      decoder("aug_dec", {kEmbed, kHidden, bands}, act, derive_seed(seed, 2))
{
}

std::vector<ad::NamedTensor> Augmenter::export_values() const
{
    std::vector<ad::NamedTensor> out;
    append(out, encoder);
    append(out, decoder);
    return out;
}

void Augmenter::import_values(const std::vector<ad::NamedTensor>& tensors)
{
    encoder.params().import_values(tensors);
    decoder.params().import_values(tensors);
    trained = true;
}

// ---- autoencoder -------------------------------------------------------------------------

ad::Var reconstruction_loss(const Augmenter& aug, const ad::Var& x)
{
    return ad::mean(ad::l2_norm(ad::sub(aug.decoder.forward(aug.encoder.forward(x)), x)));
}

Tensor reconstruction_errors(const Augmenter& aug, const Tensor& x)
{
    const Tensor rec = aug.decoder.infer(aug.encoder.infer(x));
    Tensor out({x.rows()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        const auto a = rec.row(i), b = x.row(i);
        for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        out[i] = std::sqrt(s);
    }
    return out;
}

PretrainResult pretrain_autoencoder(const Tensor& samples, Augmenter& aug, const PretrainOptions& options)
{
    const std::size_t n = samples.rows();
    if (n == 0) throw std::invalid_argument("pretrain_autoencoder: no samples");
    if (samples.cols() != aug.encoder.in_width()) throw std::invalid_argument("pretrain_autoencoder: band mismatch");
    PretrainResult result;
    ad::Adam adam;
    Rng rng(derive_seed(options.seed, 11));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch = std::min(std::max<std::size_t>(options.batch, 1), n);
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        const double lr = ad::cosine_lr(epoch, options.lr, options.lr_min, options.epochs);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t stop = std::min(start + batch, n);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            const ad::Var loss = reconstruction_loss(aug, ad::constant(take_rows(samples, idx)));
            const double v = loss.item();
            if (!std::isfinite(v))
                throw std::runtime_error("pretrain_autoencoder: loss diverged at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batches) + " (lr " + std::to_string(lr) +
                                         ")");
            ad::backward(loss);
            adam.step(aug.encoder.params(), "enc", lr, 0.0);
            adam.step(aug.decoder.params(), "dec", lr, 0.0);
            total += v;
            ++batches;
        }
        result.epoch_loss.push_back(total / static_cast<double>(batches));
    }
    const Tensor err = reconstruction_errors(aug, samples);
    result.final_loss = std::accumulate(err.values().begin(), err.values().end(), 0.0) / static_cast<double>(n);
    aug.trained = true;
    return result;
}

// ---- augmentation -----------------------------------------------------------------------------

ad::Var adversarial_objective(const Augmenter& aug, const Tensor& x, const ad::Var& delta)
{
    const ad::Var xc = ad::constant(x);
    const ad::Var e = aug.encoder.forward_frozen(ad::add(xc, delta));
    const ad::Var e0 = ad::constant(aug.encoder.infer(x));
    const ad::Var drift = ad::l2_norm(ad::sub(e, e0));
    const ad::Var rec = ad::l2_norm(ad::sub(aug.decoder.forward_frozen(e), xc));
    return ad::sum(ad::sub(drift, rec));
}

namespace {

Tensor objective_gradient(const Augmenter& aug, const Tensor& x, const Tensor& delta)
{
    const ad::Var d = ad::parameter(delta);
    ad::backward(adversarial_objective(aug, x, d));
    return d.grad();
}

double sign(double g) { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

} // namespace

Tensor adversarial_augment(const Tensor& x, const Augmenter& aug, Rng& rng, AugmentStats* stats)
{
    if (!(aug.epsilon >= 0.0)) throw std::invalid_argument("adversarial_augment: epsilon must be >= 0");
    if (!aug.trained) throw std::logic_error("adversarial_augment: augmenter has not been pretrained");
    if (x.rank() != 2 || x.cols() != aug.encoder.in_width())
        throw std::invalid_argument("adversarial_augment: band mismatch");
    if (stats) *stats = {};
    if (aug.epsilon == 0.0) return x;

    const double eps = aug.epsilon;
    Tensor delta(x.shape());
    for (auto& v : delta.storage()) v = rng.uniform(-eps, eps);

    if (aug.attack == Attack::Fgsm) {
        const Tensor g = objective_gradient(aug, x, delta);
        for (std::size_t i = 0; i < delta.numel(); ++i) delta[i] = eps * sign(g[i]);
    } else {
        const std::size_t steps = std::max<std::size_t>(aug.pgd_steps, 1);
        const double alpha = 2.0 * eps / static_cast<double>(steps);
        for (std::size_t s = 0; s < steps; ++s) {
            const Tensor g = objective_gradient(aug, x, delta);
            for (std::size_t i = 0; i < delta.numel(); ++i)
                delta[i] = std::clamp(delta[i] + alpha * sign(g[i]), -eps, eps);
        }
    }

    Tensor out = x;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(x[i] + delta[i], 0.0, aug.upper);
    if (stats) {
        for (std::size_t i = 0; i < out.numel(); ++i)
            stats->max_abs_delta = std::max(stats->max_abs_delta, std::abs(out[i] - x[i]));
        const Tensor rec = aug.decoder.infer(aug.encoder.infer(out));
        double total = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) s += (rec.at(r, j) - x.at(r, j)) * (rec.at(r, j) - x.at(r, j));
            total += std::sqrt(s);
        }
        stats->mean_reconstruction = total / static_cast<double>(x.rows());
    }
    return out;
}

// ---- losses ------------------------------------------------------------------------------------

ad::Var neg_cosine(const ad::Var& p, const ad::Var& z)
{
    return ad::scale(ad::dot(ad::normalize(p), ad::normalize(z)), -1.0);
}

ad::Var instance_objective(const ad::Var& p1, const ad::Var& z1, const ad::Var& p2, const ad::Var& z2, InstanceForm form)
{
    const ad::Var first = neg_cosine(p1, ad::stop_gradient(z2));
    const ad::Var second = form == InstanceForm::Verbatim ? neg_cosine(z1, ad::stop_gradient(p2))
                                                          : neg_cosine(p2, ad::stop_gradient(z1));
    return ad::mean(ad::scale(ad::add(first, second), 0.5));
}

ad::Var instance_loss_views(const NetworkBundle& bundle, const Tensor& view1, const Tensor& view2, InstanceForm form)
{
    if (view1.rows() == 0) throw std::invalid_argument("instance_loss: empty batch");
    if (view1.shape() != view2.shape()) throw std::invalid_argument("instance_loss: view shapes differ");
    const ad::Var z1 = bundle.encoder.forward(ad::constant(view1));
    const ad::Var z2 = bundle.encoder.forward(ad::constant(view2));
    return instance_objective(bundle.head_instance.forward(z1), z1, bundle.head_instance.forward(z2), z2, form);
}

ad::Var instance_loss(const Tensor& batch, const NetworkBundle& bundle, const Augmenter& aug, Rng& rng,
                      InstanceForm form)
{
    if (batch.rows() == 0) throw std::invalid_argument("instance_loss: empty batch");
    const Tensor v1 = adversarial_augment(batch, aug, rng);
    const Tensor v2 = adversarial_augment(batch, aug, rng);
    return instance_loss_views(bundle, v1, v2, form);
}

Tensor compute_prototypes(const Tensor& samples, const rgc::Refinement& refinement)
{
    const std::size_t d = samples.cols();
    Tensor out({refinement.clusters.size(), d});
    for (std::size_t m = 0; m < refinement.clusters.size(); ++m) {
        const auto& members = refinement.clusters[m];
        if (members.empty()) throw std::invalid_argument("compute_prototypes: empty cluster");
        auto row = out.row(m);
        for (auto i : members) {
            const auto x = samples.row(i);
            for (std::size_t j = 0; j < d; ++j) row[j] += x[j];
        }
        for (auto& v : row) v /= static_cast<double>(members.size());
    }
    return out;
}

Tensor compute_prototypes(const Tensor& samples, const rgc::Refinement& refinement, std::size_t reference_cluster,
                          std::span<const double> reference)
{
    if (reference.size() != samples.cols()) throw std::invalid_argument("compute_prototypes: reference width mismatch");
    Tensor out = compute_prototypes(samples, refinement);
    for (std::size_t m = 0; m < refinement.cluster_ids.size(); ++m)
        if (refinement.cluster_ids[m] == reference_cluster) std::copy(reference.begin(), reference.end(), out.row(m).begin());
    return out;
}

ad::Var pre_alignment(const ad::Var& p, const ad::Var& zbar, std::span<const std::size_t> member_cluster)
{
    const ad::Var target = ad::take_rows(ad::stop_gradient(zbar), {member_cluster.begin(), member_cluster.end()});
    return ad::mean(neg_cosine(p, target));
}

ad::Var prototype_pre_loss(const NetworkBundle& bundle, const Tensor& members,
                           std::span<const std::size_t> member_cluster, const Tensor& prototypes)
{
    if (members.rows() == 0 || prototypes.rows() == 0) throw std::invalid_argument("prototype_pre_loss: empty cluster");
    if (member_cluster.size() != members.rows()) throw std::invalid_argument("prototype_pre_loss: one cluster per member");
    for (auto c : member_cluster)
        if (c >= prototypes.rows()) throw std::invalid_argument("prototype_pre_loss: cluster index out of range");
    const ad::Var p = bundle.head_cluster.forward(bundle.encoder.forward(ad::constant(members)));
    return pre_alignment(p, bundle.encoder.forward(ad::constant(prototypes)), member_cluster);
}

ad::Var prototype_infonce(const NetworkBundle& bundle, const Tensor& prototypes, const Tensor& augmented, double tau,
                          InfoNceForm form)
{
    if (prototypes.rank() != 2 || prototypes.rows() < 2)
        throw std::invalid_argument("prototype_infonce: need at least two prototypes");
    if (augmented.shape() != prototypes.shape()) throw std::invalid_argument("prototype_infonce: view shape mismatch");
    if (!(tau > 0.0)) throw std::invalid_argument("prototype_infonce: temperature must be positive");
    const ad::Var z = ad::normalize(bundle.encoder.forward(ad::constant(prototypes)));
    const ad::Var zp = ad::normalize(bundle.encoder.forward(ad::constant(augmented)));
    const ad::Var pos = ad::scale(ad::dot(z, zp), 1.0 / tau);
    ad::Var denom;
    if (form == InfoNceForm::Verbatim) {
        const ad::Var sim = ad::scale(ad::matmul(z, ad::transpose(z)), 1.0 / tau);
        denom = ad::add(ad::row_sum(ad::exp(sim)), ad::sum(ad::exp(pos)));
    } else {
        const ad::Var sim = ad::scale(ad::matmul(z, ad::transpose(zp)), 1.0 / tau);
        denom = ad::row_sum(ad::exp(sim));
    }
    return ad::sum(ad::sub(ad::log(denom), pos));
}

ad::Var cluster_loss(const NetworkBundle& bundle, const Tensor& members, std::span<const std::size_t> member_cluster,
                     const Tensor& prototypes, const Tensor& augmented, double tau, InfoNceForm form)
{
    if (prototypes.rows() == 0) throw std::invalid_argument("cluster_loss: no reliable clusters");
    return ad::add(prototype_pre_loss(bundle, members, member_cluster, prototypes),
                   prototype_infonce(bundle, prototypes, augmented, tau, form));
}

// ---- training ------------------------------------------------------------------------------------

namespace {

bool reached(const nn::Mlp& m)
{
    return m.params().begin()->var.grad_populated();
}

void step(nn::Mlp& m, const char* group, ad::Adam& adam, const TrainOptions& o)
{
    if (!reached(m)) return;
    if (o.optimizer == rgc::Optimizer::Adam) adam.step(m.params(), group, o.lr, o.weight_decay);
    else ad::sgd_step(m.params(), o.lr, o.weight_decay);
}

} // namespace

EpochMetrics train_epoch(const Tensor& samples, const rgc::Refinement& refinement, const Tensor& prototypes,
                         NetworkBundle& bundle, const Augmenter& aug, ad::Adam& adam, const TrainOptions& options)
{
    // Pool entries: cluster position for reliable rows, npos for unreliable ones.
    constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t m = 0; m < refinement.clusters.size(); ++m)
        for (auto i : refinement.clusters[m]) pool.emplace_back(i, m);
    for (auto i : refinement.unreliable) pool.emplace_back(i, npos);
    if (pool.empty()) throw std::invalid_argument("train_epoch: nothing to train on");
    const std::size_t t = refinement.clusters.size();
    if (prototypes.rows() != t) throw std::invalid_argument("train_epoch: one prototype per reliable cluster");

    Rng rng(options.seed);
    rng.shuffle(pool.begin(), pool.end());
    const std::size_t batch = std::max<std::size_t>(options.batch, 1);

    EpochMetrics metrics;
    std::size_t inst_batches = 0, clus_batches = 0, aug_calls = 0;
    for (std::size_t start = 0; start < pool.size(); start += batch) {
        const std::size_t stop = std::min(start + batch, pool.size());
        std::vector<std::size_t> u_rows, c_rows, c_ids;
        for (std::size_t p = start; p < stop; ++p) {
            if (pool[p].second == npos) u_rows.push_back(pool[p].first);
            else {
                c_rows.push_back(pool[p].first);
                c_ids.push_back(pool[p].second);
            }
        }
        ad::Var total;
        if (!u_rows.empty()) {
            const Tensor x = take_rows(samples, u_rows);
            AugmentStats s1, s2;
            const Tensor v1 = adversarial_augment(x, aug, rng, &s1);
            const Tensor v2 = adversarial_augment(x, aug, rng, &s2);
            metrics.max_abs_delta = std::max({metrics.max_abs_delta, s1.max_abs_delta, s2.max_abs_delta});
            metrics.mean_reconstruction += s1.mean_reconstruction + s2.mean_reconstruction;
            aug_calls += 2;
            const ad::Var li = instance_loss_views(bundle, v1, v2, options.instance_form);
            metrics.instance_loss += li.item();
            ++inst_batches;
            total = li;
        }
        if (!c_rows.empty()) {
            const Tensor x = take_rows(samples, c_rows);
            ad::Var lc = prototype_pre_loss(bundle, x, c_ids, prototypes);
            if (t >= 2) {
                const Tensor aug_protos = adversarial_augment(prototypes, aug, rng);
                lc = ad::add(lc, prototype_infonce(bundle, prototypes, aug_protos, options.tau, options.infonce_form));
            }
            metrics.cluster_loss += lc.item();
            ++clus_batches;
            total = total.defined() ? ad::add(total, lc) : lc;
        }
        ad::backward(total);
        step(bundle.encoder, "encoder", adam, options);
        step(bundle.head_instance, "head_i", adam, options);
        step(bundle.head_cluster, "head_c", adam, options);
        ++metrics.batches;
    }
    if (inst_batches) metrics.instance_loss /= static_cast<double>(inst_batches);
    if (clus_batches) metrics.cluster_loss /= static_cast<double>(clus_batches);
    if (aug_calls) metrics.mean_reconstruction /= static_cast<double>(aug_calls);
    return metrics;
}

void save_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("metrics csv: cannot write " + path.string());
    os.precision(17);
    os << "epoch,instance_loss,cluster_loss\n";
    for (std::size_t e = 0; e < metrics.size(); ++e)
        os << e + 1 << "," << metrics[e].instance_loss << "," << metrics[e].cluster_loss << "\n";
}

} // namespace hutd::hlcl
