#pragma once

// Hybrid-level contrastive learning: encoder and projection heads, the
// instance and prototype objectives, and adversarial spectral augmentation.

#include "hutd/mlp.hpp"
#include "hutd/rgc.hpp"
#include "hutd/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hutd::hlcl {

inline constexpr std::size_t kHidden = 128;
inline constexpr std::size_t kEmbed = 64;

// Encoder F (B -> 128 -> 64) shared by both levels, heads h_I and h_C
// (64 -> 64 -> 64) with separate weights.
struct NetworkBundle {
    nn::Mlp encoder;
    nn::Mlp head_instance;
    nn::Mlp head_cluster;

    NetworkBundle() = default;
    NetworkBundle(std::size_t bands, std::uint64_t seed, nn::Activation act = nn::Activation::Tanh);

    std::size_t bands() const { return encoder.in_width(); }
    NetworkBundle clone() const;
    std::vector<ad::NamedTensor> export_values() const;
    void import_values(const std::vector<ad::NamedTensor>& tensors);
};

enum class Attack { Fgsm, Pgd };
const char* attack_name(Attack a);
Attack parse_attack(const std::string& s);

// Autoencoder used only to craft perturbations; its encoder has F's shape
// but its own weights.
struct Augmenter {
    nn::Mlp encoder;
    nn::Mlp decoder;
    Attack attack = Attack::Fgsm;
    double epsilon = 0.1;        // l-infinity budget
    std::size_t pgd_steps = 5;
    double upper = 1.5;          // outputs are clamped to [0, upper]
    bool trained = false;

    Augmenter() = default;
    Augmenter(std::size_t bands, std::uint64_t seed, nn::Activation act = nn::Activation::Tanh);

    std::vector<ad::NamedTensor> export_values() const;
    void import_values(const std::vector<ad::NamedTensor>& tensors);
};

struct PretrainOptions {
    std::size_t epochs = 30;
    double lr = 1e-3;
    double lr_min = 1e-5;        // cosine-annealed over `epochs`
    std::size_t batch = 256;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    std::vector<double> epoch_loss;  // mean batch loss per epoch
    double final_loss = 0.0;         // full data after training
};

// mean_i || g(F(x_i)) - x_i ||_2
ad::Var reconstruction_loss(const Augmenter& aug, const ad::Var& x);
Tensor reconstruction_errors(const Augmenter& aug, const Tensor& x);

// Adam on the reconstruction loss. Throws std::runtime_error on divergence.
PretrainResult pretrain_autoencoder(const Tensor& samples, Augmenter& aug, const PretrainOptions& options);

// J(delta) = sum_i ||F(x_i + d_i) - F(x_i)|| - ||g(F(x_i + d_i)) - x_i|| with the
// augmenter weights held constant.
ad::Var adversarial_objective(const Augmenter& aug, const Tensor& x, const ad::Var& delta);

struct AugmentStats {
    double max_abs_delta = 0.0;
    double mean_reconstruction = 0.0;  // ||g(F(x+)) - x|| over emitted rows
};

// FGSM: delta = eps * sign(grad J) with the gradient taken at a uniform
// random point of the ball. PGD: random start, `pgd_steps` signed steps of
// 2 eps / steps, projected back onto the ball. x+ is clamped to [0, upper].
Tensor adversarial_augment(const Tensor& x, const Augmenter& aug, Rng& rng, AugmentStats* stats = nullptr);

// -(p/|p|).(z/|z|) per row; a rank-1 pair yields a scalar.
ad::Var neg_cosine(const ad::Var& p, const ad::Var& z);

enum class InstanceForm {
    Verbatim,   // 1/2 D(p1, stop(z2)) + 1/2 D(z1, stop(p2))
    Canonical,  // 1/2 D(p1, stop(z2)) + 1/2 D(p2, stop(z1))
};

enum class InfoNceForm {
    Verbatim,  // denominator sum_j exp(z_i.z_j / t) + exp(z_j.z_j+ / t)
    Standard,  // denominator sum_j exp(z_i.z_j+ / t)
};

// Mean over rows of 1/2 D(p1, stop(z2)) + 1/2 D(z1, stop(p2)) (Verbatim) on
// already-embedded views.
ad::Var instance_objective(const ad::Var& p1, const ad::Var& z1, const ad::Var& p2, const ad::Var& z2,
                           InstanceForm form = InstanceForm::Verbatim);

// Mean instance loss for two given views of the same rows.
ad::Var instance_loss_views(const NetworkBundle& bundle, const Tensor& view1, const Tensor& view2,
                            InstanceForm form = InstanceForm::Verbatim);
// Draws both views with adversarial_augment.
ad::Var instance_loss(const Tensor& batch, const NetworkBundle& bundle, const Augmenter& aug, Rng& rng,
                      InstanceForm form = InstanceForm::Verbatim);

// Row m: per-band mean of the members of reliable cluster m.
Tensor compute_prototypes(const Tensor& samples, const rgc::Refinement& refinement);
// As above, except that the reliable cluster with original index
// `reference_cluster` takes `reference` as its prototype.
Tensor compute_prototypes(const Tensor& samples, const rgc::Refinement& refinement, std::size_t reference_cluster,
                          std::span<const double> reference);

// Mean over rows of D(p_i, stop(zbar[member_cluster[i]])).
ad::Var pre_alignment(const ad::Var& p, const ad::Var& zbar, std::span<const std::size_t> member_cluster);

// Mean over members of D(h_C(F(x_i)), stop(F(prototype of i's cluster))).
ad::Var prototype_pre_loss(const NetworkBundle& bundle, const Tensor& members,
                           std::span<const std::size_t> member_cluster, const Tensor& prototypes);

// -sum_i log softmax-style ratio over L2-normalised F embeddings.
ad::Var prototype_infonce(const NetworkBundle& bundle, const Tensor& prototypes, const Tensor& augmented,
                          double tau, InfoNceForm form = InfoNceForm::Verbatim);

ad::Var cluster_loss(const NetworkBundle& bundle, const Tensor& members, std::span<const std::size_t> member_cluster,
                     const Tensor& prototypes, const Tensor& augmented, double tau,
                     InfoNceForm form = InfoNceForm::Verbatim);

struct TrainOptions {
    std::size_t batch = 64;
    double lr = 5e-3;
    double weight_decay = 1e-4;
    rgc::Optimizer optimizer = rgc::Optimizer::Sgd;
    double tau = 0.5;
    InstanceForm instance_form = InstanceForm::Verbatim;
    InfoNceForm infonce_form = InfoNceForm::Verbatim;
    std::uint64_t seed = 0;  // shuffling and augmentation stream for this epoch
};

struct EpochMetrics {
    double instance_loss = 0.0;  // mean over batches that had unreliable rows
    double cluster_loss = 0.0;   // mean over batches that had reliable rows
    std::size_t batches = 0;
    double max_abs_delta = 0.0;
    double mean_reconstruction = 0.0;
};

// One shuffled pass over the reliable members and unreliable instances.
EpochMetrics train_epoch(const Tensor& samples, const rgc::Refinement& refinement, const Tensor& prototypes,
                         NetworkBundle& bundle, const Augmenter& aug, ad::Adam& adam, const TrainOptions& options);

// CSV: epoch,instance_loss,cluster_loss
void save_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::filesystem::path& path);

} // namespace hutd::hlcl
