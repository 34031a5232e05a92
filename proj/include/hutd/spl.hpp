#pragma once

// Self-paced alternation: each round re-clusters with the current encoder,
// splits reliable from unreliable samples and trains the bundle on both.

#include "hutd/hlcl.hpp"
#include "hutd/rgc.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hutd::spl {

struct SplConfig {
    std::size_t k = 8;
    std::size_t rounds = 10;
    std::size_t epochs = 10;               // per round
    std::size_t batch = 64;
    double lr = 5e-3;
    double lr_min = 5e-5;
    std::size_t lr_horizon = 100;          // epochs of cosine decay, counted across rounds
    double weight_decay = 1e-4;
    rgc::Optimizer optimizer = rgc::Optimizer::Sgd;
    double epsilon = 0.1;
    hlcl::Attack attack = hlcl::Attack::Fgsm;
    std::size_t pgd_steps = 5;
    std::uint64_t seed = 42;
    bool balanced = true;
    std::size_t min_cluster_size = 2;
    bool unit_features = true;             // cluster on L2-normalised embeddings after round 1
    bool reference_prototype = true;       // reference cluster uses x_ref instead of its member mean
    std::size_t cluster_restarts = 4;
    std::size_t cluster_iterations = 100;
    std::size_t classifier_hidden = 64;
    std::size_t classifier_warmup = 200;
    std::size_t classifier_steps = 20;
    double classifier_lr = 1e-2;
    std::size_t classifier_batch = 256;
    rgc::Optimizer classifier_optimizer = rgc::Optimizer::Sgd;
    std::size_t ae_epochs = 30;
    double ae_lr = 1e-3;
    std::size_t ae_batch = 256;
    double tau = 0.5;
    hlcl::InstanceForm instance_form = hlcl::InstanceForm::Verbatim;
    hlcl::InfoNceForm infonce_form = hlcl::InfoNceForm::Verbatim;
    nn::Activation activation = nn::Activation::Tanh;
    std::size_t patience = 0;              // 0 disables early stopping
    bool test_mode = false;                // extra internal assertions

    void validate() const;
};

struct RoundRecord {
    std::size_t round = 0;
    std::size_t reliable = 0;
    std::size_t unreliable = 0;
    double reliable_fraction = 0.0;
    std::size_t clusters = 0;              // t
    double discrepancy = 0.0;
    double instance_loss = 0.0;            // mean over the round's epochs
    double cluster_loss = 0.0;
    double max_abs_delta = 0.0;
    double reconstruction = 0.0;
    double wall_seconds = 0.0;             // since the run started
};

struct SplTrace {
    std::vector<RoundRecord> rounds;
    std::vector<hlcl::EpochMetrics> epochs;

    // Equality of everything except wall time.
    bool same_results(const SplTrace& other) const;
    // round,reliable,unreliable,reliable_fraction,clusters,discrepancy,
    // instance_loss,cluster_loss,max_abs_delta,reconstruction,wall_seconds
    void save_csv(const std::filesystem::path& path) const;
};

struct SplState {
    hlcl::NetworkBundle bundle;
    hlcl::Augmenter augmenter;
    ad::Adam adam;
    std::size_t completed_rounds = 0;
    SplTrace trace;
    double pretrain_loss = 0.0;
    rgc::Partition last_partition;         // not persisted
};

struct RunHooks {
    // When set, a checkpoint is written after every round.
    std::filesystem::path checkpoint_path;
    std::function<void(const std::string&)> log;
    // Stop after this many rounds in total (0 = run to cfg.rounds); for tests.
    std::size_t stop_after = 0;
};

// Fresh bundle and pretrained augmenter for `samples`.
SplState initialize(const Tensor& samples, const SplConfig& cfg);

// Runs rounds completed_rounds + 1 .. cfg.rounds.
void run_rounds(SplState& state, const Tensor& samples, std::span<const double> reference, const SplConfig& cfg,
                const RunHooks& hooks = {});

SplState run(const Tensor& samples, std::span<const double> reference, const SplConfig& cfg,
             const RunHooks& hooks = {});

void checkpoint_round(const SplState& state, const SplConfig& cfg, const std::filesystem::path& path);
// Throws on version mismatch, corruption, or a checkpoint written for a
// different seed, k or band count.
SplState resume(const std::filesystem::path& path, const SplConfig& cfg, std::size_t bands);

} // namespace hutd::spl
