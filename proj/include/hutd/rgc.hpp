#pragma once

// Reliability-guided clustering: reference-anchored k-means, a pair of
// classifiers trained to disagree, and the agreement-based split into
// reliable clusters and unreliable instances.

#include "hutd/mlp.hpp"
#include "hutd/params.hpp"
#include "hutd/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hutd::rgc {

// Identity on epoch 1, encoder features afterwards.
Tensor transform_features(const Tensor& samples, std::size_t epoch, const nn::Mlp* encoder);

struct Partition {
    std::vector<std::size_t> assignments;   // in [0, k]
    Tensor prototypes;                      // (k + 1) x D, row k is the reference
    std::size_t reference_index = 0;
    std::vector<std::uint8_t> reliability;  // filled by the caller after filtering
    std::size_t k = 0;
    std::size_t iterations = 0;
    double objective = 0.0;                 // mean squared distance to the assigned prototype

    std::vector<std::size_t> cluster_sizes() const;
};

struct ClusterOptions {
    bool balanced = false;
    std::size_t max_iterations = 100;
    std::size_t restarts = 4;
    bool refine = true;  // Hartigan single-point moves after Lloyd, unbalanced mode only
};

// Per-restart record of every assignment step, for tests.
struct ClusterTrace {
    std::vector<std::vector<double>> objective;
    std::vector<std::vector<Tensor>> prototypes;
};

// Lloyd iterations with k free prototypes plus the fixed reference row.
// Balanced mode gives every one of the k + 1 clusters floor(n/(k+1)) or
// ceil(n/(k+1)) members via cost-sorted greedy filling.
Partition cluster_with_reference(const Tensor& features, std::span<const double> reference, std::size_t k,
                                 std::uint64_t seed, const ClusterOptions& options = {},
                                 ClusterTrace* trace = nullptr);

double clustering_objective(const Tensor& features, const Tensor& prototypes,
                            std::span<const std::size_t> assignments);

// Differentiable form of the objective above: rows assigned to cluster k are
// compared with stop(reference), the others with rows of `free_prototypes`.
ad::Var clustering_loss(const ad::Var& features, const ad::Var& free_prototypes, const ad::Var& reference,
                        std::span<const std::size_t> assignments);

// -sum m log n with n floored at 1e-12. Both must sum to 1 within 1e-9.
double cross_entropy(std::span<const double> m, std::span<const double> n);

struct ClassifierPair {
    nn::Mlp first;
    nn::Mlp second;
    // Inputs are standardised with statistics taken at training time.
    std::vector<double> mean;
    std::vector<double> inv_std;

    ClassifierPair() = default;
    ClassifierPair(std::size_t in, std::size_t hidden, std::size_t classes, std::uint64_t seed);
    // Both members share the weights drawn for `seed`.
    static ClassifierPair identical(std::size_t in, std::size_t hidden, std::size_t classes, std::uint64_t seed);

    std::size_t classes() const { return first.out_width(); }
    Tensor standardize(const Tensor& features) const;
};

enum class Optimizer { Sgd, Adam };

struct DiscrepancyOptions {
    std::size_t warmup = 0;   // label-fitting steps before the discrepancy ascent
    std::size_t steps = 200;
    double lr = 1e-3;
    std::size_t batch = 256;  // batch >= n gives full-batch ascent
    Optimizer optimizer = Optimizer::Adam;
    std::uint64_t seed = 0;
};

struct DiscrepancyResult {
    std::vector<double> objective;  // per ascent step, before the update
    double final_objective = 0.0;   // full data, after training
};

// Mean over samples of CE(q1,q2) + CE(q2,q1) - CE(Y,q1) - CE(Y,q2) on the graph.
ad::Var discrepancy_objective(const ClassifierPair& pair, const ad::Var& inputs, const Tensor& onehot);

// `warmup` steps on the consistency terms alone, then gradient ascent on the
// discrepancy objective. Sets the pair's input standardisation from
// `features` first.
DiscrepancyResult train_discrepancy_classifiers(const Tensor& features, std::span<const std::size_t> labels,
                                                ClassifierPair& pair, const DiscrepancyOptions& options);

// Row-wise argmax agreement; ties resolve to the lowest index.
std::vector<std::uint8_t> agreement_flags(const Tensor& out1, const Tensor& out2);
std::vector<std::uint8_t> reliability_filter(const Tensor& features, const ClassifierPair& pair);

struct Refinement {
    std::vector<std::size_t> cluster_ids;               // original index of each reliable cluster
    std::vector<std::vector<std::size_t>> clusters;     // members, ascending
    std::vector<std::size_t> unreliable;                // ascending

    std::size_t reliable_count() const;
};

Refinement refine_partition(const Partition& partition, std::span<const std::uint8_t> flags,
                            std::size_t min_cluster_size = 2);

// CSV: pixel_index,cluster,reliable
void save_partition_csv(const Partition& partition, const std::filesystem::path& path);

} // namespace hutd::rgc
