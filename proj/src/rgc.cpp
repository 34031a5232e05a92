#include "hutd/rgc.hpp"

#include "hutd/kernels.hpp"
#include "hutd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hutd::rgc {

Tensor transform_features(const Tensor& samples, std::size_t epoch, const nn::Mlp* encoder)
{
    if (epoch == 0) throw std::invalid_argument("transform_features: epochs count from 1");
    if (epoch == 1) return samples;
    if (encoder == nullptr) throw std::invalid_argument("transform_features: encoder required after epoch 1");
    return encoder->infer(samples);
}

std::vector<std::size_t> Partition::cluster_sizes() const
{
    std::vector<std::size_t> sizes(k + 1, 0);
    for (auto a : assignments) ++sizes[a];
    return sizes;
}

// ---- clustering -------------------------------------------------------------------

double clustering_objective(const Tensor& features, const Tensor& prototypes,
                            std::span<const std::size_t> assignments)
{
    const std::size_t n = features.rows(), d = features.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = features.row(i);
        const auto p = prototypes.row(assignments[i]);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x[j] - p[j];
            s += diff * diff;
        }
        total += s;
    }
    return total / static_cast<double>(n);
}

ad::Var clustering_loss(const ad::Var& features, const ad::Var& free_prototypes, const ad::Var& reference,
                        std::span<const std::size_t> assignments)
{
    const std::size_t n = features.shape().at(0), k = free_prototypes.shape().at(0);
    if (assignments.size() != n) throw std::invalid_argument("clustering_loss: one assignment per row");
    std::vector<std::size_t> free_rows, free_ids, ref_rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (assignments[i] > k) throw std::invalid_argument("clustering_loss: assignment out of range");
        if (assignments[i] == k) {
            ref_rows.push_back(i);
        } else {
            free_rows.push_back(i);
            free_ids.push_back(assignments[i]);
        }
    }
    ad::Var total = ad::constant(Tensor::scalar(0.0));
    if (!free_rows.empty()) {
        const ad::Var d = ad::sub(ad::take_rows(features, free_rows), ad::take_rows(free_prototypes, free_ids));
        total = ad::add(total, ad::sum(ad::mul(d, d)));
    }
    if (!ref_rows.empty()) {
        const ad::Var d = ad::sub(ad::take_rows(features, ref_rows), ad::stop_gradient(reference));
        total = ad::add(total, ad::sum(ad::mul(d, d)));
    }
    return ad::scale(total, 1.0 / static_cast<double>(n));
}

namespace {

void assign_nearest(const std::vector<double>& dist, std::size_t n, std::size_t c, std::vector<std::size_t>& out)
{
    for (std::size_t i = 0; i < n; ++i) {
        // Ties go to the reference cluster (last column), then to the lowest index.
        const double* row = dist.data() + i * c;
        std::size_t best = c - 1;
        for (std::size_t j = 0; j + 1 < c; ++j)
            if (row[j] < row[best]) best = j;
        out[i] = best;
    }
}

void assign_balanced(const std::vector<double>& dist, std::size_t n, std::size_t c, std::vector<std::size_t>& out)
{
    std::vector<std::size_t> order(n * c);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return a < b;
    });
    const std::size_t floor_cap = n / c;
    const std::size_t extra = n % c;  // clusters allowed one more member
    std::vector<std::size_t> count(c, 0);
    std::vector<std::uint8_t> done(n, 0);
    std::size_t at_ceiling = 0, placed = 0;
    for (std::size_t idx : order) {
        const std::size_t i = idx / c, j = idx % c;
        if (done[i]) continue;
        if (count[j] < floor_cap) {
            // fall through
        } else if (count[j] == floor_cap && at_ceiling < extra) {
            ++at_ceiling;
        } else {
            continue;
        }
        ++count[j];
        out[i] = j;
        done[i] = 1;
        if (++placed == n) break;
    }
}

Tensor seed_prototypes(const Tensor& x, std::span<const double> reference, std::size_t k, Rng& rng)
{
    const std::size_t n = x.rows(), d = x.cols();
    Tensor protos({k + 1, d});
    std::copy(reference.begin(), reference.end(), protos.row(k).begin());
    std::vector<double> nearest(n), dist(n);
    kernels::sq_distances(x.values(), reference, nearest, n, 1, d);
    for (std::size_t j = 0; j < k; ++j) {
        const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                u -= nearest[i];
                if (u < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.index(n);
        }
        std::copy(x.row(pick).begin(), x.row(pick).end(), protos.row(j).begin());
        kernels::sq_distances(x.values(), protos.row(j), dist, n, 1, d);
        for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], dist[i]);
    }
    return protos;
}

void update_free_prototypes(const Tensor& x, const std::vector<std::size_t>& assign, std::size_t k, Tensor& protos)
{
    const std::size_t n = x.rows(), d = x.cols();
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = assign[i];
        if (a == k) continue;
        ++count[a];
        const auto row = x.row(i);
        for (std::size_t j = 0; j < d; ++j) sums[a * d + j] += row[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (count[c] == 0) continue;  // empty cluster keeps its prototype
        auto row = protos.row(c);
        for (std::size_t j = 0; j < d; ++j) row[j] = sums[c * d + j] / static_cast<double>(count[c]);
    }
}

// Hartigan single-point moves: relocate a sample whenever that lowers the
// exact objective once the means of both clusters are updated. Returns the
// number of moves.
std::size_t hartigan_pass(const Tensor& x, std::size_t k, std::vector<std::size_t>& assign, Tensor& protos)
{
    const std::size_t n = x.rows(), d = x.cols(), c = k + 1;
    std::vector<std::size_t> count(c, 0);
    for (auto a : assign) ++count[a];
    auto sq = [&](std::size_t i, std::size_t j) {
        const auto xi = x.row(i);
        const auto p = protos.row(j);
        double s = 0.0;
        for (std::size_t q = 0; q < d; ++q) s += (xi[q] - p[q]) * (xi[q] - p[q]);
        return s;
    };
    std::size_t moves = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t from = assign[i];
        if (from != k && count[from] == 1) continue;
        const double dist_from = sq(i, from);
        const double saving = from == k ? dist_from
                                        : dist_from * static_cast<double>(count[from]) /
                                              static_cast<double>(count[from] - 1);
        std::size_t to = from;
        double best = saving;
        for (std::size_t j = 0; j < c; ++j) {
            if (j == from) continue;
            const double cost = j == k ? sq(i, k)
                                       : (count[j] == 0 ? 0.0
                                                        : sq(i, j) * static_cast<double>(count[j]) /
                                                              static_cast<double>(count[j] + 1));
            if (cost < best - 1e-12 * (1.0 + saving)) {
                best = cost;
                to = j;
            }
        }
        if (to == from) continue;
        const auto xi = x.row(i);
        if (from != k) {
            auto p = protos.row(from);
            const double m = static_cast<double>(count[from]);
            for (std::size_t q = 0; q < d; ++q) p[q] = (p[q] * m - xi[q]) / (m - 1.0);
        }
        if (to != k) {
            auto p = protos.row(to);
            const double m = static_cast<double>(count[to]);
            for (std::size_t q = 0; q < d; ++q) p[q] = (p[q] * m + xi[q]) / (m + 1.0);
        }
        --count[from];
        ++count[to];
        assign[i] = to;
        ++moves;
    }
    return moves;
}

} // namespace

Partition cluster_with_reference(const Tensor& features, std::span<const double> reference, std::size_t k,
                                 std::uint64_t seed, const ClusterOptions& options, ClusterTrace* trace)
{
    if (k == 0) throw std::invalid_argument("cluster_with_reference: k must be >= 1");
    if (features.rank() != 2) throw std::invalid_argument("cluster_with_reference: features must be a matrix");
    const std::size_t n = features.rows(), d = features.cols(), c = k + 1;
    if (n < c)
        throw std::invalid_argument("cluster_with_reference: " + std::to_string(n) + " samples for " +
                                    std::to_string(c) + " clusters");
    if (reference.size() != d) throw std::invalid_argument("cluster_with_reference: reference dimension mismatch");
    for (double v : features.values())
        if (!std::isfinite(v)) throw std::invalid_argument("cluster_with_reference: non-finite feature");
    for (double v : reference)
        if (!std::isfinite(v)) throw std::invalid_argument("cluster_with_reference: non-finite reference");

    if (trace) *trace = {};
    Partition best;
    const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
    std::vector<double> dist(n * c);
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, r));
        Partition p;
        p.k = k;
        p.reference_index = k;
        p.prototypes = seed_prototypes(features, reference, k, rng);
        p.assignments.assign(n, c);  // sentinel: nothing assigned yet
        std::vector<std::size_t> next(n);
        if (trace) {
            trace->objective.emplace_back();
            trace->prototypes.emplace_back();
        }
        for (std::size_t it = 0; it < std::max<std::size_t>(options.max_iterations, 1); ++it) {
            kernels::sq_distances(features.values(), p.prototypes.values(), dist, n, c, d);
            if (options.balanced) assign_balanced(dist, n, c, next);
            else assign_nearest(dist, n, c, next);
            p.iterations = it + 1;
            if (trace) {
                double obj = 0.0;
                for (std::size_t i = 0; i < n; ++i) obj += dist[i * c + next[i]];
                trace->objective.back().push_back(obj / static_cast<double>(n));
                trace->prototypes.back().push_back(p.prototypes);
            }
            if (next == p.assignments) break;
            p.assignments = next;
            update_free_prototypes(features, p.assignments, k, p.prototypes);
        }
        if (!options.balanced && options.refine) {
            for (std::size_t pass = 0; pass < std::max<std::size_t>(options.max_iterations, 1); ++pass) {
                const std::size_t moves = hartigan_pass(features, k, p.assignments, p.prototypes);
                // Recompute the means exactly; the incremental updates drift.
                update_free_prototypes(features, p.assignments, k, p.prototypes);
                if (trace) {
                    trace->objective.back().push_back(clustering_objective(features, p.prototypes, p.assignments));
                    trace->prototypes.back().push_back(p.prototypes);
                }
                if (moves == 0) break;
            }
        }
        p.objective = clustering_objective(features, p.prototypes, p.assignments);
        if (r == 0 || p.objective < best.objective) best = std::move(p);
    }
    best.reliability.assign(n, 1);
    return best;
}

// ---- classifiers ----------------------------------------------------------------------

double cross_entropy(std::span<const double> m, std::span<const double> n)
{
    if (m.size() != n.size()) throw std::invalid_argument("cross_entropy: length mismatch");
    const double sm = std::accumulate(m.begin(), m.end(), 0.0);
    const double sn = std::accumulate(n.begin(), n.end(), 0.0);
    if (std::abs(sm - 1.0) > 1e-9 || std::abs(sn - 1.0) > 1e-9)
        throw std::invalid_argument("cross_entropy: inputs must be distributions");
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s -= m[i] * std::log(std::max(n[i], 1e-12));
    return s;
}

ClassifierPair::ClassifierPair(std::size_t in, std::size_t hidden, std::size_t classes, std::uint64_t seed)
    : first("c1", {in, hidden, classes}, nn::Activation::Tanh, derive_seed(seed, 1)),
      second("c2", {in, hidden, classes}, nn::Activation::Tanh, derive_seed(seed, 2))
{
}

ClassifierPair ClassifierPair::identical(std::size_t in, std::size_t hidden, std::size_t classes, std::uint64_t seed)
{
    ClassifierPair p;
    p.first = nn::Mlp("c1", {in, hidden, classes}, nn::Activation::Tanh, derive_seed(seed, 1));
    p.second = nn::Mlp("c2", {in, hidden, classes}, nn::Activation::Tanh, derive_seed(seed, 1));
    return p;
}

Tensor ClassifierPair::standardize(const Tensor& features) const
{
    if (mean.empty()) return features;
    if (features.cols() != mean.size()) throw std::invalid_argument("classifier: feature width mismatch");
    Tensor out = features;
    const std::size_t d = mean.size();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - mean[i % d]) * inv_std[i % d];
    return out;
}

namespace {

// Mean over samples of -CE(Y,q1) - CE(Y,q2).
ad::Var consistency_objective(const ClassifierPair& pair, const ad::Var& inputs, const Tensor& onehot)
{
    const ad::Var y = ad::constant(onehot);
    const ad::Var l1 = ad::log_softmax(pair.first.forward(inputs));
    const ad::Var l2 = ad::log_softmax(pair.second.forward(inputs));
    return ad::mean(ad::row_sum(ad::add(ad::mul(y, l1), ad::mul(y, l2))));
}

} // namespace

ad::Var discrepancy_objective(const ClassifierPair& pair, const ad::Var& inputs, const Tensor& onehot)
{
    const ad::Var l1 = ad::log_softmax(pair.first.forward(inputs));
    const ad::Var l2 = ad::log_softmax(pair.second.forward(inputs));
    const ad::Var q1 = ad::exp(l1);
    const ad::Var q2 = ad::exp(l2);
    const ad::Var y = ad::constant(onehot);
    const ad::Var agree = ad::add(ad::mul(y, l1), ad::mul(y, l2));
    const ad::Var cross = ad::add(ad::mul(q1, l2), ad::mul(q2, l1));
    return ad::mean(ad::row_sum(ad::sub(agree, cross)));
}

DiscrepancyResult train_discrepancy_classifiers(const Tensor& features, std::span<const std::size_t> labels,
                                                ClassifierPair& pair, const DiscrepancyOptions& options)
{
    const std::size_t n = features.rows(), d = features.cols(), classes = pair.classes();
    if (labels.size() != n) throw std::invalid_argument("train_discrepancy: one label per sample required");
    if (pair.first.in_width() != d) throw std::invalid_argument("train_discrepancy: feature width mismatch");
    for (auto y : labels)
        if (y >= classes)
            throw std::invalid_argument("train_discrepancy: label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(classes - 1) + "]");

    pair.mean.assign(d, 0.0);
    pair.inv_std.assign(d, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) pair.mean[j] += features.at(i, j);
    for (auto& m : pair.mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double z = features.at(i, j) - pair.mean[j];
            var[j] += z * z;
        }
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(n));
        pair.inv_std[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    const Tensor x = pair.standardize(features);
    Tensor onehot({n, classes});
    for (std::size_t i = 0; i < n; ++i) onehot.at(i, labels[i]) = 1.0;

    DiscrepancyResult result;
    ad::Adam adam;
    Rng rng(derive_seed(options.seed, 7));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t batch = std::min(std::max<std::size_t>(options.batch, 1), n);
    std::size_t cursor = n;
    for (std::size_t step = 0; step < options.warmup + options.steps; ++step) {
        const bool fitting = step < options.warmup;
        const auto objective = fitting ? consistency_objective : discrepancy_objective;
        ad::Var obj;
        if (batch == n) {
            obj = objective(pair, ad::constant(x), onehot);
        } else {
            if (cursor + batch > n) {
                rng.shuffle(order.begin(), order.end());
                cursor = 0;
            }
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                         order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
            cursor += batch;
            obj = objective(pair, ad::constant(take_rows(x, idx)), take_rows(onehot, idx));
        }
        if (!fitting) result.objective.push_back(obj.item());
        ad::backward(ad::scale(obj, -1.0));
        if (options.optimizer == Optimizer::Adam) {
            adam.step(pair.first.params(), "c1", options.lr, 0.0);
            adam.step(pair.second.params(), "c2", options.lr, 0.0);
        } else {
            ad::sgd_step(pair.first.params(), options.lr, 0.0);
            ad::sgd_step(pair.second.params(), options.lr, 0.0);
        }
    }
    result.final_objective = discrepancy_objective(pair, ad::constant(x), onehot).item();
    return result;
}

std::vector<std::uint8_t> agreement_flags(const Tensor& out1, const Tensor& out2)
{
    if (out1.shape() != out2.shape()) throw std::invalid_argument("agreement_flags: output shapes differ");
    const std::size_t n = out1.rows();
    std::vector<std::uint8_t> flags(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = out1.row(i), b = out2.row(i);
        const auto ia = std::max_element(a.begin(), a.end()) - a.begin();  // first maximum
        const auto ib = std::max_element(b.begin(), b.end()) - b.begin();
        flags[i] = ia == ib ? 1 : 0;
    }
    return flags;
}

std::vector<std::uint8_t> reliability_filter(const Tensor& features, const ClassifierPair& pair)
{
    const Tensor x = pair.standardize(features);
    return agreement_flags(pair.first.infer(x), pair.second.infer(x));
}

// ---- refinement -------------------------------------------------------------------------

std::size_t Refinement::reliable_count() const
{
    std::size_t s = 0;
    for (const auto& c : clusters) s += c.size();
    return s;
}

Refinement refine_partition(const Partition& partition, std::span<const std::uint8_t> flags,
                            std::size_t min_cluster_size)
{
    const std::size_t n = partition.assignments.size();
    if (flags.size() != n) throw std::invalid_argument("refine_partition: one flag per sample required");
    std::vector<std::vector<std::size_t>> members(partition.k + 1);
    Refinement out;
    for (std::size_t i = 0; i < n; ++i) {
        if (flags[i]) members[partition.assignments[i]].push_back(i);
        else out.unreliable.push_back(i);
    }
    for (std::size_t c = 0; c < members.size(); ++c) {
        if (members[c].empty()) continue;
        if (members[c].size() < std::max<std::size_t>(min_cluster_size, 1)) {
            out.unreliable.insert(out.unreliable.end(), members[c].begin(), members[c].end());
            continue;
        }
        out.cluster_ids.push_back(c);
        out.clusters.push_back(std::move(members[c]));
    }
    std::sort(out.unreliable.begin(), out.unreliable.end());
    return out;
}

void save_partition_csv(const Partition& partition, const std::filesystem::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("partition csv: cannot write " + path.string());
    os << "pixel_index,cluster,reliable\n";
    for (std::size_t i = 0; i < partition.assignments.size(); ++i) {
        const int rel = i < partition.reliability.size() ? partition.reliability[i] : 1;
        os << i << "," << partition.assignments[i] << "," << rel << "\n";
    }
}

} // namespace hutd::rgc
