#include "hutd/spl.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace hutd::spl {

void SplConfig::validate() const
{
    auto fail = [](const std::string& what) { throw std::invalid_argument("spl config: " + what); };
    if (k == 0) fail("k must be >= 1");
    if (rounds == 0) fail("rounds must be >= 1");
    if (batch == 0) fail("batch must be >= 1");
    if (!(lr >= 0.0) || !(lr_min >= 0.0)) fail("learning rates must be >= 0");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(epsilon >= 0.0)) fail("epsilon must be >= 0");
    if (!(tau > 0.0)) fail("tau must be > 0");
    if (classifier_hidden == 0) fail("classifier_hidden must be >= 1");
    if (min_cluster_size == 0) fail("min_cluster_size must be >= 1");
}

bool SplTrace::same_results(const SplTrace& o) const
{
    if (rounds.size() != o.rounds.size() || epochs.size() != o.epochs.size()) return false;
    for (std::size_t i = 0; i < rounds.size(); ++i) {
        const auto& a = rounds[i];
        const auto& b = o.rounds[i];
        if (a.round != b.round || a.reliable != b.reliable || a.unreliable != b.unreliable ||
            a.reliable_fraction != b.reliable_fraction || a.clusters != b.clusters || a.discrepancy != b.discrepancy ||
            a.instance_loss != b.instance_loss || a.cluster_loss != b.cluster_loss ||
            a.max_abs_delta != b.max_abs_delta || a.reconstruction != b.reconstruction)
            return false;
    }
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto& a = epochs[i];
        const auto& b = o.epochs[i];
        if (a.instance_loss != b.instance_loss || a.cluster_loss != b.cluster_loss || a.batches != b.batches)
            return false;
    }
    return true;
}

void SplTrace::save_csv(const std::filesystem::path& path) const
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("trace csv: cannot write " + path.string());
    os.precision(17);
    os << "round,reliable,unreliable,reliable_fraction,clusters,discrepancy,instance_loss,cluster_loss,"
          "max_abs_delta,reconstruction,wall_seconds\n";
    for (const auto& r : rounds)
        os << r.round << "," << r.reliable << "," << r.unreliable << "," << r.reliable_fraction << "," << r.clusters
           << "," << r.discrepancy << "," << r.instance_loss << "," << r.cluster_loss << "," << r.max_abs_delta << ","
           << r.reconstruction << "," << r.wall_seconds << "\n";
}

SplState initialize(const Tensor& samples, const SplConfig& cfg)
{
    cfg.validate();
    const std::size_t bands = samples.cols();
    SplState s;
    s.bundle = hlcl::NetworkBundle(bands, derive_seed(cfg.seed, 10), cfg.activation);
    s.augmenter = hlcl::Augmenter(bands, derive_seed(cfg.seed, 11), cfg.activation);
    s.augmenter.attack = cfg.attack;
    s.augmenter.epsilon = cfg.epsilon;
    s.augmenter.pgd_steps = cfg.pgd_steps;
    double hi = 0.0;
    for (double v : samples.values()) hi = std::max(hi, v);
    s.augmenter.upper = 1.5 * hi;
    hlcl::PretrainOptions ae;
    ae.epochs = cfg.ae_epochs;
    ae.lr = cfg.ae_lr;
    ae.batch = cfg.ae_batch;
    ae.seed = derive_seed(cfg.seed, 12);
    const auto pre = hlcl::pretrain_autoencoder(samples, s.augmenter, ae);
    s.pretrain_loss = pre.final_loss;
    return s;
}

namespace {

Tensor unit_rows(Tensor t)
{
    for (std::size_t r = 0; r < t.rows(); ++r) {
        auto row = t.row(r);
        double s = 0.0;
        for (double v : row) s += v * v;
        const double norm = std::sqrt(s);
        if (norm > 0.0)
            for (auto& v : row) v /= norm;
    }
    return t;
}

} // namespace

void run_rounds(SplState& state, const Tensor& samples, std::span<const double> reference, const SplConfig& cfg,
                const RunHooks& hooks)
{
    cfg.validate();
    const std::size_t n = samples.rows();
    if (reference.size() != samples.cols()) throw std::invalid_argument("spl: reference and samples differ in bands");
    const Tensor ref_row({1, reference.size()}, {reference.begin(), reference.end()});
    const auto clock_start = std::chrono::steady_clock::now();
    const double wall_base = state.trace.rounds.empty() ? 0.0 : state.trace.rounds.back().wall_seconds;
    const std::size_t last = hooks.stop_after ? std::min(hooks.stop_after, cfg.rounds) : cfg.rounds;
    std::size_t stale = 0;
    double best_fraction = -1.0;
    for (const auto& r : state.trace.rounds) best_fraction = std::max(best_fraction, r.reliable_fraction);

    for (std::size_t round = state.completed_rounds + 1; round <= last; ++round) {
        const nn::Mlp* enc = &state.bundle.encoder;
        Tensor features = rgc::transform_features(samples, round, enc);
        Tensor h_ref = rgc::transform_features(ref_row, round, enc);
        if (round > 1 && cfg.unit_features) {
            features = unit_rows(features);
            h_ref = unit_rows(h_ref);
        }

        rgc::ClusterOptions copt;
        copt.balanced = cfg.balanced;
        copt.restarts = cfg.cluster_restarts;
        copt.max_iterations = cfg.cluster_iterations;
        rgc::Partition part = rgc::cluster_with_reference(features, h_ref.values(), cfg.k,
                                                          derive_seed(cfg.seed, 1, round), copt);
        if (cfg.test_mode) {
            Tensor fresh = round == 1 ? ref_row : state.bundle.encoder.infer(ref_row);
            if (round > 1 && cfg.unit_features) fresh = unit_rows(fresh);
            if (!std::equal(fresh.values().begin(), fresh.values().end(), part.prototypes.row(part.k).begin()))
                throw std::logic_error("spl: reference prototype is stale in round " + std::to_string(round));
        }

        rgc::ClassifierPair pair(features.cols(), cfg.classifier_hidden, cfg.k + 1, derive_seed(cfg.seed, 2, round));
        rgc::DiscrepancyOptions dopt;
        dopt.warmup = cfg.classifier_warmup;
        dopt.steps = cfg.classifier_steps;
        dopt.lr = cfg.classifier_lr;
        dopt.batch = cfg.classifier_batch;
        dopt.optimizer = cfg.classifier_optimizer;
        dopt.seed = derive_seed(cfg.seed, 4, round);
        const auto disc = rgc::train_discrepancy_classifiers(features, part.assignments, pair, dopt);
        part.reliability = rgc::reliability_filter(features, pair);
        const rgc::Refinement refined = rgc::refine_partition(part, part.reliability, cfg.min_cluster_size);
        if (refined.reliable_count() + refined.unreliable.size() != n)
            throw std::logic_error("spl: refinement lost or duplicated samples in round " + std::to_string(round));

        const Tensor prototypes = cfg.reference_prototype
                                      ? hlcl::compute_prototypes(samples, refined, part.reference_index, reference)
                                      : hlcl::compute_prototypes(samples, refined);
        RoundRecord rec;
        rec.round = round;
        rec.reliable = refined.reliable_count();
        rec.unreliable = refined.unreliable.size();
        rec.reliable_fraction = static_cast<double>(rec.reliable) / static_cast<double>(n);
        rec.clusters = refined.clusters.size();
        rec.discrepancy = disc.final_objective;

        for (std::size_t e = 0; e < cfg.epochs; ++e) {
            hlcl::TrainOptions topt;
            topt.batch = cfg.batch;
            topt.lr = ad::cosine_lr((round - 1) * cfg.epochs + e, cfg.lr, cfg.lr_min, cfg.lr_horizon);
            topt.weight_decay = cfg.weight_decay;
            topt.optimizer = cfg.optimizer;
            topt.tau = cfg.tau;
            topt.instance_form = cfg.instance_form;
            topt.infonce_form = cfg.infonce_form;
            topt.seed = derive_seed(cfg.seed, 3, round, e);
            const auto m = hlcl::train_epoch(samples, refined, prototypes, state.bundle, state.augmenter, state.adam,
                                             topt);
            if (cfg.test_mode && m.max_abs_delta > cfg.epsilon + 1e-12)
                throw std::logic_error("spl: perturbation exceeded the budget");
            rec.instance_loss += m.instance_loss;
            rec.cluster_loss += m.cluster_loss;
            rec.max_abs_delta = std::max(rec.max_abs_delta, m.max_abs_delta);
            rec.reconstruction += m.mean_reconstruction;
            state.trace.epochs.push_back(m);
        }
        if (cfg.epochs) {
            const double e = static_cast<double>(cfg.epochs);
            rec.instance_loss /= e;
            rec.cluster_loss /= e;
            rec.reconstruction /= e;
        }
        rec.wall_seconds =
            wall_base + std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
        state.trace.rounds.push_back(rec);
        state.completed_rounds = round;
        state.last_partition = std::move(part);
        if (hooks.log) {
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "round %zu: reliable %.4f (%zu clusters), discrepancy %.4f, instance %.4f, cluster %.4f, "
                          "%.1fs",
                          round, rec.reliable_fraction, rec.clusters, rec.discrepancy, rec.instance_loss,
                          rec.cluster_loss, rec.wall_seconds);
            hooks.log(buf);
        }
        if (!hooks.checkpoint_path.empty()) checkpoint_round(state, cfg, hooks.checkpoint_path);

        if (cfg.patience) {
            if (rec.reliable_fraction > best_fraction) {
                best_fraction = rec.reliable_fraction;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
    }
}

SplState run(const Tensor& samples, std::span<const double> reference, const SplConfig& cfg, const RunHooks& hooks)
{
    SplState state = initialize(samples, cfg);
    run_rounds(state, samples, reference, cfg, hooks);
    return state;
}

// ---- persistence --------------------------------------------------------------------------------

namespace {

constexpr std::size_t kRoundFields = 11;
constexpr std::size_t kEpochFields = 5;

Tensor meta(double v) { return Tensor::scalar(v); }

} // namespace

void checkpoint_round(const SplState& state, const SplConfig& cfg, const std::filesystem::path& path)
{
    std::vector<ad::NamedTensor> out = state.bundle.export_values();
    for (auto& t : state.augmenter.export_values()) out.push_back(std::move(t));
    for (auto& t : state.adam.export_state("opt/")) out.push_back(std::move(t));
    out.push_back({"meta/completed_rounds", meta(static_cast<double>(state.completed_rounds))});
    out.push_back({"meta/bands", meta(static_cast<double>(state.bundle.bands()))});
    out.push_back({"meta/k", meta(static_cast<double>(cfg.k))});
    // Seeds are 64-bit; store both halves exactly.
    out.push_back({"meta/seed_hi", meta(static_cast<double>(cfg.seed >> 32))});
    out.push_back({"meta/seed_lo", meta(static_cast<double>(cfg.seed & 0xffffffffULL))});
    out.push_back({"meta/pretrain_loss", meta(state.pretrain_loss)});
    out.push_back({"meta/augmenter_upper", meta(state.augmenter.upper)});

    Tensor rounds({state.trace.rounds.size(), kRoundFields});
    for (std::size_t i = 0; i < state.trace.rounds.size(); ++i) {
        const auto& r = state.trace.rounds[i];
        const double v[kRoundFields] = {static_cast<double>(r.round), static_cast<double>(r.reliable),
                                        static_cast<double>(r.unreliable), r.reliable_fraction,
                                        static_cast<double>(r.clusters), r.discrepancy, r.instance_loss,
                                        r.cluster_loss, r.max_abs_delta, r.reconstruction, r.wall_seconds};
        std::copy(v, v + kRoundFields, rounds.row(i).begin());
    }
    out.push_back({"trace/rounds", rounds});
    Tensor epochs({state.trace.epochs.size(), kEpochFields});
    for (std::size_t i = 0; i < state.trace.epochs.size(); ++i) {
        const auto& e = state.trace.epochs[i];
        const double v[kEpochFields] = {e.instance_loss, e.cluster_loss, static_cast<double>(e.batches),
                                        e.max_abs_delta, e.mean_reconstruction};
        std::copy(v, v + kEpochFields, epochs.row(i).begin());
    }
    out.push_back({"trace/epochs", epochs});

    // Write then rename so an interrupted run never leaves a torn checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    ad::save_checkpoint(tmp, out);
    std::filesystem::rename(tmp, path);
}

SplState resume(const std::filesystem::path& path, const SplConfig& cfg, std::size_t bands)
{
    const auto tensors = ad::load_checkpoint(path);
    auto scalar = [&](const char* name) { return ad::find_tensor(tensors, name)[0]; };
    if (static_cast<std::size_t>(scalar("meta/bands")) != bands)
        throw std::runtime_error("resume: checkpoint was written for a different band count");
    if (static_cast<std::size_t>(scalar("meta/k")) != cfg.k)
        throw std::runtime_error("resume: checkpoint was written for a different k");
    const auto seed = (static_cast<std::uint64_t>(scalar("meta/seed_hi")) << 32) |
                      static_cast<std::uint64_t>(scalar("meta/seed_lo"));
    if (seed != cfg.seed) throw std::runtime_error("resume: checkpoint was written for a different seed");

    SplState s;
    s.bundle = hlcl::NetworkBundle(bands, derive_seed(cfg.seed, 10), cfg.activation);
    s.bundle.import_values(tensors);
    s.augmenter = hlcl::Augmenter(bands, derive_seed(cfg.seed, 11), cfg.activation);
    s.augmenter.import_values(tensors);
    s.augmenter.attack = cfg.attack;
    s.augmenter.epsilon = cfg.epsilon;
    s.augmenter.pgd_steps = cfg.pgd_steps;
    s.augmenter.upper = scalar("meta/augmenter_upper");
    s.adam.import_state(tensors, "opt/");
    s.completed_rounds = static_cast<std::size_t>(scalar("meta/completed_rounds"));
    s.pretrain_loss = scalar("meta/pretrain_loss");

    const Tensor& rounds = ad::find_tensor(tensors, "trace/rounds");
    if (rounds.numel() && rounds.cols() != kRoundFields) throw std::runtime_error("resume: malformed round trace");
    for (std::size_t i = 0; i < (rounds.numel() ? rounds.rows() : 0); ++i) {
        const auto v = rounds.row(i);
        RoundRecord r;
        r.round = static_cast<std::size_t>(v[0]);
        r.reliable = static_cast<std::size_t>(v[1]);
        r.unreliable = static_cast<std::size_t>(v[2]);
        r.reliable_fraction = v[3];
        r.clusters = static_cast<std::size_t>(v[4]);
        r.discrepancy = v[5];
        r.instance_loss = v[6];
        r.cluster_loss = v[7];
        r.max_abs_delta = v[8];
        r.reconstruction = v[9];
        r.wall_seconds = v[10];
        s.trace.rounds.push_back(r);
    }
    const Tensor& epochs = ad::find_tensor(tensors, "trace/epochs");
    if (epochs.numel() && epochs.cols() != kEpochFields) throw std::runtime_error("resume: malformed epoch trace");
    for (std::size_t i = 0; i < (epochs.numel() ? epochs.rows() : 0); ++i) {
        const auto v = epochs.row(i);
        hlcl::EpochMetrics m;
        m.instance_loss = v[0];
        m.cluster_loss = v[1];
        m.batches = static_cast<std::size_t>(v[2]);
        m.max_abs_delta = v[3];
        m.mean_reconstruction = v[4];
        s.trace.epochs.push_back(m);
    }
    if (s.trace.rounds.size() != s.completed_rounds) throw std::runtime_error("resume: trace length disagrees with round count");
    return s;
}

} // namespace hutd::spl
