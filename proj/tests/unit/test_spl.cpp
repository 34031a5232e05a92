#include "doctest.h"

#include "hutd/spl.hpp"

#include <filesystem>
#include <fstream>
#include <string>

using namespace hutd;

namespace {

Tensor blobs(std::size_t n, std::size_t bands, std::uint64_t seed)
{
    Rng rng(seed);
    Tensor x({n, bands});
    for (std::size_t i = 0; i < n; ++i) {
        const double centre = 0.2 + 0.3 * static_cast<double>(i % 3);
        for (std::size_t b = 0; b < bands; ++b)
            x.at(i, b) = centre + 0.05 * static_cast<double>((b + i % 3) % bands) / static_cast<double>(bands) +
                         0.02 * rng.normal();
    }
    return x;
}

spl::SplConfig tiny()
{
    spl::SplConfig c;
    c.k = 2;
    c.rounds = 3;
    c.epochs = 2;
    c.batch = 16;
    c.lr_horizon = 6;
    c.ae_epochs = 2;
    c.ae_batch = 16;
    c.classifier_warmup = 5;
    c.classifier_steps = 3;
    c.classifier_hidden = 8;
    c.cluster_restarts = 1;
    c.test_mode = true;
    return c;
}

bool same_values(const std::vector<ad::NamedTensor>& a, const std::vector<ad::NamedTensor>& b)
{
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
    return true;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name)
    {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

} // namespace

TEST_SUITE("spl") {

TEST_CASE("dry run leaves the encoder at initialisation")
{
    const Tensor x = blobs(48, 8, 1);
    const std::vector<double> ref(x.row(0).begin(), x.row(0).end());
    auto cfg = tiny();
    cfg.rounds = 1;
    cfg.epochs = 0;
    const auto init = spl::initialize(x, cfg);
    const auto done = spl::run(x, ref, cfg);
    CHECK(same_values(init.bundle.export_values(), done.bundle.export_values()));
    REQUIRE(done.trace.rounds.size() == 1);
    CHECK(done.trace.epochs.empty());
}

TEST_CASE("runs are deterministic and conserve samples")
{
    const Tensor x = blobs(48, 8, 2);
    const std::vector<double> ref(x.row(0).begin(), x.row(0).end());
    const auto cfg = tiny();
    const auto a = spl::run(x, ref, cfg);
    const auto b = spl::run(x, ref, cfg);
    CHECK(a.trace.same_results(b.trace));
    CHECK(same_values(a.bundle.export_values(), b.bundle.export_values()));

    REQUIRE(a.trace.rounds.size() == cfg.rounds);
    CHECK(a.trace.epochs.size() == cfg.rounds * cfg.epochs);
    for (std::size_t r = 0; r < a.trace.rounds.size(); ++r) {
        const auto& rec = a.trace.rounds[r];
        CHECK(rec.round == r + 1);
        CHECK(rec.reliable + rec.unreliable == x.rows());
        CHECK(rec.max_abs_delta <= cfg.epsilon + 1e-12);
        if (r > 0) CHECK(rec.wall_seconds > a.trace.rounds[r - 1].wall_seconds);
    }

    auto other = cfg;
    other.seed = cfg.seed + 1;
    CHECK_FALSE(spl::run(x, ref, other).trace.same_results(a.trace));
}

TEST_CASE("checkpoint and resume reproduce the remaining rounds bitwise")
{
    TempDir dir("hutd_spl_resume");
    const Tensor x = blobs(48, 8, 3);
    const std::vector<double> ref(x.row(0).begin(), x.row(0).end());
    const auto cfg = tiny();
    const auto full = spl::run(x, ref, cfg);

    spl::RunHooks hooks;
    hooks.checkpoint_path = dir.path / "state.ckpt";
    hooks.stop_after = 1;
    const auto partial = spl::run(x, ref, cfg, hooks);
    CHECK(partial.completed_rounds == 1);

    auto resumed = spl::resume(hooks.checkpoint_path, cfg, x.cols());
    CHECK(resumed.completed_rounds == 1);
    CHECK(same_values(resumed.bundle.export_values(), partial.bundle.export_values()));
    CHECK(resumed.trace.same_results(partial.trace));
    spl::run_rounds(resumed, x, ref, cfg);
    CHECK(resumed.completed_rounds == cfg.rounds);
    CHECK(resumed.trace.same_results(full.trace));
    CHECK(same_values(resumed.bundle.export_values(), full.bundle.export_values()));

    SUBCASE("resume at the final round completes immediately")
    {
        spl::checkpoint_round(full, cfg, dir.path / "final.ckpt");
        auto done = spl::resume(dir.path / "final.ckpt", cfg, x.cols());
        const auto before = done.bundle.export_values();
        spl::run_rounds(done, x, ref, cfg);
        CHECK(done.completed_rounds == cfg.rounds);
        CHECK(done.trace.same_results(full.trace));
        CHECK(same_values(done.bundle.export_values(), before));
    }
    SUBCASE("mismatched or damaged checkpoints are rejected")
    {
        auto other = cfg;
        other.seed = 7;
        CHECK_THROWS(spl::resume(hooks.checkpoint_path, other, x.cols()));
        other = cfg;
        other.k = 3;
        CHECK_THROWS(spl::resume(hooks.checkpoint_path, other, x.cols()));
        CHECK_THROWS(spl::resume(hooks.checkpoint_path, cfg, x.cols() + 1));

        const auto size = std::filesystem::file_size(hooks.checkpoint_path);
        std::filesystem::resize_file(hooks.checkpoint_path, size / 2);
        CHECK_THROWS(spl::resume(hooks.checkpoint_path, cfg, x.cols()));
        {
            std::ofstream os(hooks.checkpoint_path, std::ios::binary | std::ios::trunc);
            os << "not a checkpoint";
        }
        CHECK_THROWS(spl::resume(hooks.checkpoint_path, cfg, x.cols()));
        CHECK_THROWS(spl::resume(dir.path / "missing.ckpt", cfg, x.cols()));
    }
}

TEST_CASE("trace csv and config validation")
{
    TempDir dir("hutd_spl_csv");
    const Tensor x = blobs(48, 8, 4);
    const std::vector<double> ref(x.row(0).begin(), x.row(0).end());
    auto cfg = tiny();
    cfg.rounds = 2;
    const auto s = spl::run(x, ref, cfg);
    s.trace.save_csv(dir.path / "trace.csv");
    std::ifstream is(dir.path / "trace.csv");
    std::string header, line;
    std::getline(is, header);
    CHECK(header ==
          "round,reliable,unreliable,reliable_fraction,clusters,discrepancy,instance_loss,cluster_loss,"
          "max_abs_delta,reconstruction,wall_seconds");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 2);

    auto bad = tiny();
    bad.k = 0;
    CHECK_THROWS(bad.validate());
    bad = tiny();
    bad.rounds = 0;
    CHECK_THROWS(bad.validate());
    bad = tiny();
    bad.tau = 0.0;
    CHECK_THROWS(bad.validate());
    bad = tiny();
    bad.epsilon = -1.0;
    CHECK_THROWS(bad.validate());
    CHECK_THROWS(spl::run(x, std::vector<double>(7, 0.5), tiny()));
}

}
