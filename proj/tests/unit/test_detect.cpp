#include "doctest.h"

#include "hutd/detect.hpp"
#include "hutd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

using namespace hutd;

namespace {

Tensor random_rows(std::size_t n, std::size_t d, std::uint64_t seed)
{
    Rng rng(seed);
    Tensor z({n, d});
    for (auto& v : z.storage()) v = rng.uniform(0.05, 1.0);
    return z;
}

std::vector<std::size_t> ranking(const std::vector<double>& s)
{
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    return idx;
}

scene::HsiCube cube_from(const Tensor& z, std::size_t h, std::size_t w)
{
    scene::HsiCube c;
    c.height = h;
    c.width = w;
    c.bands = z.cols();
    for (std::size_t b = 0; b < c.bands; ++b) c.wavelengths.push_back(400.0 + 10.0 * static_cast<double>(b));
    c.data.assign(z.values().begin(), z.values().end());
    return c;
}

} // namespace

TEST_SUITE("detect") {

TEST_CASE("sam examples")
{
    const Tensor z({3, 2}, {1, 0, 0, 1, 1, 1});
    const auto s = detect::sam(z, std::vector<double>{1, 0});
    CHECK(s[0] == doctest::Approx(1.0));
    CHECK(s[1] == doctest::Approx(0.0));
    CHECK(s[2] == doctest::Approx(0.7071067811865476));
    CHECK_THROWS(detect::sam(Tensor({1, 2}, {0, 0}), std::vector<double>{1, 0}));
    CHECK_THROWS(detect::sam(z, std::vector<double>{1, 0, 0}));

    Tensor scaled = random_rows(20, 4, 1);
    const std::vector<double> ref{0.3, 0.1, 0.7, 0.2};
    const auto base = detect::sam(scaled, ref);
    for (auto& v : scaled.storage()) v *= 3.5;
    const auto after = detect::sam(scaled, ref);
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(after[i] == doctest::Approx(base[i]).epsilon(1e-14));
}

TEST_CASE("cem examples")
{
    const Tensor z({2, 2}, {1, 0, 0, 1});
    const std::vector<double> ref{1, 0};
    const auto f = detect::cem_filter(z, ref);
    CHECK(f.weights[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(f.weights[1] == doctest::Approx(0.0));
    const auto s = detect::cem(z, ref);
    CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(s[1]) < 1e-12);

    SUBCASE("unit gain")
    {
        const Tensor r = random_rows(50, 6, 3);
        const std::vector<double> t(r.row(7).begin(), r.row(7).end());
        const auto cf = detect::cem_filter(r, t);
        double gain = 0.0;
        for (std::size_t j = 0; j < t.size(); ++j) gain += cf.weights[j] * t[j];
        CHECK(gain == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(detect::cem(r, t)[7] == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("ranking is scale invariant")
    {
        Tensor r = random_rows(20, 4, 4);
        std::vector<double> t{0.2, 0.9, 0.4, 0.6};
        const auto before = ranking(detect::cem(r, t));
        for (auto& v : r.storage()) v *= 0.25;
        for (auto& v : t) v *= 0.25;
        CHECK(ranking(detect::cem(r, t)) == before);
    }
    SUBCASE("pixel order")
    {
        const Tensor r = random_rows(12, 3, 5);
        const std::vector<double> t{0.5, 0.2, 0.8};
        const auto base = detect::cem(r, t);
        std::vector<std::size_t> perm(12);
        std::iota(perm.rbegin(), perm.rend(), std::size_t{0});
        const auto flipped = detect::cem(take_rows(r, perm), t);
        for (std::size_t i = 0; i < 12; ++i) CHECK(flipped[i] == doctest::Approx(base[perm[i]]).epsilon(1e-10));
    }
    SUBCASE("errors")
    {
        CHECK_THROWS(detect::cem(Tensor({2, 2}, {0, 0, 0, 0}), ref));
        CHECK_THROWS(detect::cem(z, std::vector<double>{1, 0, 0}));
    }
}

TEST_CASE("scene-level detectors")
{
    const Tensor z = random_rows(12, 5, 6);
    const auto cube = cube_from(z, 3, 4);
    const std::vector<double> ref(z.row(5).begin(), z.row(5).end());

    const auto sam = detect::sam_raw(cube, ref);
    CHECK(sam.height == 3);
    CHECK(sam.width == 4);
    CHECK(sam.tag() == "sam-raw");
    CHECK(sam.scores[5] == doctest::Approx(1.0));
    const auto cem = detect::cem_raw(cube, ref);
    CHECK(cem.tag() == "cem-raw");
    CHECK(cem.scores[5] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK_THROWS(detect::sam_raw(cube, std::vector<double>(4, 1.0)));

    nn::Mlp enc("encoder", {5, 7, 3}, nn::Activation::Tanh, 2);
    const auto e = detect::embed_scene(cube, ref, enc);
    CHECK(e.z.rows() == 12);
    CHECK(e.z.cols() == 3);
    // A pixel equal to the reference embeds exactly like the standalone reference.
    CHECK(std::equal(e.z_ref.begin(), e.z_ref.end(), e.z.row(5).begin()));
    const auto again = detect::embed_scene(cube, ref, enc);
    CHECK(again.z == e.z);
    CHECK(detect::sam_embedded(cube, e).tag() == "sam");
    CHECK(detect::cem_embedded(cube, e).scores[5] == doctest::Approx(1.0).epsilon(1e-6));
    nn::Mlp wrong("encoder", {4, 7, 3}, nn::Activation::Tanh, 2);
    CHECK_THROWS(detect::embed_scene(cube, ref, wrong));
}

TEST_CASE("score map files")
{
    const auto dir = std::filesystem::temp_directory_path() / "hutd_detect_maps";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    detect::ScoreMap m{2, 3, {0.1, -0.25, 1.0 / 3.0, 4.0, 5e-9, 0.0}, "sam", "raw"};
    detect::save_score_map(m, dir / "map");
    CHECK(std::filesystem::exists(dir / "map.f32"));
    CHECK(std::filesystem::file_size(dir / "map.f32") == 6 * 4);
    CHECK(std::filesystem::exists(dir / "map.pgm"));
    const auto back = detect::load_score_map_csv(dir / "map.csv");
    CHECK(back.height == 2);
    CHECK(back.width == 3);
    CHECK(back.scores == m.scores);
    CHECK_THROWS(detect::load_score_map_csv(dir / "missing.csv"));

    detect::ScoreMap bad{2, 2, {0.0, 1.0, std::nan(""), 0.0}, "sam", "raw"};
    CHECK_THROWS(bad.validate());
    detect::ScoreMap short_map{2, 2, {0.0}, "sam", "raw"};
    CHECK_THROWS(short_map.validate());
    std::filesystem::remove_all(dir);
}

}
