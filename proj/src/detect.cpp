#include "hutd/detect.hpp"

#include "hutd/kernels.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hutd::detect {

std::string ScoreMap::tag() const { return feature_space == "raw" ? detector + "-raw" : detector; }

void ScoreMap::validate() const
{
    if (scores.size() != height * width) throw std::invalid_argument("score map: size does not match dimensions");
    for (double v : scores)
        if (!std::isfinite(v)) throw std::invalid_argument("score map: non-finite score");
}

Embedding embed_scene(const scene::HsiCube& cube, std::span<const double> reference, const nn::Mlp& encoder)
{
    if (cube.bands != encoder.in_width() || reference.size() != cube.bands)
        throw std::invalid_argument("embed_scene: band mismatch between cube, reference and encoder");
    Embedding e;
    e.z = encoder.infer(scene::pixel_matrix(cube));
    const Tensor r = encoder.infer(Tensor({1, reference.size()}, {reference.begin(), reference.end()}));
    e.z_ref = r.storage();
    return e;
}

std::vector<double> sam(const Tensor& z, std::span<const double> z_ref)
{
    if (z.cols() != z_ref.size()) throw std::invalid_argument("sam: dimension mismatch");
    std::vector<double> out(z.rows());
    kernels::row_cosine(z.values(), z_ref, out, z.rows(), z.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (std::isnan(out[i])) throw std::invalid_argument("sam: zero vector at row " + std::to_string(i));
    return out;
}

CemFilter cem_filter(const Tensor& z, std::span<const double> z_ref)
{
    const std::size_t n = z.rows(), d = z.cols();
    if (d != z_ref.size()) throw std::invalid_argument("cem: dimension mismatch");
    if (n == 0) throw std::invalid_argument("cem: no samples");
    std::vector<double> r(d * d);
    kernels::gram(z.values(), r, n, d);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rm(r.data(), d, d);
    CemFilter f;
    f.ridge = 1e-6 * rm.trace() / static_cast<double>(d);
    const Eigen::MatrixXd reg = rm + f.ridge * Eigen::MatrixXd::Identity(d, d);
    const Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success || !(f.ridge > 0.0))
        throw std::runtime_error("cem: correlation matrix singular even after ridge");
    const Eigen::Map<const Eigen::VectorXd> t(z_ref.data(), static_cast<Eigen::Index>(d));
    const Eigen::VectorXd rinv_t = llt.solve(t);
    const double gain = t.dot(rinv_t);
    if (!(gain > 0.0) || !std::isfinite(gain)) throw std::runtime_error("cem: reference has no energy under R^-1");
    f.weights.resize(d);
    for (std::size_t j = 0; j < d; ++j) f.weights[j] = rinv_t[static_cast<Eigen::Index>(j)] / gain;
    return f;
}

std::vector<double> cem(const Tensor& z, std::span<const double> z_ref)
{
    const CemFilter f = cem_filter(z, z_ref);
    std::vector<double> out(z.rows());
    kernels::row_dot(z.values(), f.weights, out, z.rows(), z.cols());
    return out;
}

namespace {

ScoreMap make_map(const scene::HsiCube& cube, std::vector<double> scores, const char* det, const char* space)
{
    ScoreMap m{cube.height, cube.width, std::move(scores), det, space};
    m.validate();
    return m;
}

void check_reference(const scene::HsiCube& cube, std::span<const double> reference)
{
    if (reference.size() != cube.bands) throw std::invalid_argument("detector: reference band count differs from cube");
}

} // namespace

ScoreMap sam_raw(const scene::HsiCube& cube, std::span<const double> reference)
{
    check_reference(cube, reference);
    return make_map(cube, sam(scene::pixel_matrix(cube), reference), "sam", "raw");
}

ScoreMap cem_raw(const scene::HsiCube& cube, std::span<const double> reference)
{
    check_reference(cube, reference);
    return make_map(cube, cem(scene::pixel_matrix(cube), reference), "cem", "raw");
}

ScoreMap sam_embedded(const scene::HsiCube& cube, const Embedding& e)
{
    return make_map(cube, sam(e.z, e.z_ref), "sam", "embedding");
}

ScoreMap cem_embedded(const scene::HsiCube& cube, const Embedding& e)
{
    return make_map(cube, cem(e.z, e.z_ref), "cem", "embedding");
}

void save_score_map(const ScoreMap& map, const std::filesystem::path& stem)
{
    map.validate();
    auto with = [&](const char* ext) {
        auto p = stem;
        p += ext;
        return p;
    };
    {
        std::ofstream os(with(".f32"), std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("score map: cannot write " + with(".f32").string());
        for (double v : map.scores) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            unsigned char b[4];
            for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
            os.write(reinterpret_cast<const char*>(b), 4);
        }
    }
    {
        std::ofstream os(with(".csv"), std::ios::trunc);
        if (!os) throw std::runtime_error("score map: cannot write " + with(".csv").string());
        char buf[64];
        for (std::size_t r = 0; r < map.height; ++r) {
            for (std::size_t c = 0; c < map.width; ++c) {
                std::snprintf(buf, sizeof buf, "%.17g", map.scores[r * map.width + c]);
                os << (c ? "," : "") << buf;
            }
            os << "\n";
        }
    }
    const auto [lo, hi] = std::minmax_element(map.scores.begin(), map.scores.end());
    std::vector<std::uint8_t> px(map.scores.size(), 0);
    if (*hi > *lo)
        for (std::size_t i = 0; i < px.size(); ++i)
            px[i] = static_cast<std::uint8_t>(std::lround(255.0 * (map.scores[i] - *lo) / (*hi - *lo)));
    scene::save_pgm(with(".pgm"), map.height, map.width, px);
}

ScoreMap load_score_map_csv(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("score map: cannot open " + path.string());
    ScoreMap m;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(ss, cell, ',')) {
            m.scores.push_back(std::stod(cell));
            ++cols;
        }
        if (m.height == 0) m.width = cols;
        else if (cols != m.width)
            throw std::runtime_error("score map: ragged row " + std::to_string(m.height + 1) + " in " + path.string());
        ++m.height;
    }
    if (m.height == 0) throw std::runtime_error("score map: " + path.string() + " is empty");
    m.detector = path.stem().string();
    m.feature_space = "file";
    m.validate();
    return m;
}

} // namespace hutd::detect
