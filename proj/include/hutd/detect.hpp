#pragma once

#include "hutd/mlp.hpp"
#include "hutd/scene.hpp"
#include "hutd/tensor.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hutd::detect {

// Higher is more target-like. Row-major, H x W.
struct ScoreMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> scores;
    std::string detector;       // sam | cem
    std::string feature_space;  // raw | embedding

    std::string tag() const;    // e.g. "sam-raw"
    void validate() const;      // dimensions and finiteness
};

struct Embedding {
    Tensor z;                   // (H*W) x E
    std::vector<double> z_ref;
};

Embedding embed_scene(const scene::HsiCube& cube, std::span<const double> reference, const nn::Mlp& encoder);

// Cosine between every row and z_ref; throws on a zero row or zero reference.
std::vector<double> sam(const Tensor& z, std::span<const double> z_ref);

struct CemFilter {
    std::vector<double> weights;
    double ridge = 0.0;
};

// w = (R + lI)^-1 z_ref / (z_ref^T (R + lI)^-1 z_ref), R = Z^T Z / n, l = 1e-6 tr(R) / D.
CemFilter cem_filter(const Tensor& z, std::span<const double> z_ref);
std::vector<double> cem(const Tensor& z, std::span<const double> z_ref);

ScoreMap sam_raw(const scene::HsiCube& cube, std::span<const double> reference);
ScoreMap cem_raw(const scene::HsiCube& cube, std::span<const double> reference);
ScoreMap sam_embedded(const scene::HsiCube& cube, const Embedding& e);
ScoreMap cem_embedded(const scene::HsiCube& cube, const Embedding& e);

// <stem>.f32 (little-endian float32 grid), <stem>.csv (H lines of W values,
// full precision), <stem>.pgm (min-max stretched to 0..255).
void save_score_map(const ScoreMap& map, const std::filesystem::path& stem);
// Reads the CSV grid written by save_score_map.
ScoreMap load_score_map_csv(const std::filesystem::path& path);

} // namespace hutd::detect
