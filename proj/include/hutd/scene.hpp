#pragma once

#include "hutd/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hutd::scene {

// H x W x B reflectance volume, stored pixel-major: (r * W + c) * B + b.
struct HsiCube {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t bands = 0;
    std::vector<double> wavelengths;  // nm, strictly increasing
    std::vector<double> data;

    std::size_t pixels() const noexcept { return height * width; }
    double& at(std::size_t r, std::size_t c, std::size_t b) { return data[(r * width + c) * bands + b]; }
    double at(std::size_t r, std::size_t c, std::size_t b) const { return data[(r * width + c) * bands + b]; }
    std::span<const double> pixel(std::size_t i) const
    {
        return std::span<const double>(data).subspan(i * bands, bands);
    }

    // Throws std::invalid_argument naming the violated invariant.
    void validate() const;
};

struct Spectrum {
    std::vector<double> values;
    std::vector<double> wavelengths;
};

struct GroundTruth {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> mask;  // 1 = target

    std::size_t target_count() const;
};

struct TargetShape {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t height = 1;
    std::size_t width = 1;
    double depth = 0.0;  // metres below the surface
};

struct SceneConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t bands = 60;
    double wavelength_min = 400.0;
    double wavelength_max = 1000.0;
    std::size_t materials = 6;
    std::vector<TargetShape> targets;
    // Per-band diffuse attenuation K(lambda) in 1/m; empty selects the default
    // blue-clear, red-opaque profile.
    std::vector<double> attenuation;
    double noise = 0.004;  // std-dev of additive Gaussian noise
    std::uint64_t seed = 42;

    // 64 x 64 x 60, six bottom materials, three submerged 6x6 plates at
    // 0.5, 1.5 and 2.5 m.
    static SceneConfig desk_default();
    void validate() const;
};

struct Scene {
    HsiCube cube;
    GroundTruth truth;
    Spectrum reference;
};

// ---- ENVI ------------------------------------------------------------------

HsiCube load_envi(const std::filesystem::path& header_path, const std::filesystem::path& data_path);
// Writes band-sequential little-endian float32.
void save_envi(const HsiCube& cube, const std::filesystem::path& header_path,
               const std::filesystem::path& data_path);

// ---- pixels ----------------------------------------------------------------

// Row-major: index i is pixel (i / W, i % W).
std::vector<Spectrum> extract_pixels(const HsiCube& cube);
// Same order as extract_pixels, as an (H*W) x B matrix.
Tensor pixel_matrix(const HsiCube& cube);

// ---- synthesis -------------------------------------------------------------

// Default attenuation profile sampled at `wavelengths`.
std::vector<double> default_attenuation(std::span<const double> wavelengths);
// Two-flow water-column mix: water * (1 - e^{-2Kd}) + bottom * e^{-2Kd}.
std::vector<double> water_column(std::span<const double> bottom, std::span<const double> water,
                                 std::span<const double> attenuation, double depth);

Scene synth_scene(const SceneConfig& cfg);

// ---- normalisation ---------------------------------------------------------

struct AffineRange {
    double lo = 0.0;
    double hi = 1.0;
    double apply(double v) const { return (v - lo) / (hi - lo); }
};

// Global min/max of the cube; throws when the cube is constant.
AffineRange scene_range(const HsiCube& cube);
HsiCube normalize_cube(const HsiCube& cube);
Spectrum apply_range(const Spectrum& s, const AffineRange& range);

// ---- auxiliary files -------------------------------------------------------

// PGM (P5) masks: any non-zero byte is a target.
GroundTruth load_mask_pgm(const std::filesystem::path& path);
void save_mask_pgm(const GroundTruth& truth, const std::filesystem::path& path);
void save_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
              std::span<const std::uint8_t> pixels);

// CSV with a "wavelength,value" header and one row per band.
Spectrum load_spectrum_csv(const std::filesystem::path& path);
void save_spectrum_csv(const Spectrum& s, const std::filesystem::path& path);

// Scene directory: scene.hdr, scene.dat, mask.pgm, reference.csv.
void save_scene_dir(const Scene& scene, const std::filesystem::path& dir);
Scene load_scene_dir(const std::filesystem::path& dir);

// ATR2-HUTD style sub-dataset layout: <dir>/<name>.hdr + <name>.dat (ENVI),
// <name>_gt.pgm (mask exported from the released annotations) and
// <name>_ref.csv (land-measured reference). The released archives are not
// read directly; convert them to this layout first.
Scene load_benchmark_scene(const std::filesystem::path& dir, const std::string& name);

} // namespace hutd::scene
