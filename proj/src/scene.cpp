#include "hutd/scene.hpp"

#include "hutd/rng.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hutd::scene {

namespace fs = std::filesystem;

// ---- invariants ----------------------------------------------------------------

void HsiCube::validate() const
{
    if (height * width * bands != data.size()) {
        throw std::invalid_argument("cube: H*W*B = " + std::to_string(height * width * bands) +
                                    " but data holds " + std::to_string(data.size()) + " values");
    }
    if (wavelengths.size() != bands) throw std::invalid_argument("cube: wavelength count differs from band count");
    for (std::size_t b = 1; b < wavelengths.size(); ++b)
        if (!(wavelengths[b] > wavelengths[b - 1])) throw std::invalid_argument("cube: wavelengths not strictly increasing");
    for (double v : data)
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("cube: reflectance not finite and non-negative");
}

std::size_t GroundTruth::target_count() const
{
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }));
}

SceneConfig SceneConfig::desk_default()
{
    SceneConfig cfg;
    cfg.targets = {
        {12, 12, 6, 6, 0.5},
        {28, 42, 6, 6, 1.5},
        {46, 20, 6, 6, 2.5},
    };
    return cfg;
}

void SceneConfig::validate() const
{
    if (bands < 2) throw std::invalid_argument("scene config: bands must be >= 2");
    if (height == 0 || width == 0) throw std::invalid_argument("scene config: empty image");
    if (materials == 0) throw std::invalid_argument("scene config: need at least one background material");
    if (targets.empty()) throw std::invalid_argument("scene config: zero targets requested");
    if (!(noise >= 0.0)) throw std::invalid_argument("scene config: noise must be >= 0");
    if (!(wavelength_max > wavelength_min)) throw std::invalid_argument("scene config: empty wavelength range");
    if (!attenuation.empty() && attenuation.size() != bands)
        throw std::invalid_argument("scene config: attenuation needs one coefficient per band");
    for (double k : attenuation)
        if (!(k >= 0.0)) throw std::invalid_argument("scene config: attenuation must be >= 0");
    std::vector<std::uint8_t> used(height * width, 0);
    for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& s = targets[t];
        if (!(s.depth >= 0.0)) throw std::invalid_argument("scene config: target depth must be >= 0");
        if (s.height == 0 || s.width == 0 || s.row + s.height > height || s.col + s.width > width)
            throw std::invalid_argument("scene config: target " + std::to_string(t) + " outside the image");
        for (std::size_t r = s.row; r < s.row + s.height; ++r)
            for (std::size_t c = s.col; c < s.col + s.width; ++c) {
                if (used[r * width + c]) throw std::invalid_argument("scene config: targets overlap");
                used[r * width + c] = 1;
            }
    }
}

// ---- ENVI ------------------------------------------------------------------------

namespace {

std::string trim(std::string s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s)
{
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

std::map<std::string, std::string> parse_envi_header(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("envi: cannot open header " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line == "ENVI") continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = lower(trim(line.substr(0, eq)));
        std::string value = trim(line.substr(eq + 1));
        if (!value.empty() && value.front() == '{') {
            while (value.find('}') == std::string::npos && std::getline(is, line)) value += " " + trim(line);
            const auto open = value.find('{');
            const auto close = value.find('}');
            if (close == std::string::npos) throw std::runtime_error("envi: unterminated brace list for '" + key + "'");
            value = trim(value.substr(open + 1, close - open - 1));
        }
        kv[key] = value;
    }
    return kv;
}

const std::string& require_key(const std::map<std::string, std::string>& kv, const std::string& key,
                               const fs::path& path)
{
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("envi: header " + path.string() + " lacks mandatory key '" + key + "'");
    return it->second;
}

std::size_t to_size(const std::string& key, const std::string& v)
{
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (n < 0 || pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw std::runtime_error("envi: key '" + key + "' is not a non-negative integer: '" + v + "'");
    }
}

std::vector<double> parse_list(const std::string& v)
{
    std::vector<double> out;
    std::string item;
    std::istringstream ss(v);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::string format_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

HsiCube load_envi(const fs::path& header_path, const fs::path& data_path)
{
    const auto kv = parse_envi_header(header_path);
    HsiCube cube;
    cube.width = to_size("samples", require_key(kv, "samples", header_path));
    cube.height = to_size("lines", require_key(kv, "lines", header_path));
    cube.bands = to_size("bands", require_key(kv, "bands", header_path));
    const std::size_t dtype = to_size("data type", require_key(kv, "data type", header_path));
    const std::string interleave = lower(require_key(kv, "interleave", header_path));
    const std::size_t byte_order = kv.count("byte order") ? to_size("byte order", kv.at("byte order")) : 0;
    const std::size_t offset = kv.count("header offset") ? to_size("header offset", kv.at("header offset")) : 0;

    if (interleave != "bsq" && interleave != "bil" && interleave != "bip")
        throw std::runtime_error("envi: unknown interleave '" + interleave + "'");
    if (dtype != 4 && dtype != 12) throw std::runtime_error("envi: unsupported data type " + std::to_string(dtype));
    if (byte_order > 1) throw std::runtime_error("envi: byte order must be 0 or 1");

    const std::size_t elem = dtype == 4 ? 4 : 2;
    const std::size_t count = cube.height * cube.width * cube.bands;
    const std::size_t expected = count * elem;

    std::ifstream is(data_path, std::ios::binary);
    if (!is) throw std::runtime_error("envi: cannot open data file " + data_path.string());
    is.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::size_t>(is.tellg());
    if (file_size < offset + expected) {
        throw std::runtime_error("envi: data file " + data_path.string() + " truncated: expected " +
                                 std::to_string(offset + expected) + " bytes, found " + std::to_string(file_size));
    }
    is.seekg(static_cast<std::streamoff>(offset));
    std::vector<unsigned char> raw(expected);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));

    const bool swap = (byte_order == 1) != (std::endian::native == std::endian::big);
    auto value_at = [&](std::size_t idx) -> double {
        unsigned char b[4];
        std::memcpy(b, raw.data() + idx * elem, elem);
        if (swap) std::reverse(b, b + elem);
        if (dtype == 4) {
            float f;
            std::memcpy(&f, b, 4);
            return static_cast<double>(f);
        }
        std::uint16_t u;
        std::memcpy(&u, b, 2);
        return static_cast<double>(u);
    };

    const std::size_t H = cube.height, W = cube.width, B = cube.bands;
    cube.data.resize(count);
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c)
            for (std::size_t b = 0; b < B; ++b) {
                std::size_t src = 0;
                if (interleave == "bsq") src = b * H * W + r * W + c;
                else if (interleave == "bil") src = r * B * W + b * W + c;
                else src = (r * W + c) * B + b;
                cube.data[(r * W + c) * B + b] = value_at(src);
            }

    if (auto it = kv.find("wavelength"); it != kv.end()) {
        cube.wavelengths = parse_list(it->second);
        if (cube.wavelengths.size() != B)
            throw std::runtime_error("envi: wavelength list has " + std::to_string(cube.wavelengths.size()) +
                                     " entries for " + std::to_string(B) + " bands");
    } else {
        cube.wavelengths.resize(B);
        for (std::size_t b = 0; b < B; ++b) cube.wavelengths[b] = static_cast<double>(b + 1);
    }
    return cube;
}

void save_envi(const HsiCube& cube, const fs::path& header_path, const fs::path& data_path)
{
    if (cube.height == 0 || cube.width == 0) throw std::invalid_argument("envi: cannot write an empty spatial region");
    if (cube.bands == 0) throw std::invalid_argument("envi: cannot write a cube with zero bands");
    cube.validate();

    {
        std::ofstream hs(header_path, std::ios::trunc);
        if (!hs) throw std::runtime_error("envi: cannot write " + header_path.string());
        hs << "ENVI\n"
           << "description = {hutd export}\n"
           << "samples = " << cube.width << "\n"
           << "lines = " << cube.height << "\n"
           << "bands = " << cube.bands << "\n"
           << "header offset = 0\n"
           << "file type = ENVI Standard\n"
           << "data type = 4\n"
           << "interleave = bsq\n"
           << "byte order = 0\n"
           << "wavelength units = Nanometers\n"
           << "wavelength = {";
        for (std::size_t b = 0; b < cube.bands; ++b) hs << (b ? ", " : "") << format_double(cube.wavelengths[b]);
        hs << "}\n";
    }

    std::ofstream ds(data_path, std::ios::binary | std::ios::trunc);
    if (!ds) throw std::runtime_error("envi: cannot write " + data_path.string());
    const std::size_t H = cube.height, W = cube.width, B = cube.bands;
    std::vector<unsigned char> buf(H * W * B * 4);
    std::size_t o = 0;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c) {
                const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(cube.at(r, c, b)));
                for (int i = 0; i < 4; ++i) buf[o++] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
            }
    ds.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!ds) throw std::runtime_error("envi: write failed for " + data_path.string());
}

// ---- pixels --------------------------------------------------------------------------

std::vector<Spectrum> extract_pixels(const HsiCube& cube)
{
    std::vector<Spectrum> out;
    out.reserve(cube.pixels());
    for (std::size_t i = 0; i < cube.pixels(); ++i) {
        auto px = cube.pixel(i);
        out.push_back({std::vector<double>(px.begin(), px.end()), cube.wavelengths});
    }
    return out;
}

Tensor pixel_matrix(const HsiCube& cube)
{
    return Tensor({cube.pixels(), cube.bands}, cube.data);
}

// ---- synthesis ---------------------------------------------------------------------------

std::vector<double> default_attenuation(std::span<const double> wavelengths)
{
    // Clear in blue-green, rising through the red, opaque in the near infrared.
    std::vector<double> k(wavelengths.size());
    for (std::size_t b = 0; b < k.size(); ++b) {
        const double l = wavelengths[b];
        k[b] = 0.05 + 0.35 / (1.0 + std::exp(-(l - 620.0) / 30.0)) + 2.2 / (1.0 + std::exp(-(l - 740.0) / 20.0));
    }
    return k;
}

std::vector<double> water_column(std::span<const double> bottom, std::span<const double> water,
                                 std::span<const double> attenuation, double depth)
{
    std::vector<double> out(bottom.size());
    for (std::size_t b = 0; b < out.size(); ++b) {
        const double t = std::exp(-2.0 * attenuation[b] * depth);
        out[b] = water[b] * (1.0 - t) + bottom[b] * t;
    }
    return out;
}

namespace {

constexpr double kBackgroundDepthMin = 1.0;
constexpr double kBackgroundDepthMax = 3.5;
constexpr double kBackgroundSlope = 1.0;   // metres across the image width
constexpr double kDepthJitter = 0.15;

// Smooth random spectrum on the normalised wavelength axis.
std::vector<double> smooth_spectrum(Rng& rng, std::span<const double> axis, double base_lo, double base_hi)
{
    const double a0 = rng.uniform(base_lo, base_hi);
    const double a1 = rng.uniform(-0.10, 0.20);
    double amp[3], centre[3], width[3];
    for (int j = 0; j < 3; ++j) {
        amp[j] = rng.uniform(-0.08, 0.18);
        centre[j] = rng.uniform(0.0, 1.0);
        width[j] = rng.uniform(0.08, 0.30);
    }
    std::vector<double> s(axis.size());
    for (std::size_t b = 0; b < axis.size(); ++b) {
        double v = a0 + a1 * axis[b];
        for (int j = 0; j < 3; ++j) {
            const double z = (axis[b] - centre[j]) / width[j];
            v += amp[j] * std::exp(-z * z);
        }
        s[b] = std::max(v, 0.01);
    }
    return s;
}

} // namespace

Scene synth_scene(const SceneConfig& cfg)
{
    cfg.validate();
    const std::size_t H = cfg.height, W = cfg.width, B = cfg.bands;

    std::vector<double> wl(B), axis(B);
    for (std::size_t b = 0; b < B; ++b) {
        axis[b] = static_cast<double>(b) / static_cast<double>(B - 1);
        wl[b] = cfg.wavelength_min + (cfg.wavelength_max - cfg.wavelength_min) * axis[b];
    }
    const std::vector<double> K = cfg.attenuation.empty() ? default_attenuation(wl) : cfg.attenuation;

    std::vector<double> water(B);
    for (std::size_t b = 0; b < B; ++b) {
        const double z = (wl[b] - 520.0) / 70.0;
        water[b] = 0.01 + 0.07 * std::exp(-z * z);
    }

    Rng global(derive_seed(cfg.seed, 0));
    std::vector<double> reference = smooth_spectrum(global, axis, 0.15, 0.35);
    // Narrow blue peak and green trough, still visible through a few metres of water.
    for (std::size_t b = 0; b < B; ++b) {
        const double p = (wl[b] - 470.0) / 22.0, t = (wl[b] - 545.0) / 20.0;
        reference[b] = std::max(0.01, reference[b] + 0.30 * std::exp(-p * p) - 0.12 * std::exp(-t * t));
    }

    // Bottom materials under a sloping water column.
    std::vector<std::vector<double>> bottoms(cfg.materials);
    std::vector<double> base_depth(cfg.materials);
    std::vector<std::pair<double, double>> sites(cfg.materials);
    for (std::size_t m = 0; m < cfg.materials; ++m) {
        bottoms[m] = smooth_spectrum(global, axis, 0.05, 0.30);
        base_depth[m] = global.uniform(kBackgroundDepthMin, kBackgroundDepthMax);
        sites[m] = {global.uniform(0.0, static_cast<double>(H)), global.uniform(0.0, static_cast<double>(W))};
    }

    Scene out;
    out.cube.height = H;
    out.cube.width = W;
    out.cube.bands = B;
    out.cube.wavelengths = wl;
    out.cube.data.assign(H * W * B, 0.0);
    out.truth.height = H;
    out.truth.width = W;
    out.truth.mask.assign(H * W, 0);
    out.reference = {reference, wl};

    std::vector<std::size_t> material(H * W, 0);
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t m = 0; m < cfg.materials; ++m) {
                const double dr = static_cast<double>(r) + 0.5 - sites[m].first;
                const double dc = static_cast<double>(c) + 0.5 - sites[m].second;
                const double d = dr * dr + dc * dc;
                if (d < best_d) {
                    best_d = d;
                    material[r * W + c] = m;
                }
            }
        }

    std::vector<std::vector<double>> target_spectra;
    std::vector<std::size_t> target_of(H * W, cfg.targets.size());
    target_spectra.reserve(cfg.targets.size());
    for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
        const auto& s = cfg.targets[t];
        target_spectra.push_back(water_column(reference, water, K, s.depth));
        for (std::size_t r = s.row; r < s.row + s.height; ++r)
            for (std::size_t c = s.col; c < s.col + s.width; ++c) {
                target_of[r * W + c] = t;
                out.truth.mask[r * W + c] = 1;
            }
    }

    for (std::size_t i = 0; i < H * W; ++i) {
        Rng px(derive_seed(cfg.seed, 1, i));
        std::vector<double> clean;
        if (target_of[i] < cfg.targets.size()) {
            clean = target_spectra[target_of[i]];
        } else {
            const double slope = kBackgroundSlope * (static_cast<double>(i % W) / static_cast<double>(W) - 0.5);
            const double depth = std::max(0.1, base_depth[material[i]] + slope + kDepthJitter * px.normal());
            clean = water_column(bottoms[material[i]], water, K, depth);
        }
        for (std::size_t b = 0; b < B; ++b) {
            double v = clean[b];
            if (cfg.noise > 0.0) v += cfg.noise * px.normal();
            out.cube.data[i * B + b] = std::max(v, 0.0);
        }
    }
    return out;
}

// ---- normalisation -------------------------------------------------------------------

AffineRange scene_range(const HsiCube& cube)
{
    if (cube.data.empty()) throw std::invalid_argument("normalize: empty cube");
    const auto [lo, hi] = std::minmax_element(cube.data.begin(), cube.data.end());
    if (!(*hi > *lo)) throw std::invalid_argument("normalize: constant cube has no range");
    return {*lo, *hi};
}

HsiCube normalize_cube(const HsiCube& cube)
{
    const AffineRange range = scene_range(cube);
    HsiCube out = cube;
    for (auto& v : out.data) v = range.apply(v);
    return out;
}

Spectrum apply_range(const Spectrum& s, const AffineRange& range)
{
    Spectrum out = s;
    for (auto& v : out.values) v = range.apply(v);
    return out;
}

// ---- auxiliary files -----------------------------------------------------------------------

void save_pgm(const fs::path& path, std::size_t height, std::size_t width, std::span<const std::uint8_t> pixels)
{
    if (pixels.size() != height * width) throw std::invalid_argument("pgm: pixel count does not match dimensions");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("pgm: cannot write " + path.string());
    os << "P5\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void save_mask_pgm(const GroundTruth& truth, const fs::path& path)
{
    std::vector<std::uint8_t> px(truth.mask.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = truth.mask[i] ? 255 : 0;
    save_pgm(path, truth.height, truth.width, px);
}

GroundTruth load_mask_pgm(const fs::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("pgm: cannot open " + path.string());
    auto token = [&]() {
        std::string t;
        while (is) {
            const int ch = is.get();
            if (ch == '#') {
                std::string skip;
                std::getline(is, skip);
                continue;
            }
            if (ch == EOF) break;
            if (std::isspace(ch)) {
                if (!t.empty()) break;
                continue;
            }
            t.push_back(static_cast<char>(ch));
        }
        return t;
    };
    if (token() != "P5") throw std::runtime_error("pgm: " + path.string() + " is not a binary (P5) PGM");
    GroundTruth gt;
    gt.width = std::stoul(token());
    gt.height = std::stoul(token());
    const unsigned long maxval = std::stoul(token());
    if (maxval == 0 || maxval > 255) throw std::runtime_error("pgm: only 8-bit masks are supported");
    std::vector<std::uint8_t> px(gt.width * gt.height);
    is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (static_cast<std::size_t>(is.gcount()) != px.size())
        throw std::runtime_error("pgm: " + path.string() + " truncated");
    gt.mask.resize(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) gt.mask[i] = px[i] != 0 ? 1 : 0;
    return gt;
}

Spectrum load_spectrum_csv(const fs::path& path)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("spectrum csv: cannot open " + path.string());
    Spectrum s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        if (lineno == 1 && lower(line).rfind("wavelength", 0) == 0) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("spectrum csv: " + path.string() + ":" + std::to_string(lineno) + " lacks a comma");
        s.wavelengths.push_back(std::stod(line.substr(0, comma)));
        s.values.push_back(std::stod(line.substr(comma + 1)));
    }
    if (s.values.empty()) throw std::runtime_error("spectrum csv: " + path.string() + " is empty");
    return s;
}

void save_spectrum_csv(const Spectrum& s, const fs::path& path)
{
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("spectrum csv: cannot write " + path.string());
    os << "wavelength,value\n";
    for (std::size_t b = 0; b < s.values.size(); ++b)
        os << format_double(s.wavelengths[b]) << "," << format_double(s.values[b]) << "\n";
}

void save_scene_dir(const Scene& scene, const fs::path& dir)
{
    fs::create_directories(dir);
    save_envi(scene.cube, dir / "scene.hdr", dir / "scene.dat");
    save_mask_pgm(scene.truth, dir / "mask.pgm");
    save_spectrum_csv(scene.reference, dir / "reference.csv");
}

namespace {

Scene assemble(HsiCube cube, GroundTruth truth, Spectrum ref, const std::string& where)
{
    if (truth.height != cube.height || truth.width != cube.width)
        throw std::runtime_error(where + ": mask dimensions do not match the cube");
    if (ref.values.size() != cube.bands)
        throw std::runtime_error(where + ": reference has " + std::to_string(ref.values.size()) +
                                 " bands, cube has " + std::to_string(cube.bands));
    return {std::move(cube), std::move(truth), std::move(ref)};
}

} // namespace

Scene load_scene_dir(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw std::runtime_error("scene directory " + dir.string() + " does not exist");
    return assemble(load_envi(dir / "scene.hdr", dir / "scene.dat"), load_mask_pgm(dir / "mask.pgm"),
                    load_spectrum_csv(dir / "reference.csv"), dir.string());
}

Scene load_benchmark_scene(const fs::path& dir, const std::string& name)
{
    return assemble(load_envi(dir / (name + ".hdr"), dir / (name + ".dat")),
                    load_mask_pgm(dir / (name + "_gt.pgm")), load_spectrum_csv(dir / (name + "_ref.csv")),
                    (dir / name).string());
}

} // namespace hutd::scene
