#pragma once

// Flat "key = value" run configuration. '#' starts a comment; unknown keys
// are errors.

#include "hutd/scene.hpp"
#include "hutd/spl.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace hutd::config {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    scene::SceneConfig scene = scene::SceneConfig::desk_default();
    spl::SplConfig spl;
};

// `seed` sets both the scene and the training seed.
void apply(RunConfig& cfg, const std::string& key, const std::string& value);
const std::vector<std::string>& known_keys();

RunConfig parse_text(const std::string& text, const std::string& source = "<config>");
RunConfig load_file(const std::filesystem::path& path);
// Every key, one per line, in a form parse_text reads back exactly.
std::string to_text(const RunConfig& cfg);

} // namespace hutd::config
