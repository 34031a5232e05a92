#pragma once

// Glue shared by the CLI and the acceptance suite.

#include "hutd/config.hpp"
#include "hutd/detect.hpp"
#include "hutd/eval.hpp"
#include "hutd/scene.hpp"
#include "hutd/spl.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace hutd::pipeline {

// Min-max normalises the cube and maps the reference through the same affine map.
scene::Scene prepare(const scene::Scene& raw);

// Score maps for `names` (sam, cem, sam-raw, cem-raw). The embedded
// detectors need `encoder`.
std::vector<detect::ScoreMap> detect(const scene::Scene& prepared, const std::vector<std::string>& names,
                                     const nn::Mlp* encoder);

std::vector<eval::ReportRow> evaluate(const std::vector<detect::ScoreMap>& maps, const scene::GroundTruth& truth);

struct ReproResult {
    spl::SplState state;
    std::vector<detect::ScoreMap> maps;
    std::vector<eval::ReportRow> rows;
    std::map<std::string, double> stage_seconds;
    std::vector<std::filesystem::path> artifacts;

    const eval::RocData& roc(const std::string& name) const;
};

// generate -> train -> detect (all four) -> evaluate, writing every artifact
// under `out_dir`.
ReproResult run_repro(const config::RunConfig& cfg, const std::filesystem::path& out_dir,
                      const std::function<void(const std::string&)>& log = {});

} // namespace hutd::pipeline
