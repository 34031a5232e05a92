#include "hutd/pipeline.hpp"

#include <chrono>
#include <optional>
#include <stdexcept>

namespace hutd::pipeline {

namespace fs = std::filesystem;

scene::Scene prepare(const scene::Scene& raw)
{
    raw.cube.validate();
    if (raw.reference.values.size() != raw.cube.bands)
        throw std::invalid_argument("prepare: reference and cube differ in band count");
    const auto range = scene::scene_range(raw.cube);
    scene::Scene out = raw;
    out.cube = scene::normalize_cube(raw.cube);
    out.reference = scene::apply_range(raw.reference, range);
    return out;
}

std::vector<detect::ScoreMap> detect(const scene::Scene& prepared, const std::vector<std::string>& names,
                                     const nn::Mlp* encoder)
{
    std::vector<detect::ScoreMap> maps;
    const auto& ref = prepared.reference.values;
    std::optional<detect::Embedding> emb;
    for (const auto& name : names) {
        if (name == "sam-raw") maps.push_back(detect::sam_raw(prepared.cube, ref));
        else if (name == "cem-raw") maps.push_back(detect::cem_raw(prepared.cube, ref));
        else if (name == "sam" || name == "cem") {
            if (!encoder) throw std::invalid_argument("detector '" + name + "' needs a trained checkpoint");
            if (!emb) emb = detect::embed_scene(prepared.cube, ref, *encoder);
            maps.push_back(name == "sam" ? detect::sam_embedded(prepared.cube, *emb)
                                         : detect::cem_embedded(prepared.cube, *emb));
        } else {
            throw std::invalid_argument("unknown detector '" + name + "' (expected sam, cem, sam-raw or cem-raw)");
        }
    }
    return maps;
}

std::vector<eval::ReportRow> evaluate(const std::vector<detect::ScoreMap>& maps, const scene::GroundTruth& truth)
{
    std::vector<eval::ReportRow> rows;
    for (const auto& m : maps) {
        if (m.height != truth.height || m.width != truth.width)
            throw std::invalid_argument("evaluate: map '" + m.tag() + "' is " + std::to_string(m.height) + "x" +
                                        std::to_string(m.width) + ", mask is " + std::to_string(truth.height) + "x" +
                                        std::to_string(truth.width));
        rows.push_back({m.tag(), eval::roc(m.scores, truth.mask)});
    }
    return rows;
}

const eval::RocData& ReproResult::roc(const std::string& name) const
{
    for (const auto& r : rows)
        if (r.name == name) return r.roc;
    throw std::out_of_range("no report row named '" + name + "'");
}

ReproResult run_repro(const config::RunConfig& cfg, const fs::path& out_dir,
                      const std::function<void(const std::string&)>& log)
{
    using clock = std::chrono::steady_clock;
    auto seconds_since = [](clock::time_point t) { return std::chrono::duration<double>(clock::now() - t).count(); };
    ReproResult res;
    fs::create_directories(out_dir);

    auto t0 = clock::now();
    const scene::Scene raw = scene::synth_scene(cfg.scene);
    const fs::path scene_dir = out_dir / "scene";
    scene::save_scene_dir(raw, scene_dir);
    for (const char* f : {"scene.hdr", "scene.dat", "mask.pgm", "reference.csv"}) res.artifacts.push_back(scene_dir / f);
    res.stage_seconds["generate"] = seconds_since(t0);

    t0 = clock::now();
    const scene::Scene prepared = prepare(raw);
    const Tensor x = scene::pixel_matrix(prepared.cube);
    spl::RunHooks hooks;
    hooks.log = log;
    hooks.checkpoint_path = out_dir / "checkpoint.bin";
    res.state = spl::run(x, prepared.reference.values, cfg.spl, hooks);
    res.artifacts.push_back(hooks.checkpoint_path);
    res.state.trace.save_csv(out_dir / "trace.csv");
    hlcl::save_metrics_csv(res.state.trace.epochs, out_dir / "metrics.csv");
    rgc::save_partition_csv(res.state.last_partition, out_dir / "partition.csv");
    for (const char* f : {"trace.csv", "metrics.csv", "partition.csv"}) res.artifacts.push_back(out_dir / f);
    res.stage_seconds["train"] = seconds_since(t0);

    t0 = clock::now();
    res.maps = detect(prepared, {"sam", "cem", "sam-raw", "cem-raw"}, &res.state.bundle.encoder);
    const fs::path maps_dir = out_dir / "maps";
    fs::create_directories(maps_dir);
    for (const auto& m : res.maps) {
        detect::save_score_map(m, maps_dir / m.tag());
        for (const char* ext : {".f32", ".csv", ".pgm"}) res.artifacts.push_back(maps_dir / (m.tag() + ext));
    }
    res.stage_seconds["detect"] = seconds_since(t0);

    t0 = clock::now();
    res.rows = evaluate(res.maps, prepared.truth);
    eval::save_auc_csv(res.rows, out_dir / "auc.csv");
    res.artifacts.push_back(out_dir / "auc.csv");
    for (const auto& r : res.rows) {
        const fs::path p = out_dir / ("roc_" + r.name + ".csv");
        eval::save_roc_csv(r.roc, p);
        res.artifacts.push_back(p);
    }
    res.stage_seconds["evaluate"] = seconds_since(t0);
    return res;
}

} // namespace hutd::pipeline
