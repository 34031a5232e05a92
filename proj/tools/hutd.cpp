// hutd: generate | train | detect | eval | repro
//
// Exit codes: 0 success, 1 assertion failure, 2 I/O or configuration error.

#include "hutd/config.hpp"
#include "hutd/parallel.hpp"
#include "hutd/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hutd;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> rounds, epochs, k;
    std::optional<double> epsilon;
    std::optional<std::string> attack, balanced;

    void add_to(CLI::App* app, bool training)
    {
        app->add_option("--config", config, "flat key = value config file");
        app->add_option("--seed", seed, "seed for scene synthesis and training");
        if (!training) return;
        app->add_option("--rounds", rounds, "self-paced rounds");
        app->add_option("--epochs", epochs, "training epochs per round");
        app->add_option("--k", k, "free cluster count");
        app->add_option("--epsilon", epsilon, "l-infinity augmentation budget");
        app->add_option("--attack", attack, "augmentation attack")->check(CLI::IsMember({"fgsm", "pgd"}));
        app->add_option("--balanced", balanced, "equal-size clustering")->check(CLI::IsMember({"on", "off"}));
    }

    config::RunConfig resolve() const
    {
        config::RunConfig cfg = config.empty() ? config::RunConfig{} : config::load_file(config);
        if (seed) config::apply(cfg, "seed", std::to_string(*seed));
        if (rounds) cfg.spl.rounds = *rounds;
        if (epochs) cfg.spl.epochs = *epochs;
        if (k) cfg.spl.k = *k;
        if (epsilon) cfg.spl.epsilon = *epsilon;
        if (attack) config::apply(cfg, "attack", *attack);
        if (balanced) config::apply(cfg, "balanced", *balanced);
        return cfg;
    }
};

void log_line(const std::string& s) { std::cerr << "[hutd] " << s << "\n"; }

std::string timestamp()
{
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

json config_json(const config::RunConfig& cfg)
{
    json j = json::object();
    std::istringstream is(config::to_text(cfg));
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

void write_manifest(const fs::path& out, const std::string& command, const config::RunConfig* cfg,
                    const std::vector<fs::path>& artifacts, const std::map<std::string, double>& stages,
                    const json& extra = json::object())
{
    json m;
    m["command"] = command;
    m["tool_version"] = HUTD_VERSION;
    m["created"] = timestamp();
    m["threads"] = parallel::thread_count();
    if (cfg) {
        m["config"] = config_json(*cfg);
        m["config_text"] = config::to_text(*cfg);
        m["seeds"] = {{"scene", cfg->scene.seed}, {"train", cfg->spl.seed}};
    }
    json files = json::array();
    for (const auto& a : artifacts) files.push_back(a.string());
    m["artifacts"] = files;
    m["stage_seconds"] = stages;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    std::ofstream os(out / "manifest.json", std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + (out / "manifest.json").string());
    os << m.dump(2) << "\n";
}

double since(std::chrono::steady_clock::time_point t)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

int cmd_generate(const Overrides& o, const fs::path& out)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = o.resolve();
    const auto sc = scene::synth_scene(cfg.scene);
    scene::save_scene_dir(sc, out);
    std::vector<fs::path> files;
    for (const char* f : {"scene.hdr", "scene.dat", "mask.pgm", "reference.csv"}) files.push_back(out / f);
    write_manifest(out, "generate", &cfg, files, {{"generate", since(t0)}});
    log_line("wrote scene to " + out.string());
    return 0;
}

int cmd_train(const Overrides& o, const fs::path& scene_dir, const fs::path& out, const std::string& resume_from)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = o.resolve();
    const auto prepared = pipeline::prepare(scene::load_scene_dir(scene_dir));
    const Tensor x = scene::pixel_matrix(prepared.cube);
    fs::create_directories(out);
    spl::RunHooks hooks;
    hooks.log = log_line;
    hooks.checkpoint_path = out / "checkpoint.bin";
    spl::SplState state = resume_from.empty() ? spl::initialize(x, cfg.spl)
                                              : spl::resume(resume_from, cfg.spl, prepared.cube.bands);
    if (!resume_from.empty()) log_line("resuming after round " + std::to_string(state.completed_rounds));
    spl::run_rounds(state, x, prepared.reference.values, cfg.spl, hooks);
    spl::checkpoint_round(state, cfg.spl, hooks.checkpoint_path);
    state.trace.save_csv(out / "trace.csv");
    hlcl::save_metrics_csv(state.trace.epochs, out / "metrics.csv");
    std::vector<fs::path> files = {hooks.checkpoint_path, out / "trace.csv", out / "metrics.csv"};
    if (!state.last_partition.assignments.empty()) {
        rgc::save_partition_csv(state.last_partition, out / "partition.csv");
        files.push_back(out / "partition.csv");
    }
    write_manifest(out, "train", &cfg, files, {{"train", since(t0)}},
                   {{"scene", scene_dir.string()}, {"completed_rounds", state.completed_rounds}});
    return 0;
}

int cmd_detect(const Overrides& o, const fs::path& scene_dir, const std::string& checkpoint,
               const std::vector<std::string>& detectors, const fs::path& out)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = o.resolve();
    const auto prepared = pipeline::prepare(scene::load_scene_dir(scene_dir));
    std::optional<spl::SplState> state;
    const bool needs_encoder =
        std::any_of(detectors.begin(), detectors.end(), [](const auto& d) { return d == "sam" || d == "cem"; });
    if (needs_encoder) {
        if (checkpoint.empty()) throw config::ConfigError("detectors sam and cem need --checkpoint");
        state = spl::resume(checkpoint, cfg.spl, prepared.cube.bands);
    }
    const auto maps = pipeline::detect(prepared, detectors, state ? &state->bundle.encoder : nullptr);
    fs::create_directories(out);
    std::vector<fs::path> files;
    for (const auto& m : maps) {
        detect::save_score_map(m, out / m.tag());
        for (const char* ext : {".f32", ".csv", ".pgm"}) files.push_back(out / (m.tag() + ext));
    }
    write_manifest(out, "detect", &cfg, files, {{"detect", since(t0)}},
                   {{"scene", scene_dir.string()}, {"checkpoint", checkpoint}});
    return 0;
}

int cmd_eval(const std::vector<std::string>& map_paths, const std::string& mask_path, const fs::path& out)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto truth = scene::load_mask_pgm(mask_path);
    std::vector<detect::ScoreMap> maps;
    for (const auto& p : map_paths) maps.push_back(detect::load_score_map_csv(p));
    const auto rows = pipeline::evaluate(maps, truth);
    fs::create_directories(out);
    eval::save_auc_csv(rows, out / "auc.csv");
    std::vector<fs::path> files = {out / "auc.csv"};
    for (const auto& r : rows) {
        eval::save_roc_csv(r.roc, out / ("roc_" + r.name + ".csv"));
        files.push_back(out / ("roc_" + r.name + ".csv"));
    }
    write_manifest(out, "eval", nullptr, files, {{"eval", since(t0)}}, {{"mask", mask_path}});
    std::ifstream is(out / "auc.csv");
    std::cout << is.rdbuf();
    return 0;
}

int cmd_repro(const Overrides& o, const fs::path& out)
{
    const auto cfg = o.resolve();
    const auto res = pipeline::run_repro(cfg, out, log_line);
    const auto& sam = res.roc("sam");
    const auto& cem = res.roc("cem");
    const auto& sam_raw = res.roc("sam-raw");
    const auto& cem_raw = res.roc("cem-raw");
    const auto& rounds = res.state.trace.rounds;
    const bool ordering_sam = sam.auc_pd_pf >= sam_raw.auc_pd_pf + 0.05;
    const bool ordering_cem = cem.auc_pd_pf >= cem_raw.auc_pd_pf + 0.05;
    const bool trend = rounds.back().reliable_fraction >= rounds.front().reliable_fraction;
    json checks = {{"learned_sam_beats_raw_sam", ordering_sam},
                   {"learned_cem_beats_raw_cem", ordering_cem},
                   {"reliable_fraction_last_ge_first", trend}};
    auto artifacts = res.artifacts;
    artifacts.push_back(out / "manifest.json");
    write_manifest(out, "repro", &cfg, artifacts, res.stage_seconds, {{"checks", checks}});
    std::ifstream is(out / "auc.csv");
    std::cout << is.rdbuf();
    std::printf("reliable fraction: round 1 %.4f, round %zu %.4f\n", rounds.front().reliable_fraction, rounds.size(),
                rounds.back().reliable_fraction);
    for (auto it = checks.begin(); it != checks.end(); ++it)
        std::printf("%s %s\n", it.value().get<bool>() ? "PASS" : "FAIL", it.key().c_str());
    return ordering_sam && ordering_cem && trend ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Hyperspectral underwater target detection"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(HUTD_VERSION));

    Overrides gen_o, train_o, det_o, repro_o;
    std::string out = "out";
    std::string scene_dir, resume, checkpoint, mask;
    std::vector<std::string> detectors, maps;

    auto* gen = app.add_subcommand("generate", "synthesise a labelled scene");
    gen_o.add_to(gen, false);
    gen->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train", "run the self-paced training loop");
    train_o.add_to(train, true);
    train->add_option("--scene", scene_dir, "scene directory")->required();
    train->add_option("--out", out, "output directory")->required();
    train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

    auto* det = app.add_subcommand("detect", "score every pixel");
    det_o.add_to(det, true);
    det->add_option("--scene", scene_dir, "scene directory")->required();
    det->add_option("--checkpoint", checkpoint, "trained checkpoint (embedded detectors)");
    det->add_option("--detector", detectors, "sam, cem, sam-raw, cem-raw")
        ->required()
        ->check(CLI::IsMember({"sam", "cem", "sam-raw", "cem-raw"}));
    det->add_option("--out", out, "output directory")->required();

    auto* ev = app.add_subcommand("eval", "ROC and AUC report");
    ev->add_option("--map", maps, "score map CSV (repeatable)")->required()->check(CLI::ExistingFile);
    ev->add_option("--mask", mask, "ground-truth PGM")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", out, "output directory")->required();

    auto* repro = app.add_subcommand("repro", "full pipeline with acceptance checks");
    repro_o.add_to(repro, true);
    repro->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_generate(gen_o, out);
        if (*train) {
            if (!fs::is_directory(scene_dir)) throw std::runtime_error("scene directory " + scene_dir + " not found");
            return cmd_train(train_o, scene_dir, out, resume);
        }
        if (*det) return cmd_detect(det_o, scene_dir, checkpoint, detectors, out);
        if (*ev) return cmd_eval(maps, mask, out);
        if (*repro) return cmd_repro(repro_o, out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "hutd: " << e.what() << "\n";
        return 2;
    } catch (const std::logic_error& e) {
        std::cerr << "hutd: internal assertion failed: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "hutd: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
