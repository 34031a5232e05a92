#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string without_last_column(const std::string& csv)
{
    std::istringstream is(csv);
    std::string line, out;
    while (std::getline(is, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

class Sandbox {
public:
    Sandbox() : root_(fs::temp_directory_path() / "hutd_cli_test")
    {
        fs::remove_all(root_);
        fs::create_directories(root_);
        std::ofstream(root_ / "tiny.conf") << "height = 12\nwidth = 12\nbands = 10\nmaterials = 3\n"
                                              "targets = 2,2,3,3,0.5; 7,7,3,3,1.0\n"
                                              "k = 2\nrounds = 2\nepochs = 1\nbatch = 32\n"
                                              "ae_epochs = 2\nclassifier_warmup = 4\nclassifier_steps = 2\n";
    }
    ~Sandbox() { fs::remove_all(root_); }

    const fs::path& root() const { return root_; }
    fs::path conf() const { return root_ / "tiny.conf"; }

    Result run(const std::string& args) const
    {
        const std::string cmd = std::string(HUTD_CLI_PATH) + " " + args + " > " + (root_ / "stdout").string() +
                                " 2> " + (root_ / "stderr").string();
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(root_ / "stdout");
        r.err = slurp(root_ / "stderr");
        return r;
    }

private:
    fs::path root_;
};

} // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and exit codes")
{
    Sandbox sb;
    CHECK(sb.run("--version").code == 0);
    CHECK(sb.run("").code == 2);
    CHECK(sb.run("frobnicate").code == 2);
    CHECK(sb.run("detect --scene x --detector ace --out y").code == 2);

    std::ofstream(sb.root() / "bad.conf") << "k = 2\nnot_a_key = 3\n";
    const auto bad = sb.run("generate --config " + (sb.root() / "bad.conf").string() + " --out " +
                            (sb.root() / "g").string());
    CHECK(bad.code == 2);
    CHECK(bad.err.find("not_a_key") != std::string::npos);

    const auto missing = sb.run("train --scene " + (sb.root() / "nowhere").string() + " --out " +
                                (sb.root() / "t").string());
    CHECK(missing.code == 2);
}

TEST_CASE("generate, train, detect and eval")
{
    Sandbox sb;
    const std::string conf = " --config " + sb.conf().string();
    const fs::path scene = sb.root() / "scene", again = sb.root() / "again";
    REQUIRE(sb.run("generate" + conf + " --out " + scene.string()).code == 0);
    REQUIRE(sb.run("generate" + conf + " --out " + again.string()).code == 0);
    for (const char* f : {"scene.hdr", "scene.dat", "mask.pgm", "reference.csv"}) {
        CHECK(fs::exists(scene / f));
        CHECK(slurp(scene / f) == slurp(again / f));
    }
    CHECK(fs::exists(scene / "manifest.json"));

    // Raw detectors need no checkpoint; the embedded ones do.
    const fs::path raw = sb.root() / "raw";
    CHECK(sb.run("detect" + conf + " --scene " + scene.string() + " --detector sam-raw --detector cem-raw --out " +
                 raw.string())
              .code == 0);
    CHECK(fs::exists(raw / "sam-raw.csv"));
    CHECK(fs::exists(raw / "cem-raw.pgm"));
    CHECK(sb.run("detect" + conf + " --scene " + scene.string() + " --detector sam --out " + raw.string()).code == 2);

    const fs::path dry = sb.root() / "dry";
    REQUIRE(sb.run("train" + conf + " --rounds 1 --epochs 0 --scene " + scene.string() + " --out " + dry.string())
                .code == 0);
    CHECK(fs::exists(dry / "checkpoint.bin"));
    CHECK(fs::exists(dry / "trace.csv"));

    const fs::path full = sb.root() / "full", resumed = sb.root() / "resumed";
    REQUIRE(sb.run("train" + conf + " --scene " + scene.string() + " --out " + full.string()).code == 0);
    REQUIRE(sb.run("train" + conf + " --rounds 1 --scene " + scene.string() + " --out " + resumed.string()).code == 0);
    REQUIRE(sb.run("train" + conf + " --scene " + scene.string() + " --resume " +
                   (resumed / "checkpoint.bin").string() + " --out " + resumed.string())
                .code == 0);
    // Checkpoints carry wall times, so compare the recorded results instead.
    CHECK(slurp(full / "metrics.csv") == slurp(resumed / "metrics.csv"));
    CHECK(without_last_column(slurp(full / "trace.csv")) == without_last_column(slurp(resumed / "trace.csv")));

    const fs::path maps = sb.root() / "maps";
    REQUIRE(sb.run("detect" + conf + " --scene " + scene.string() + " --checkpoint " +
                   (full / "checkpoint.bin").string() +
                   " --detector sam --detector cem --detector sam-raw --detector cem-raw --out " + maps.string())
                .code == 0);
    for (const char* d : {"sam", "cem", "sam-raw", "cem-raw"}) CHECK(fs::exists(maps / (std::string(d) + ".csv")));

    const fs::path report = sb.root() / "report";
    const auto ev = sb.run("eval --map " + (maps / "sam.csv").string() + " --map " + (maps / "cem-raw.csv").string() +
                           " --mask " + (scene / "mask.pgm").string() + " --out " + report.string());
    REQUIRE(ev.code == 0);
    std::istringstream auc(slurp(report / "auc.csv"));
    std::string line;
    std::getline(auc, line);
    CHECK(line == "detector,auc_pd_pf,auc_pd_tau,auc_pf_tau,auc_oa,auc_snpr");
    std::size_t rows = 0;
    while (std::getline(auc, line)) ++rows;
    CHECK(rows == 2);
    CHECK(fs::exists(report / "roc_sam.csv"));

    // A map of the wrong size is rejected.
    std::ofstream(sb.root() / "small.csv") << "0.1,0.2\n0.3,0.4\n";
    CHECK(sb.run("eval --map " + (sb.root() / "small.csv").string() + " --mask " + (scene / "mask.pgm").string() +
                 " --out " + report.string())
              .code == 2);
}

}
