#include "doctest.h"

#include "hutd/config.hpp"

#include <filesystem>
#include <fstream>
#include <string>

using namespace hutd;

TEST_SUITE("config") {

TEST_CASE("parse keys, comments and blank lines")
{
    const auto cfg = config::parse_text(
        "# comment\n"
        "\n"
        "k = 3   # trailing comment\n"
        "rounds=2\n"
        "  epsilon = 0.25\n"
        "attack = pgd\n"
        "balanced = off\n"
        "seed = 7\n"
        "targets = 1,2,3,4,0.5; 10,10,2,2,1\n");
    CHECK(cfg.spl.k == 3);
    CHECK(cfg.spl.rounds == 2);
    CHECK(cfg.spl.epsilon == 0.25);
    CHECK(cfg.spl.attack == hlcl::Attack::Pgd);
    CHECK_FALSE(cfg.spl.balanced);
    CHECK(cfg.spl.seed == 7);
    CHECK(cfg.scene.seed == 7);
    REQUIRE(cfg.scene.targets.size() == 2);
    CHECK(cfg.scene.targets[1].depth == 1.0);
}

TEST_CASE("errors name the offending key and line")
{
    auto message = [](const std::string& text) {
        try {
            config::parse_text(text, "test.conf");
        } catch (const config::ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    const auto unknown = message("k = 2\nbogus_key = 1\n");
    CHECK(unknown.find("bogus_key") != std::string::npos);
    CHECK(unknown.find("test.conf:2") != std::string::npos);
    CHECK(message("k = two\n").find("k") != std::string::npos);
    CHECK_FALSE(message("just words\n").empty());
    CHECK_FALSE(message("attack = cw\n").empty());
    CHECK_FALSE(message("balanced = maybe\n").empty());
    CHECK_FALSE(message("epsilon = 0.1x\n").empty());
    CHECK_THROWS_AS(config::load_file("/nonexistent/run.conf"), config::ConfigError);
}

TEST_CASE("to_text round trip")
{
    config::RunConfig cfg;
    config::apply(cfg, "lr", "0.0123");
    config::apply(cfg, "classifier_optimizer", "adam");
    config::apply(cfg, "unit_features", "off");
    const std::string text = config::to_text(cfg);
    const auto back = config::parse_text(text);
    CHECK(config::to_text(back) == text);
    CHECK(back.spl.lr == 0.0123);
    CHECK(back.spl.classifier_optimizer == rgc::Optimizer::Adam);
    CHECK_FALSE(back.spl.unit_features);
    for (const auto& key : config::known_keys()) CHECK(text.find(key + " = ") != std::string::npos);
}

TEST_CASE("shipped config matches the built-in defaults")
{
    const std::filesystem::path path = std::filesystem::path(HUTD_SOURCE_DIR) / "configs" / "default.conf";
    REQUIRE(std::filesystem::exists(path));
    CHECK(config::to_text(config::load_file(path)) == config::to_text(config::RunConfig{}));
}

}
