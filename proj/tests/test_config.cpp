#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "aimc/config.hpp"

using namespace aimc;

namespace fs = std::filesystem;

TEST_CASE("config round-trips through the json file") {
    Config cfg;
    cfg.physics.charge_to_lsb = 0.004;
    cfg.variation.gain_sigma_ln = 0.1;
    cfg.mac.resends = 3;
    cfg.calibration.tolerance_cv = 0.05;
    cfg.timing.power_w = 0.25;
    cfg.training.batch_size = 100;

    const auto path = fs::temp_directory_path() / "aimc_test_config.json";
    save_config(cfg, path);
    const auto loaded = load_config(path);
    CHECK(loaded.physics.charge_to_lsb == 0.004);
    CHECK(loaded.variation.gain_sigma_ln == 0.1);
    CHECK(loaded.mac.resends == 3);
    CHECK(loaded.calibration.tolerance_cv == 0.05);
    CHECK(loaded.timing.power_w == 0.25);
    CHECK(loaded.training.batch_size == 100);
    fs::remove(path);
}

TEST_CASE("partial configs keep defaults for missing keys") {
    const auto path = fs::temp_directory_path() / "aimc_test_config2.json";
    std::ofstream(path) << R"({"physics": {"trial_noise_sigma_lsb": 1.0}})";
    const auto cfg = load_config(path);
    CHECK(cfg.physics.trial_noise_sigma_lsb == 1.0);
    CHECK(cfg.physics.charge_to_lsb == PhysicsSpec{}.charge_to_lsb);
    CHECK(cfg.training.batch_size == 200);
    fs::remove(path);
}

TEST_CASE("unknown keys and invalid values are configuration errors") {
    const auto path = fs::temp_directory_path() / "aimc_test_config3.json";
    std::ofstream(path) << R"({"physics": {"charge_to_lsbb": 1.0}})";
    CHECK_THROWS_AS(load_config(path), ConfigError);

    std::ofstream(path) << R"({"variation": {"gain_sigma_ln": -1.0}})";
    CHECK_THROWS_AS(load_config(path), ConfigError);

    std::ofstream(path) << R"(not json at all)";
    CHECK_THROWS_AS(load_config(path), ConfigError);
    fs::remove(path);

    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}
