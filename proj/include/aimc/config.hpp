#pragma once

#include <filesystem>

#include "aimc/calibration.hpp"
#include "aimc/cost.hpp"
#include "aimc/train.hpp"

namespace aimc {

struct TrainConfig {
    AdamParams adam;
    int batch_size = 200;
    int batches_per_epoch = 300;
    int software_epochs = 20;
    int itl_epochs = 1;
    int warmup_images = 512; // input-scale and hardware-gain fits
    int weight_limit = 63;   // 15 for the reduced 4-bit variant
};

// Artifact-wide configuration, one flat section per module. Stored as a
// human-readable JSON file checked into each experiment directory.
struct Config {
    VariationSpec variation;
    PhysicsSpec physics;
    MacOptions mac;
    CalibrationOptions calibration;
    TimingSpec timing;
    TrainConfig training;

    void validate() const;
};

Config load_config(const std::filesystem::path& path);
void save_config(const Config& cfg, const std::filesystem::path& path);

// AIMCSIM_CONFIG, when set, supplies the default config path
std::filesystem::path default_config_path();

} // namespace aimc
