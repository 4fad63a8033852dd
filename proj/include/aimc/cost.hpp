#pragma once

#include <string>
#include <vector>

#include "aimc/errors.hpp"
#include "aimc/model.hpp"

namespace aimc {

// Published timing and power figures of the accelerator.
struct TimingSpec {
    double t_weight_write_ms = 5.0; // full 256x512 synapse matrix
    double t_reset_us = 1.0;
    double t_settle_us = 2.0;
    double t_adc_us = 1.5;
    double t_matmul_ms = 5.0; // one full vector-matrix multiplication
    double power_w = 0.3;

    void validate() const {
        if (t_weight_write_ms <= 0 || t_reset_us <= 0 || t_settle_us <= 0 || t_adc_us <= 0 ||
            t_matmul_ms <= 0 || power_w <= 0)
            throw ConfigError("TimingSpec: all entries must be positive");
    }
};

struct CostPhase {
    std::string name;
    double runtime_ms = 0.0;
    double energy_mj = 0.0;
};

// Per-image inference cost under the 4-tiles-per-run packing; weight writes
// are batched one-time costs and only enter the batch totals.
struct CostReport {
    int tile_execs = 0;
    int runs = 0;
    int batch = 1;
    double runtime_ms = 0.0; // per image: runs * t_matmul
    double energy_mj = 0.0;  // power * runtime, exactly
    double batch_runtime_ms = 0.0;
    double batch_energy_mj = 0.0;
    std::vector<CostPhase> breakdown;
};

CostReport estimate_cost(int tile_execs, const TimingSpec& spec, int batch = 1);
CostReport estimate_cost(const CompiledModel& model, const TimingSpec& spec, int batch = 1);

} // namespace aimc
