#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aimc/mac.hpp"

namespace aimc {

// Mid-range single-row stimulus used to equalize neuron responses: one
// logical row, fixed weight and input, repeated resends times per read.
struct StimulusSpec {
    int row = 0;
    int weight = 30;
    int input = 10;
    int resends = 100;
};

struct CalibrationOptions {
    double target_amplitude_lsb = 48.0; // below the saturation knee
    double tolerance_cv = 0.07;
    double driver_tolerance_ns = 0.3;
    int reads = 10;           // averaged reads per loop iteration, escalates 4x per iteration
    int max_iterations = 20;
    int max_reads = 12800;
    StimulusSpec stimulus;
    double wait_ns = 8.0;
    double settle_us = 2.0;
};

// Mean baseline-subtracted response of every neuron to the standard
// stimulus, averaged over `reads`. weight_sign selects the excitatory or
// inhibitory pathway; responses are reported with their sign.
std::vector<double> measure_stimulus_response(const AnalogCore& core, const StimulusSpec& stimulus,
                                              int weight_sign, int reads, Rng& rng,
                                              const CalibrationOptions& opts = {});

// coefficient of variation (std/|mean|) of a response vector
double response_cv(const std::vector<double>& responses);

// Two-point pulse-length estimator: effective driver offset per channel in
// ns, measured from the charge ratio between inputs 1 and 31 (gain-free).
std::vector<double> estimate_driver_offsets(const AnalogCore& core, int reads, Rng& rng,
                                            const CalibrationOptions& opts = {});

// Measurement-driven neuron equalization: resting levels, membrane time
// constants, then per-sign synaptic gain trims bisected/refined until the
// response CV meets tolerance_cv (or CalibrationFailure after
// max_iterations). Leaves the core calibrated and returns the trim state.
CalibrationState calibrate_neurons(AnalogCore& core, double target_amplitude_lsb,
                                   double tolerance_cv, Rng& rng,
                                   const CalibrationOptions& opts = {});

// Per-row pulse-length trims canceling driver offsets; residual
// |offset + trim| std must reach tolerance_ns (0.1 ns trim steps).
CalibrationState calibrate_drivers(AnalogCore& core, double tolerance_ns, Rng& rng,
                                   const CalibrationOptions& opts = {});

// Linear interpolation between a calibrated state (factor 0) and the
// all-neurons-at-median state (factor 1). Applies to leak and synaptic
// gain trims only.
CalibrationState blend_decalibration(const CalibrationState& calibrated, double factor);

struct CharacterizationSweep {
    std::vector<int> levels = {0, 3, 7, 15};
    int repeats = 30;
    int resends = 1;
    std::uint64_t weight_seed = 1; // seeds the random half of the matrix
};

// Synthetic test matrix: per block, a linear weight ramp over the left half
// of the columns and uniform random weights on the right half, driven by
// homogeneous vectors.
struct CharacterizationReport {
    std::vector<int> levels;
    int columns = 0;
    int ramp_cols_per_block = 0;
    std::vector<std::int8_t> weights;  // 128 x columns, row-major
    std::vector<long> weight_sum;      // per column
    std::vector<std::vector<double>> mean;   // [level][column]
    std::vector<std::vector<double>> stddev; // [level][column]

    bool is_ramp_col(int col, const CoreGeometry& geom = {}) const {
        return col % geom.cols_per_block < ramp_cols_per_block;
    }
    int ramp_weight(int col, const CoreGeometry& geom = {}) const;

    void save_csv(const std::filesystem::path& path) const;
};

CharacterizationReport characterize(const AnalogCore& core, const CharacterizationSweep& sweep,
                                    Rng& rng);

} // namespace aimc
