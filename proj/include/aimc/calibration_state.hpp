#pragma once

#include <filesystem>
#include <vector>

#include "aimc/geometry.hpp"

namespace aimc {

// Digital trim settings compensating fixed-pattern spread. The identity
// state (all trims neutral) reproduces raw FixedPatternState behavior
// exactly; calibration routines write quantized trim values.
//
// Gain trims are 10-bit codes mapping geometrically onto [0.25, 4.0];
// pulse-length trims are quantized to 0.1 ns steps.
struct CalibrationState {
    std::vector<double> gain_trim_pos;     // per neuron, multiplicative
    std::vector<double> gain_trim_neg;     // per neuron, multiplicative
    std::vector<double> leak_trim;         // per neuron, multiplicative on tau_mem
    std::vector<double> rest_trim_lsb;     // per neuron, additive
    std::vector<double> pulse_trim_ns;     // per driver channel, additive

    static CalibrationState identity(const CoreGeometry& geometry = {});

    int neurons() const { return static_cast<int>(gain_trim_pos.size()); }

    bool operator==(const CalibrationState&) const = default;

    // gain trim code <-> value mapping
    static constexpr int gain_code_min = 0;
    static constexpr int gain_code_max = 1023;
    static double gain_trim_value(int code);
    static int gain_trim_code(double value); // nearest code
    static double gain_step_factor();        // multiplicative step between adjacent codes

    static constexpr double pulse_trim_step_ns = 0.1;
    static double quantize_pulse_trim(double ns);

    // versioned flat key-value store, one record per neuron/row
    void save(const std::filesystem::path& path) const;
    static CalibrationState load(const std::filesystem::path& path);
};

} // namespace aimc
