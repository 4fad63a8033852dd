#pragma once

#include <cstdint>
#include <vector>

#include "aimc/geometry.hpp"
#include "aimc/physics.hpp"

namespace aimc {

// The "true" device-to-device mismatch of one fabricated chip instance.
// Regenerating with the same seed and spec yields identical state.
struct FixedPatternState {
    std::uint64_t rng_seed = 0;

    // per neuron (geometry.cols())
    std::vector<double> gain_pos;        // multiplicative, on positive charge
    std::vector<double> gain_neg;        // multiplicative, on negative charge
    std::vector<double> leak_us;         // membrane time constant
    std::vector<double> rest_offset_lsb; // resting level offset in ADC LSB
    std::vector<double> capacitance;     // dimensionless charge divisor

    // per driver channel (geometry.driver_channels()), block-major
    std::vector<double> pulse_offset_ns;

    int neurons() const { return static_cast<int>(gain_pos.size()); }
    int drivers() const { return static_cast<int>(pulse_offset_ns.size()); }

    bool operator==(const FixedPatternState&) const = default;
};

FixedPatternState generate_fixed_pattern(std::uint64_t seed, const VariationSpec& spec,
                                         const CoreGeometry& geometry = {});

} // namespace aimc
