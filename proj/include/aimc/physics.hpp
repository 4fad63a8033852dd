#pragma once

#include "aimc/errors.hpp"

namespace aimc {

// Scale factors and non-ideality knobs of the analog signal chain.
// ideal_mode turns the core into an exact digital reference: unity gains,
// no leak decay, no offsets, no saturation, no trial noise.
struct PhysicsSpec {
    double tau_syn_us = 1.0;          // synaptic input time constant
    double tau_mem_target_us = 100.0; // membrane time constant the leak calibration aims for
    double pulse_unit_ns = 2.0;       // pulse length per input LSB
    double charge_to_lsb = 0.002;     // ADC LSB per (weight * input) charge unit
    double saturation_knee_lsb = 150.0;
    double trial_noise_sigma_lsb = 2.0;
    bool ideal_mode = false;

    double noise_sigma() const { return ideal_mode ? 0.0 : trial_noise_sigma_lsb; }

    void validate() const {
        if (tau_syn_us <= 0.0) throw ConfigError("PhysicsSpec: tau_syn_us must be > 0");
        if (tau_mem_target_us <= 0.0) throw ConfigError("PhysicsSpec: tau_mem_target_us must be > 0");
        if (pulse_unit_ns <= 0.0) throw ConfigError("PhysicsSpec: pulse_unit_ns must be > 0");
        if (charge_to_lsb <= 0.0) throw ConfigError("PhysicsSpec: charge_to_lsb must be > 0");
        if (saturation_knee_lsb <= 0.0) throw ConfigError("PhysicsSpec: saturation_knee_lsb must be > 0");
        if (trial_noise_sigma_lsb < 0.0) throw ConfigError("PhysicsSpec: trial_noise_sigma_lsb must be >= 0");
    }
};

// Manufacturing spread per parameter class. Zero spread is a valid degenerate
// configuration (all units identical); negative spread is a configuration error.
struct VariationSpec {
    double gain_sigma_ln = 0.25;       // log-normal width of synaptic gain, per sign
    double gain_truncation = 3.0;      // clamp gain draws at +-N sigma; keeps max/min near 4 over 512 units
    double leak_sigma_ln = 0.30;       // log-normal width of membrane time constant
    double leak_mean_us = 100.0;
    double capacitance_sigma_ln = 0.05;
    double rest_offset_sigma_lsb = 3.0;
    double pulse_offset_sigma_ns = 2.0;

    void validate() const {
        if (gain_sigma_ln < 0.0 || leak_sigma_ln < 0.0 || capacitance_sigma_ln < 0.0 ||
            rest_offset_sigma_lsb < 0.0 || pulse_offset_sigma_ns < 0.0)
            throw ConfigError("VariationSpec: spreads must be non-negative");
        if (leak_mean_us <= 0.0) throw ConfigError("VariationSpec: leak_mean_us must be > 0");
        if (gain_truncation < 0.0) throw ConfigError("VariationSpec: gain_truncation must be >= 0");
    }
};

} // namespace aimc
