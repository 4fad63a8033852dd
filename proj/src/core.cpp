#include "aimc/core.hpp"

#include <cmath>
#include <string>

#include "aimc/errors.hpp"

namespace aimc {

double synapse_charge(int weight, int input, double row_offset_ns, double gain_pos,
                      double gain_neg, const PhysicsSpec& spec, int row_polarity) {
    if (weight < -weight_limit || weight > weight_limit)
        throw ContractViolation("synapse_charge: weight " + std::to_string(weight) + " outside 6-bit range");
    if (input < 0 || input > input_limit)
        throw ContractViolation("synapse_charge: input " + std::to_string(input) + " outside 5-bit range");
    if (row_polarity != 1 && row_polarity != -1)
        throw ContractViolation("synapse_charge: row polarity must be +-1");

    if (weight == 0) return 0.0;

    if (spec.ideal_mode) {
        row_offset_ns = 0.0;
        gain_pos = gain_neg = 1.0;
    }

    // pulse length in ns; a driver cannot emit a negative-length pulse
    const double pulse_ns = std::max(0.0, input * spec.pulse_unit_ns + row_offset_ns);
    const int sign = (weight > 0 ? 1 : -1) * row_polarity;
    const double gain = sign > 0 ? gain_pos : gain_neg;
    return sign * gain * std::abs(weight) * (pulse_ns / spec.pulse_unit_ns);
}

double membrane_kernel(double delta_us, double tau_syn_us, double tau_mem_us) {
    if (delta_us < 0.0) throw ContractViolation("membrane_kernel: negative delay");
    const double ratio = tau_syn_us / tau_mem_us;
    return (std::exp(-delta_us / tau_mem_us) - std::exp(-delta_us / tau_syn_us)) / (1.0 - ratio);
}

double accumulate_membrane(std::span<const ChargeEvent> events, double read_time_us,
                           double tau_mem_us, double capacitance, const PhysicsSpec& spec) {
    double sum = 0.0;
    for (const auto& ev : events) {
        const double t_us = ev.time_ns * 1e-3;
        if (t_us > read_time_us)
            throw ContractViolation("accumulate_membrane: event after read time");
        if (spec.ideal_mode) {
            sum += ev.charge;
        } else {
            sum += ev.charge * membrane_kernel(read_time_us - t_us, spec.tau_syn_us, tau_mem_us);
        }
    }
    const double cap = spec.ideal_mode ? 1.0 : capacitance;
    double amp = spec.charge_to_lsb * sum / cap;
    if (!spec.ideal_mode) {
        const double knee = spec.saturation_knee_lsb;
        amp = knee * std::tanh(amp / knee);
    }
    return amp;
}

AnalogCore::AnalogCore(CoreGeometry geometry, PhysicsSpec physics, FixedPatternState pattern,
                       CalibrationState calibration)
    : geom_(geometry), phys_(physics), fp_(std::move(pattern)), cal_(std::move(calibration)) {
    geom_.validate();
    phys_.validate();
    if (fp_.neurons() != geom_.cols() || fp_.drivers() != geom_.driver_channels())
        throw ConfigError("AnalogCore: fixed pattern does not match geometry");
    if (cal_.neurons() != geom_.cols() ||
        static_cast<int>(cal_.pulse_trim_ns.size()) != geom_.driver_channels())
        throw ConfigError("AnalogCore: calibration state does not match geometry");
}

AnalogCore AnalogCore::make(std::uint64_t seed, const VariationSpec& variation,
                            const PhysicsSpec& physics, const CoreGeometry& geometry) {
    return AnalogCore(geometry, physics, generate_fixed_pattern(seed, variation, geometry));
}

void AnalogCore::set_calibration(CalibrationState cal) {
    if (cal.neurons() != geom_.cols() ||
        static_cast<int>(cal.pulse_trim_ns.size()) != geom_.driver_channels())
        throw ConfigError("AnalogCore: calibration state does not match geometry");
    cal_ = std::move(cal);
}

void AnalogCore::set_physics(const PhysicsSpec& physics) {
    physics.validate();
    phys_ = physics;
}

} // namespace aimc
