#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aimc/calibration_state.hpp"
#include "aimc/fixed_pattern.hpp"
#include "aimc/geometry.hpp"
#include "aimc/physics.hpp"
#include "aimc/rng.hpp"

namespace aimc {

inline constexpr int weight_limit = 63; // 6 bit plus sign
inline constexpr int input_limit = 31;  // 5 bit

// Charge emitted by one synapse for one input event, in (weight * input)
// units. The pulse length is input * pulse_unit plus the driver's offset,
// clamped at zero; the synaptic current scales with |weight| and the
// per-sign neuron gain. Sign is weight sign times row polarity.
double synapse_charge(int weight, int input, double row_offset_ns, double gain_pos,
                      double gain_neg, const PhysicsSpec& spec, int row_polarity = +1);

struct ChargeEvent {
    double time_ns = 0.0;
    double charge = 0.0; // signed, (weight * input) units
};

// Double-exponential membrane kernel: charge delivered through an
// exponential synaptic current (tau_syn) onto a leaky membrane (tau_mem),
// evaluated a time delta after the event. Normalized so the tau_syn -> 0
// limit is a pure exponential decay with unit prompt amplitude.
double membrane_kernel(double delta_us, double tau_syn_us, double tau_mem_us);

// Membrane amplitude at read time in ADC LSB (real-valued, before trial
// noise and digitization). Applies the soft saturation clamp unless ideal.
double accumulate_membrane(std::span<const ChargeEvent> events, double read_time_us,
                           double tau_mem_us, double capacitance, const PhysicsSpec& spec);

// One simulated chip instance: geometry, physics, manufacturing spread and
// the current digital trim settings. Immutable during an execution;
// calibration routines replace the trim state.
class AnalogCore {
public:
    AnalogCore(CoreGeometry geometry, PhysicsSpec physics, FixedPatternState pattern)
        : AnalogCore(geometry, physics, std::move(pattern), CalibrationState::identity(geometry)) {}

    AnalogCore(CoreGeometry geometry, PhysicsSpec physics, FixedPatternState pattern,
               CalibrationState calibration);

    static AnalogCore make(std::uint64_t seed, const VariationSpec& variation = {},
                           const PhysicsSpec& physics = {}, const CoreGeometry& geometry = {});

    const CoreGeometry& geometry() const { return geom_; }
    const PhysicsSpec& physics() const { return phys_; }
    const FixedPatternState& fixed_pattern() const { return fp_; }
    const CalibrationState& calibration() const { return cal_; }

    void set_calibration(CalibrationState cal);
    void set_physics(const PhysicsSpec& physics);

    // effective (trimmed) parameters; in ideal mode these are the exact
    // digital-reference values
    double gain_pos(int neuron) const {
        return phys_.ideal_mode ? 1.0 : fp_.gain_pos[neuron] * cal_.gain_trim_pos[neuron];
    }
    double gain_neg(int neuron) const {
        return phys_.ideal_mode ? 1.0 : fp_.gain_neg[neuron] * cal_.gain_trim_neg[neuron];
    }
    double tau_mem_us(int neuron) const { return fp_.leak_us[neuron] * cal_.leak_trim[neuron]; }
    double capacitance(int neuron) const { return phys_.ideal_mode ? 1.0 : fp_.capacitance[neuron]; }
    double rest_lsb(int neuron) const {
        return phys_.ideal_mode ? 0.0 : fp_.rest_offset_lsb[neuron] + cal_.rest_trim_lsb[neuron];
    }
    double pulse_offset_ns(int block, int row) const {
        if (phys_.ideal_mode) return 0.0;
        const int ch = block * geom_.rows_per_block + row;
        return fp_.pulse_offset_ns[ch] + cal_.pulse_trim_ns[ch];
    }

private:
    CoreGeometry geom_;
    PhysicsSpec phys_;
    FixedPatternState fp_;
    CalibrationState cal_;
};

} // namespace aimc
