#pragma once

#include <cstdint>
#include <vector>

#include "aimc/core.hpp"

namespace aimc {

enum class AdcMode {
    relu,  // resting level at the lower ADC edge, negatives cut, 256 rows usable
    signed_centered, // resting level centered, +-128 range, 128 paired rows usable
};

struct MacOptions {
    double wait_ns = 8.0; // inter-event spacing, hardware supports 8-200 ns
    int resends = 1;
    bool skip_zeros = true;
    AdcMode mode = AdcMode::signed_centered;
    double settle_us = 2.0;

    void validate() const;
};

struct MacEvent {
    double time_ns = 0.0;
    int row = 0;           // logical row
    std::uint8_t input = 0; // 5 bit pulse-length payload
};

// Timed event sequence for one tile execution.
struct MacSchedule {
    std::vector<MacEvent> events; // strictly increasing times
    double read_time_us = 0.0;    // >= last event + settle
};

// Digitized, baseline-subtracted column activations of one execution.
struct ActivationVector {
    std::vector<std::int16_t> values;
    std::vector<std::int16_t> baseline;
    AdcMode mode = AdcMode::signed_centered;
};

// Integer weights of one tile as loaded into the array: rows x cols at a
// global column offset. Weight sign selects row polarity per synapse.
// Tiles load from physical row row_base upward; time-multiplexed tiles all
// use row_base 0, calibration probes individual driver rows with it.
struct TileWeights {
    int rows = 0;
    int cols = 0;
    int col_offset = 0;
    int row_base = 0;
    std::vector<std::int8_t> w; // row-major

    std::int8_t at(int r, int c) const { return w[static_cast<std::size_t>(r) * cols + c]; }
    void validate(const CoreGeometry& geom, bool signed_rows) const;
};

// 8-bit ADC: round to nearest LSB (half away from zero) and clamp to the
// mode's range. Clamping is the contract, not an error.
int digitize(double amplitude_lsb, AdcMode mode);

// Sequential input events spaced wait_ns apart, the full vector repeated
// `resends` times, zeros omitted iff skip_zeros. Read happens settle_us
// after the last event.
MacSchedule build_schedule(const std::vector<std::uint8_t>& vec, const MacOptions& opts,
                           const CoreGeometry& geom = {});

// Membrane reset followed by an immediate read: per-column resting levels
// used to reference later activations.
std::vector<std::int16_t> reset_and_baseline(const AnalogCore& core, int col_begin, int col_count,
                                             AdcMode mode, Rng& rng);

// One tile-level multiply-accumulate: baseline read, event train, settle,
// parallel digitization. Returns activations relative to baseline.
ActivationVector execute_mac(const AnalogCore& core, const TileWeights& weights,
                             const MacSchedule& schedule, const MacOptions& opts, Rng& rng);

// Reusable executor for a fixed schedule shape (no zero skipping): the
// per-(row, column) kernel weights are precomputed once, so repeated
// executions with different vectors avoid all exponentials. Produces the
// same pipeline as execute_mac up to floating-point summation order.
class MacRunner {
public:
    MacRunner(const AnalogCore& core, TileWeights weights, const MacOptions& opts, int vector_len);

    // vec.size() == vector_len; returns activations for the tile's columns
    ActivationVector run(const std::vector<std::uint8_t>& vec, Rng& rng) const;

    // same schedule shape and column range, different weights/row placement;
    // reuses the kernel table instead of recomputing it
    MacRunner with_weights(TileWeights weights) const;

    double read_time_us() const { return read_time_us_; }

private:
    const AnalogCore* core_;
    TileWeights weights_;
    MacOptions opts_;
    int len_;
    double read_time_us_;
    // kernel_sum_[r * cols + c]: sum over resend passes of the membrane
    // kernel for (row r, column c) at read time
    std::vector<double> kernel_sum_;
};

} // namespace aimc
