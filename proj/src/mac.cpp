#include "aimc/mac.hpp"

#include <cmath>
#include <string>

#include "aimc/errors.hpp"

namespace aimc {

void MacOptions::validate() const {
    if (wait_ns < 8.0 || wait_ns > 200.0)
        throw ContractViolation("MacOptions: wait_ns must be within [8, 200]");
    if (resends < 1) throw ContractViolation("MacOptions: resends must be >= 1");
    if (settle_us <= 0.0) throw ContractViolation("MacOptions: settle_us must be > 0");
}

void TileWeights::validate(const CoreGeometry& geom, bool signed_rows) const {
    if (rows <= 0 || cols <= 0) throw ContractViolation("TileWeights: empty tile");
    if (row_base < 0 || row_base + rows > geom.max_rows(signed_rows))
        throw ContractViolation("TileWeights: rows [" + std::to_string(row_base) + ", " +
                                std::to_string(row_base + rows) + ") exceed capacity of " +
                                std::to_string(geom.max_rows(signed_rows)) +
                                (signed_rows ? " (signed)" : " (unsigned)"));
    if (col_offset < 0 || col_offset + cols > geom.cols())
        throw ContractViolation("TileWeights: column range outside geometry");
    if (static_cast<int>(w.size()) != rows * cols)
        throw ContractViolation("TileWeights: weight buffer size mismatch");
    for (auto v : w)
        if (v < -weight_limit || v > weight_limit)
            throw ContractViolation("TileWeights: weight outside 6-bit range");
}

int digitize(double amplitude_lsb, AdcMode mode) {
    const long v = std::lround(amplitude_lsb);
    if (mode == AdcMode::relu) return static_cast<int>(std::clamp(v, 0L, 255L));
    return static_cast<int>(std::clamp(v, -128L, 127L));
}

MacSchedule build_schedule(const std::vector<std::uint8_t>& vec, const MacOptions& opts,
                           const CoreGeometry& geom) {
    opts.validate();
    const int cap = geom.max_rows(opts.mode == AdcMode::signed_centered);
    if (static_cast<int>(vec.size()) > cap)
        throw PartitionRequired("build_schedule: vector of " + std::to_string(vec.size()) +
                                " entries exceeds " + std::to_string(cap) +
                                " rows; partition the matrix first");
    for (auto v : vec)
        if (v > input_limit) throw ContractViolation("build_schedule: input outside 5-bit range");

    MacSchedule sched;
    int k = 0;
    for (int pass = 0; pass < opts.resends; ++pass) {
        for (int r = 0; r < static_cast<int>(vec.size()); ++r) {
            if (opts.skip_zeros && vec[r] == 0) continue;
            sched.events.push_back({k * opts.wait_ns, r, vec[r]});
            ++k;
        }
    }
    const double last_ns = sched.events.empty() ? 0.0 : sched.events.back().time_ns;
    sched.read_time_us = last_ns * 1e-3 + opts.settle_us;
    return sched;
}

std::vector<std::int16_t> reset_and_baseline(const AnalogCore& core, int col_begin, int col_count,
                                             AdcMode mode, Rng& rng) {
    if (col_begin < 0 || col_count <= 0 || col_begin + col_count > core.geometry().cols())
        throw ContractViolation("reset_and_baseline: column range outside geometry");
    const double sigma = core.physics().noise_sigma();
    std::vector<std::int16_t> base(col_count);
    for (int c = 0; c < col_count; ++c) {
        double level = core.rest_lsb(col_begin + c);
        if (sigma > 0.0) level += rng.normal(0.0, sigma);
        base[c] = static_cast<std::int16_t>(digitize(level, mode));
    }
    return base;
}

namespace {

std::int16_t clamp_to_mode(long v, AdcMode mode) {
    if (mode == AdcMode::relu) return static_cast<std::int16_t>(std::clamp(v, 0L, 255L));
    return static_cast<std::int16_t>(std::clamp(v, -128L, 127L));
}

// Digitize the settled amplitudes against a fresh baseline. `amps` holds the
// linear (pre-saturation) membrane amplitude per tile column.
ActivationVector read_out(const AnalogCore& core, const TileWeights& w, AdcMode mode,
                          std::vector<double>& amps, const std::vector<std::int16_t>& baseline,
                          Rng& rng) {
    const PhysicsSpec& phys = core.physics();
    const double sigma = phys.noise_sigma();

    ActivationVector out;
    out.mode = mode;
    out.baseline = baseline;
    out.values.resize(w.cols);
    for (int c = 0; c < w.cols; ++c) {
        double amp = amps[c];
        if (!phys.ideal_mode) {
            const double knee = phys.saturation_knee_lsb;
            amp = knee * std::tanh(amp / knee);
        }
        double level = core.rest_lsb(w.col_offset + c) + amp;
        if (sigma > 0.0) level += rng.normal(0.0, sigma);
        const int raw = digitize(level, mode);
        out.values[c] = clamp_to_mode(static_cast<long>(raw) - baseline[c], mode);
    }
    return out;
}

} // namespace

ActivationVector execute_mac(const AnalogCore& core, const TileWeights& weights,
                             const MacSchedule& schedule, const MacOptions& opts, Rng& rng) {
    opts.validate();
    const bool signed_rows = opts.mode == AdcMode::signed_centered;
    weights.validate(core.geometry(), signed_rows);

    const PhysicsSpec& phys = core.physics();
    const CoreGeometry& geom = core.geometry();

    for (const auto& ev : schedule.events) {
        if (ev.row < 0 || ev.row >= weights.rows)
            throw ContractViolation("execute_mac: schedule references row outside tile");
        if (ev.time_ns * 1e-3 > schedule.read_time_us)
            throw ContractViolation("execute_mac: event after read time");
    }

    auto baseline = reset_and_baseline(core, weights.col_offset, weights.cols, opts.mode, rng);

    // accumulate linear membrane amplitude per column
    std::vector<double> amps(weights.cols, 0.0);
    for (const auto& ev : schedule.events) {
        const double delta_us = schedule.read_time_us - ev.time_ns * 1e-3;
        for (int c = 0; c < weights.cols; ++c) {
            const int col = weights.col_offset + c;
            const int wv = weights.at(ev.row, c);
            if (wv == 0) {
                // zero weight stores no charge; driver offsets do not apply
                continue;
            }
            const int block = geom.block_of_col(col);
            // signed mode pairs physical rows 2r/2r+1 (positive/negative);
            // unpaired mode uses row r directly with per-synapse sign
            const int phys_row = signed_rows ? 2 * (weights.row_base + ev.row) + (wv >= 0 ? 0 : 1)
                                             : weights.row_base + ev.row;
            const double offset = core.pulse_offset_ns(block, phys_row);
            const double q =
                synapse_charge(wv, ev.input, offset, core.gain_pos(col), core.gain_neg(col), phys);
            if (q == 0.0) continue;
            const double kappa = phys.ideal_mode
                                     ? 1.0
                                     : membrane_kernel(delta_us, phys.tau_syn_us, core.tau_mem_us(col));
            amps[c] += q * kappa;
        }
    }
    for (auto& a : amps) a *= phys.charge_to_lsb;
    if (!phys.ideal_mode)
        for (int c = 0; c < weights.cols; ++c) amps[c] /= core.capacitance(weights.col_offset + c);

    return read_out(core, weights, opts.mode, amps, baseline, rng);
}

MacRunner::MacRunner(const AnalogCore& core, TileWeights weights, const MacOptions& opts,
                     int vector_len)
    : core_(&core), weights_(std::move(weights)), opts_(opts), len_(vector_len) {
    opts_.validate();
    opts_.skip_zeros = false; // fixed schedule shape is the whole point
    weights_.validate(core.geometry(), opts_.mode == AdcMode::signed_centered);
    if (len_ <= 0 || len_ != weights_.rows)
        throw ContractViolation("MacRunner: vector length must match tile rows");

    const int n_events = len_ * opts_.resends;
    const double last_ns = (n_events - 1) * opts_.wait_ns;
    read_time_us_ = last_ns * 1e-3 + opts_.settle_us;

    const PhysicsSpec& phys = core.physics();
    kernel_sum_.assign(static_cast<std::size_t>(len_) * weights_.cols, 0.0);
    for (int r = 0; r < len_; ++r) {
        for (int c = 0; c < weights_.cols; ++c) {
            double sum = 0.0;
            for (int pass = 0; pass < opts_.resends; ++pass) {
                const double t_ns = (pass * len_ + r) * opts_.wait_ns;
                const double delta_us = read_time_us_ - t_ns * 1e-3;
                sum += phys.ideal_mode ? 1.0
                                       : membrane_kernel(delta_us, phys.tau_syn_us,
                                                         core.tau_mem_us(weights_.col_offset + c));
            }
            kernel_sum_[static_cast<std::size_t>(r) * weights_.cols + c] = sum;
        }
    }
}

MacRunner MacRunner::with_weights(TileWeights weights) const {
    if (weights.rows != weights_.rows || weights.cols != weights_.cols ||
        weights.col_offset != weights_.col_offset)
        throw ContractViolation("MacRunner::with_weights: shape mismatch");
    MacRunner copy = *this;
    weights.validate(core_->geometry(), opts_.mode == AdcMode::signed_centered);
    copy.weights_ = std::move(weights);
    return copy;
}

ActivationVector MacRunner::run(const std::vector<std::uint8_t>& vec, Rng& rng) const {
    if (static_cast<int>(vec.size()) != len_)
        throw ContractViolation("MacRunner: vector length mismatch");
    for (auto v : vec)
        if (v > input_limit) throw ContractViolation("MacRunner: input outside 5-bit range");

    const PhysicsSpec& phys = core_->physics();
    const CoreGeometry& geom = core_->geometry();
    const bool signed_rows = opts_.mode == AdcMode::signed_centered;

    auto baseline = reset_and_baseline(*core_, weights_.col_offset, weights_.cols, opts_.mode, rng);

    std::vector<double> amps(weights_.cols, 0.0);
    for (int r = 0; r < len_; ++r) {
        for (int c = 0; c < weights_.cols; ++c) {
            const int wv = weights_.at(r, c);
            if (wv == 0) continue;
            const int col = weights_.col_offset + c;
            const int block = geom.block_of_col(col);
            const int phys_row = signed_rows ? 2 * (weights_.row_base + r) + (wv >= 0 ? 0 : 1)
                                             : weights_.row_base + r;
            const double offset = core_->pulse_offset_ns(block, phys_row);
            const double q = synapse_charge(wv, vec[r], offset, core_->gain_pos(col),
                                            core_->gain_neg(col), phys);
            if (q == 0.0) continue;
            amps[c] += q * kernel_sum_[static_cast<std::size_t>(r) * weights_.cols + c];
        }
    }
    for (auto& a : amps) a *= phys.charge_to_lsb;
    if (!phys.ideal_mode)
        for (int c = 0; c < weights_.cols; ++c) amps[c] /= core_->capacitance(weights_.col_offset + c);

    return read_out(*core_, weights_, opts_.mode, amps, baseline, rng);
}

} // namespace aimc
