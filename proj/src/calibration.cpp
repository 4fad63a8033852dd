#include "aimc/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "aimc/errors.hpp"

namespace aimc {

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
    return 0.5 * (v[n / 2 - 1] + hi);
}

TileWeights constant_row_weights(const AnalogCore& core, int row, int weight) {
    TileWeights w;
    w.rows = 1;
    w.cols = core.geometry().cols();
    w.col_offset = 0;
    w.row_base = row;
    w.w.assign(static_cast<std::size_t>(w.cols), static_cast<std::int8_t>(weight));
    return w;
}

MacOptions stimulus_mac_options(const CalibrationOptions& opts, int resends, double settle_us) {
    MacOptions mo;
    mo.wait_ns = opts.wait_ns;
    mo.resends = resends;
    mo.skip_zeros = false;
    mo.mode = AdcMode::signed_centered;
    mo.settle_us = settle_us;
    return mo;
}

// mean response per column over `reads` runner executions
std::vector<double> run_mean(const MacRunner& runner, const std::vector<std::uint8_t>& vec,
                             int reads, Rng& rng) {
    std::vector<double> acc;
    for (int i = 0; i < reads; ++i) {
        const ActivationVector out = runner.run(vec, rng);
        if (acc.empty()) acc.assign(out.values.size(), 0.0);
        for (std::size_t c = 0; c < out.values.size(); ++c) acc[c] += out.values[c];
    }
    for (auto& a : acc) a /= reads;
    return acc;
}

} // namespace

std::vector<double> measure_stimulus_response(const AnalogCore& core, const StimulusSpec& stimulus,
                                              int weight_sign, int reads, Rng& rng,
                                              const CalibrationOptions& opts) {
    if (weight_sign != 1 && weight_sign != -1)
        throw ContractViolation("measure_stimulus_response: weight_sign must be +-1");
    const TileWeights w = constant_row_weights(core, stimulus.row, weight_sign * stimulus.weight);
    const MacOptions mo = stimulus_mac_options(opts, stimulus.resends, opts.settle_us);
    const MacRunner runner(core, w, mo, 1);
    return run_mean(runner, {static_cast<std::uint8_t>(stimulus.input)}, reads, rng);
}

double response_cv(const std::vector<double>& responses) {
    const double m = mean_of(responses);
    if (m == 0.0) return sample_std(responses) == 0.0 ? 0.0 : INFINITY;
    return sample_std(responses) / std::abs(m);
}

namespace {

// mean membrane kernel over an evenly spaced event train, evaluated at the
// nominal membrane time constant: used to undo the decay difference between
// the two probe schedules
double mean_schedule_kernel(const PhysicsSpec& phys, double wait_ns, int events, double settle_us) {
    const double last_ns = (events - 1) * wait_ns;
    const double read_us = last_ns * 1e-3 + settle_us;
    double sum = 0.0;
    for (int k = 0; k < events; ++k)
        sum += membrane_kernel(read_us - k * wait_ns * 1e-3, phys.tau_syn_us,
                               phys.tau_mem_target_us);
    return sum / events;
}

// invert the soft saturation on an averaged reading
double desaturate(double amplitude, double knee) {
    const double x = std::clamp(amplitude / knee, -0.999999, 0.999999);
    return knee * std::atanh(x);
}

} // namespace

std::vector<double> estimate_driver_offsets(const AnalogCore& core, int reads, Rng& rng,
                                            const CalibrationOptions& opts) {
    const CoreGeometry& geom = core.geometry();
    const PhysicsSpec& phys = core.physics();
    const double pu = phys.pulse_unit_ns;
    std::vector<double> offsets(geom.driver_channels(), 0.0);

    // Probe points: input 1 with many resends, input 31 with few, so both
    // land near the same (sub-knee) amplitude. The residual decay-kernel
    // difference between the two schedules is divided out analytically.
    constexpr int resends_lo = 150, resends_hi = 5;
    const MacOptions mo_lo = stimulus_mac_options(opts, resends_lo, opts.settle_us);
    const MacOptions mo_hi = stimulus_mac_options(opts, resends_hi, opts.settle_us);
    const double kernel_ratio =
        mean_schedule_kernel(phys, opts.wait_ns, resends_lo, opts.settle_us) /
        mean_schedule_kernel(phys, opts.wait_ns, resends_hi, opts.settle_us);

    for (int parity = 0; parity < 2; ++parity) {
        const int weight = parity == 0 ? weight_limit : -weight_limit;
        // kernel tables depend only on schedule shape; reuse across rows
        MacRunner proto_lo(core, constant_row_weights(core, 0, weight), mo_lo, 1);
        MacRunner proto_hi(core, constant_row_weights(core, 0, weight), mo_hi, 1);
        for (int pair = 0; pair < geom.rows_per_block / 2; ++pair) {
            const MacRunner run_lo = proto_lo.with_weights(constant_row_weights(core, pair, weight));
            const MacRunner run_hi = proto_hi.with_weights(constant_row_weights(core, pair, weight));
            const auto m_lo = run_mean(run_lo, {1}, reads, rng);
            const auto m_hi = run_mean(run_hi, {31}, reads, rng);
            for (int b = 0; b < geom.blocks; ++b) {
                double a_lo = 0.0, a_hi = 0.0;
                for (int j = 0; j < geom.cols_per_block; ++j) {
                    a_lo += m_lo[b * geom.cols_per_block + j];
                    a_hi += m_hi[b * geom.cols_per_block + j];
                }
                a_lo = desaturate(a_lo / geom.cols_per_block, phys.saturation_knee_lsb);
                a_hi = desaturate(a_hi / geom.cols_per_block, phys.saturation_knee_lsb);
                // per-pass charges; the common gain factor cancels in the ratio
                const double q_lo = std::abs(a_lo) / resends_lo;
                const double q_hi = std::abs(a_hi) / resends_hi;

                double delta_ns;
                if (std::abs(a_lo) < 2.0 || q_hi <= q_lo) {
                    // the input-1 pulse has (nearly) collapsed: the offset is
                    // at or below -1 input unit, only a bound is known
                    delta_ns = -2.0 * pu;
                } else {
                    const double rho = (q_hi / q_lo) * kernel_ratio;
                    const double d = (31.0 - rho) / (rho - 1.0);
                    delta_ns = std::clamp(d * pu, -4.0 * pu, 4.0 * pu);
                }
                offsets[b * geom.rows_per_block + 2 * pair + parity] = delta_ns;
            }
        }
    }
    return offsets;
}

CalibrationState calibrate_drivers(AnalogCore& core, double tolerance_ns, Rng& rng,
                                   const CalibrationOptions& opts) {
    const double floor_ns = CalibrationState::pulse_trim_step_ns / 2.0;
    if (tolerance_ns < floor_ns)
        throw CalibrationFailure("calibrate_drivers: tolerance " + std::to_string(tolerance_ns) +
                                     " ns below trim quantization floor of " +
                                     std::to_string(floor_ns) + " ns",
                                 {}, floor_ns);

    const int reads = std::max(2, opts.reads / 2);
    for (int iteration = 0; iteration < 4; ++iteration) {
        const auto est = estimate_driver_offsets(core, reads, rng, opts);
        CalibrationState cal = core.calibration();
        double worst = 0.0;
        for (std::size_t ch = 0; ch < est.size(); ++ch) {
            cal.pulse_trim_ns[ch] = CalibrationState::quantize_pulse_trim(cal.pulse_trim_ns[ch] - est[ch]);
            worst = std::max(worst, std::abs(est[ch]));
        }
        core.set_calibration(std::move(cal));
        if (worst <= std::max(tolerance_ns / 4.0, CalibrationState::pulse_trim_step_ns))
            break;
    }

    // verify through the estimator, not the hidden state
    const auto residual = estimate_driver_offsets(core, reads, rng, opts);
    if (sample_std(residual) > tolerance_ns) {
        std::vector<int> offenders;
        for (std::size_t ch = 0; ch < residual.size(); ++ch)
            if (std::abs(residual[ch]) > 3.0 * tolerance_ns) offenders.push_back(static_cast<int>(ch));
        throw CalibrationFailure("calibrate_drivers: residual std " + std::to_string(sample_std(residual)) +
                                     " ns exceeds tolerance " + std::to_string(tolerance_ns) + " ns",
                                 std::move(offenders), sample_std(residual));
    }
    return core.calibration();
}

namespace {

// Trim resting levels to zero (integer LSB steps) so the signed ADC range
// stays centered.
void trim_rest_levels(AnalogCore& core, Rng& rng) {
    constexpr int reads = 100;
    const int cols = core.geometry().cols();
    std::vector<double> mean(cols, 0.0);
    for (int i = 0; i < reads; ++i) {
        const auto base = reset_and_baseline(core, 0, cols, AdcMode::signed_centered, rng);
        for (int c = 0; c < cols; ++c) mean[c] += base[c];
    }
    CalibrationState cal = core.calibration();
    bool changed = false;
    for (int c = 0; c < cols; ++c) {
        mean[c] /= reads;
        if (std::abs(mean[c]) >= 0.5) {
            cal.rest_trim_lsb[c] = std::round(cal.rest_trim_lsb[c] - mean[c]);
            changed = true;
        }
    }
    if (changed) core.set_calibration(std::move(cal));
}

// Membrane time constant from the decay between two read delays; the
// synaptic rise has fully settled at both, so the per-pass charge ratio is
// a pure exponential in the extra delay. Readings are repeated at several
// resend counts: the distinct amplitudes dither the 1-LSB ADC rounding,
// which a single noise-free reading cannot average away.
void trim_leak(AnalogCore& core, const CalibrationOptions& opts, Rng& rng) {
    constexpr double delay_a_us = 10.0;
    constexpr double delay_b_us = 60.0;
    constexpr int variants = 24;
    constexpr int reads = 2;

    const double knee = core.physics().saturation_knee_lsb;
    const int cols = core.geometry().cols();
    const TileWeights w = constant_row_weights(core, opts.stimulus.row, opts.stimulus.weight);
    const std::vector<std::uint8_t> vec = {static_cast<std::uint8_t>(opts.stimulus.input)};

    std::vector<double> acc_a(cols, 0.0), acc_b(cols, 0.0);
    std::vector<int> used(cols, 0);
    double span_us = 0.0;
    for (int v = 0; v < variants; ++v) {
        const int resends = 72 + 3 * v;
        const MacRunner run_a(core, w, stimulus_mac_options(opts, resends, delay_a_us), 1);
        const MacRunner run_b(core, w, stimulus_mac_options(opts, resends, delay_b_us), 1);
        span_us = run_b.read_time_us() - run_a.read_time_us();
        const auto resp_a = run_mean(run_a, vec, reads, rng);
        const auto resp_b = run_mean(run_b, vec, reads, rng);
        for (int n = 0; n < cols; ++n) {
            // reject collapsed or near-clip readings
            if (resp_a[n] < 3.0 || resp_a[n] > 120.0 || resp_b[n] < 1.0) continue;
            acc_a[n] += desaturate(resp_a[n], knee) / resends;
            acc_b[n] += desaturate(resp_b[n], knee) / resends;
            ++used[n];
        }
    }

    const double target_us = core.physics().tau_mem_target_us;
    CalibrationState cal = core.calibration();
    bool changed = false;
    for (int n = 0; n < cols; ++n) {
        if (used[n] < 4 || acc_a[n] <= 0.0 || acc_b[n] <= 0.0 || acc_b[n] >= acc_a[n]) continue;
        const double tau_us = -span_us / std::log(acc_b[n] / acc_a[n]);
        if (tau_us <= 0.0) continue;
        if (std::abs(tau_us / target_us - 1.0) <= 0.02) continue; // dead band keeps identity exact
        cal.leak_trim[n] *= target_us / tau_us;
        changed = true;
    }
    if (changed) core.set_calibration(std::move(cal));
}

} // namespace

CalibrationState calibrate_neurons(AnalogCore& core, double target_amplitude_lsb,
                                   double tolerance_cv, Rng& rng, const CalibrationOptions& opts) {
    if (target_amplitude_lsb <= 0.0 ||
        target_amplitude_lsb >= core.physics().saturation_knee_lsb)
        throw ContractViolation("calibrate_neurons: target amplitude must lie in the linear regime "
                                "below the saturation knee");
    if (tolerance_cv < 0.0) throw ContractViolation("calibrate_neurons: negative tolerance");

    trim_rest_levels(core, rng);
    trim_leak(core, opts, rng);

    const double ln_step = std::log(CalibrationState::gain_step_factor());
    const std::vector<std::uint8_t> vec = {static_cast<std::uint8_t>(opts.stimulus.input)};

    double worst_cv = 0.0;
    std::vector<int> offenders;

    for (int sign = +1; sign >= -1; sign -= 2) {
        const TileWeights w =
            constant_row_weights(core, opts.stimulus.row, sign * opts.stimulus.weight);
        const MacRunner runner(core, w, stimulus_mac_options(opts, opts.stimulus.resends, opts.settle_us),
                               1);

        bool converged = false;
        std::vector<double> magnitudes;
        for (int iteration = 0; iteration < opts.max_iterations; ++iteration) {
            const int reads =
                std::min<long>(opts.max_reads, static_cast<long>(opts.reads) << (2 * iteration));
            const auto m = run_mean(runner, vec, static_cast<int>(reads), rng);
            magnitudes.resize(m.size());
            for (std::size_t n = 0; n < m.size(); ++n) magnitudes[n] = sign * m[n];

            if (response_cv(magnitudes) <= tolerance_cv) {
                converged = true;
                break;
            }

            CalibrationState cal = core.calibration();
            auto& trims = sign > 0 ? cal.gain_trim_pos : cal.gain_trim_neg;
            for (std::size_t n = 0; n < magnitudes.size(); ++n) {
                const double r = std::max(magnitudes[n], 0.5);
                int code = CalibrationState::gain_trim_code(trims[n]);
                code += static_cast<int>(std::lround(std::log(target_amplitude_lsb / r) / ln_step));
                trims[n] = CalibrationState::gain_trim_value(code);
            }
            core.set_calibration(std::move(cal));
        }

        if (!converged) {
            for (std::size_t n = 0; n < magnitudes.size(); ++n)
                if (std::abs(magnitudes[n] - target_amplitude_lsb) / target_amplitude_lsb >
                    tolerance_cv)
                    offenders.push_back(static_cast<int>(n));
            worst_cv = std::max(worst_cv, response_cv(magnitudes));
        }
    }

    if (!offenders.empty() || worst_cv > tolerance_cv) {
        std::sort(offenders.begin(), offenders.end());
        offenders.erase(std::unique(offenders.begin(), offenders.end()), offenders.end());
        throw CalibrationFailure("calibrate_neurons: response CV " + std::to_string(worst_cv) +
                                     " did not reach tolerance " + std::to_string(tolerance_cv) +
                                     " within " + std::to_string(opts.max_iterations) + " iterations (" +
                                     std::to_string(offenders.size()) + " neurons off target)",
                                 std::move(offenders), worst_cv);
    }
    return core.calibration();
}

CalibrationState blend_decalibration(const CalibrationState& calibrated, double factor) {
    if (!(factor >= 0.0 && factor <= 1.0))
        throw ContractViolation("blend_decalibration: factor must lie in [0, 1]");

    CalibrationState out = calibrated;
    const double med_pos = median_of(calibrated.gain_trim_pos);
    const double med_neg = median_of(calibrated.gain_trim_neg);
    const double med_leak = median_of(calibrated.leak_trim);
    for (int n = 0; n < calibrated.neurons(); ++n) {
        out.gain_trim_pos[n] = (1.0 - factor) * calibrated.gain_trim_pos[n] + factor * med_pos;
        out.gain_trim_neg[n] = (1.0 - factor) * calibrated.gain_trim_neg[n] + factor * med_neg;
        out.leak_trim[n] = (1.0 - factor) * calibrated.leak_trim[n] + factor * med_leak;
    }
    return out;
}

int CharacterizationReport::ramp_weight(int col, const CoreGeometry& geom) const {
    const int j = col % geom.cols_per_block;
    return std::min(j - 63, static_cast<int>(weight_limit));
}

void CharacterizationReport::save_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IngestError("characterization report: cannot open " + path.string());
    os << "column,kind,weight_sum,level,mean,std\n";
    for (int c = 0; c < columns; ++c) {
        const bool ramp = is_ramp_col(c);
        for (std::size_t li = 0; li < levels.size(); ++li) {
            os << c << ',' << (ramp ? "ramp" : "random") << ',' << weight_sum[c] << ','
               << levels[li] << ',' << mean[li][c] << ',' << stddev[li][c] << '\n';
        }
    }
}

CharacterizationReport characterize(const AnalogCore& core, const CharacterizationSweep& sweep,
                                    Rng& rng) {
    const CoreGeometry& geom = core.geometry();
    const int rows = geom.max_rows(true);
    const int cols = geom.cols();

    CharacterizationReport rep;
    rep.levels = sweep.levels;
    rep.columns = cols;
    rep.ramp_cols_per_block = geom.cols_per_block / 2;

    // synthetic matrix: per block a linear ramp on the left half, uniform
    // random weights on the right half
    TileWeights tile;
    tile.rows = rows;
    tile.cols = cols;
    tile.col_offset = 0;
    tile.w.assign(static_cast<std::size_t>(rows) * cols, 0);
    Rng wrng(sweep.weight_seed);
    for (int c = 0; c < cols; ++c) {
        const bool ramp = rep.is_ramp_col(c, geom);
        for (int r = 0; r < rows; ++r) {
            const int value = ramp ? rep.ramp_weight(c, geom)
                                   : static_cast<int>(wrng.uniform_int(-weight_limit, weight_limit));
            tile.w[static_cast<std::size_t>(r) * cols + c] = static_cast<std::int8_t>(value);
        }
    }
    rep.weights = tile.w;
    rep.weight_sum.assign(cols, 0);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) rep.weight_sum[c] += tile.at(r, c);

    MacOptions mo;
    mo.resends = sweep.resends;
    mo.skip_zeros = true;
    mo.mode = AdcMode::signed_centered;

    const MacRunner runner(core, tile, mo, rows);

    rep.mean.assign(sweep.levels.size(), std::vector<double>(cols, 0.0));
    rep.stddev.assign(sweep.levels.size(), std::vector<double>(cols, 0.0));

    for (std::size_t li = 0; li < sweep.levels.size(); ++li) {
        const int level = sweep.levels[li];
        if (level < 0 || level > input_limit)
            throw ContractViolation("characterize: level outside 5-bit range");
        std::vector<double> sum(cols, 0.0), sumsq(cols, 0.0);
        for (int rep_i = 0; rep_i < sweep.repeats; ++rep_i) {
            ActivationVector out;
            if (level == 0) {
                // zero vectors send no events at all with zero skipping
                const MacSchedule empty = build_schedule(std::vector<std::uint8_t>(rows, 0), mo, geom);
                out = execute_mac(core, tile, empty, mo, rng);
            } else {
                out = runner.run(std::vector<std::uint8_t>(rows, static_cast<std::uint8_t>(level)), rng);
            }
            for (int c = 0; c < cols; ++c) {
                sum[c] += out.values[c];
                sumsq[c] += static_cast<double>(out.values[c]) * out.values[c];
            }
        }
        for (int c = 0; c < cols; ++c) {
            const double m = sum[c] / sweep.repeats;
            rep.mean[li][c] = m;
            const double var =
                sweep.repeats > 1 ? (sumsq[c] - sweep.repeats * m * m) / (sweep.repeats - 1) : 0.0;
            rep.stddev[li][c] = std::sqrt(std::max(0.0, var));
        }
    }
    return rep;
}

} // namespace aimc
