#include "aimc/calibration_state.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "aimc/errors.hpp"

namespace aimc {

namespace {
constexpr double gain_lo = 0.25;
constexpr double gain_hi = 4.0;
const double gain_log_span = std::log(gain_hi / gain_lo);
} // namespace

CalibrationState CalibrationState::identity(const CoreGeometry& geometry) {
    CalibrationState cal;
    const int n = geometry.cols();
    cal.gain_trim_pos.assign(n, 1.0);
    cal.gain_trim_neg.assign(n, 1.0);
    cal.leak_trim.assign(n, 1.0);
    cal.rest_trim_lsb.assign(n, 0.0);
    cal.pulse_trim_ns.assign(geometry.driver_channels(), 0.0);
    return cal;
}

double CalibrationState::gain_trim_value(int code) {
    code = std::clamp(code, gain_code_min, gain_code_max);
    return gain_lo * std::exp(gain_log_span * code / gain_code_max);
}

int CalibrationState::gain_trim_code(double value) {
    value = std::clamp(value, gain_lo, gain_hi);
    const double code = std::log(value / gain_lo) / gain_log_span * gain_code_max;
    return std::clamp(static_cast<int>(std::lround(code)), gain_code_min, gain_code_max);
}

double CalibrationState::gain_step_factor() {
    return std::exp(gain_log_span / gain_code_max);
}

double CalibrationState::quantize_pulse_trim(double ns) {
    return std::lround(ns / pulse_trim_step_ns) * pulse_trim_step_ns;
}

namespace {

void write_records(std::ostream& os, const char* key, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::ostringstream line;
        line.precision(17);
        line << key << ' ' << i << ' ' << values[i] << '\n';
        os << line.str();
    }
}

} // namespace

void CalibrationState::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IngestError("calibration store: cannot open " + path.string() + " for writing");
    os << "aimc-calibration 1\n";
    os << "neurons " << neurons() << '\n';
    os << "drivers " << pulse_trim_ns.size() << '\n';
    write_records(os, "gain_trim_pos", gain_trim_pos);
    write_records(os, "gain_trim_neg", gain_trim_neg);
    write_records(os, "leak_trim", leak_trim);
    write_records(os, "rest_trim_lsb", rest_trim_lsb);
    write_records(os, "pulse_trim_ns", pulse_trim_ns);
    if (!os) throw IngestError("calibration store: write failed: " + path.string());
}

CalibrationState CalibrationState::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IngestError("calibration store: cannot open " + path.string());

    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "aimc-calibration") throw IngestError("calibration store: bad magic in " + path.string());
    if (version != 1) throw IngestError("calibration store: unsupported version " + std::to_string(version));

    std::string key;
    int neurons = -1, drivers = -1;
    is >> key >> neurons;
    if (key != "neurons" || neurons <= 0) throw IngestError("calibration store: bad neuron count");
    is >> key >> drivers;
    if (key != "drivers" || drivers <= 0) throw IngestError("calibration store: bad driver count");

    CalibrationState cal;
    cal.gain_trim_pos.assign(neurons, 1.0);
    cal.gain_trim_neg.assign(neurons, 1.0);
    cal.leak_trim.assign(neurons, 1.0);
    cal.rest_trim_lsb.assign(neurons, 0.0);
    cal.pulse_trim_ns.assign(drivers, 0.0);

    std::size_t index = 0;
    double value = 0.0;
    while (is >> key >> index >> value) {
        std::vector<double>* field = nullptr;
        if (key == "gain_trim_pos") field = &cal.gain_trim_pos;
        else if (key == "gain_trim_neg") field = &cal.gain_trim_neg;
        else if (key == "leak_trim") field = &cal.leak_trim;
        else if (key == "rest_trim_lsb") field = &cal.rest_trim_lsb;
        else if (key == "pulse_trim_ns") field = &cal.pulse_trim_ns;
        else throw IngestError("calibration store: unknown key '" + key + "'");
        if (index >= field->size())
            throw IngestError("calibration store: index out of range for " + key);
        (*field)[index] = value;
    }
    if (!is.eof()) throw IngestError("calibration store: malformed record in " + path.string());
    return cal;
}

} // namespace aimc
