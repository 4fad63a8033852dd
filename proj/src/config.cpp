#include "aimc/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace aimc {

namespace {

using nlohmann::json;

// strict field reader: every key in the section must be known
template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void check_known(const json& j, std::initializer_list<const char*> keys, const char* section) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool known = false;
        for (const char* k : keys)
            if (key == k) known = true;
        if (!known)
            throw ConfigError(std::string("config: unknown key '") + key + "' in section " + section);
    }
}

} // namespace

void Config::validate() const {
    variation.validate();
    physics.validate();
    mac.validate();
    timing.validate();
    if (calibration.tolerance_cv < 0 || calibration.driver_tolerance_ns < 0 ||
        calibration.reads < 1 || calibration.max_iterations < 1)
        throw ConfigError("config: calibration section out of range");
    if (training.batch_size < 1 || training.batches_per_epoch < 1 || training.warmup_images < 1 ||
        training.weight_limit < 1 || training.weight_limit > weight_limit)
        throw ConfigError("config: training section out of range");
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
    }

    Config cfg;
    check_known(j, {"variation", "physics", "mac", "calibration", "timing", "training"}, "(root)");

    if (j.contains("variation")) {
        const auto& s = j["variation"];
        check_known(s,
                    {"gain_sigma_ln", "gain_truncation", "leak_sigma_ln", "leak_mean_us",
                     "capacitance_sigma_ln", "rest_offset_sigma_lsb", "pulse_offset_sigma_ns"},
                    "variation");
        get(s, "gain_sigma_ln", cfg.variation.gain_sigma_ln);
        get(s, "gain_truncation", cfg.variation.gain_truncation);
        get(s, "leak_sigma_ln", cfg.variation.leak_sigma_ln);
        get(s, "leak_mean_us", cfg.variation.leak_mean_us);
        get(s, "capacitance_sigma_ln", cfg.variation.capacitance_sigma_ln);
        get(s, "rest_offset_sigma_lsb", cfg.variation.rest_offset_sigma_lsb);
        get(s, "pulse_offset_sigma_ns", cfg.variation.pulse_offset_sigma_ns);
    }
    if (j.contains("physics")) {
        const auto& s = j["physics"];
        check_known(s,
                    {"tau_syn_us", "tau_mem_target_us", "pulse_unit_ns", "charge_to_lsb",
                     "saturation_knee_lsb", "trial_noise_sigma_lsb", "ideal_mode"},
                    "physics");
        get(s, "tau_syn_us", cfg.physics.tau_syn_us);
        get(s, "tau_mem_target_us", cfg.physics.tau_mem_target_us);
        get(s, "pulse_unit_ns", cfg.physics.pulse_unit_ns);
        get(s, "charge_to_lsb", cfg.physics.charge_to_lsb);
        get(s, "saturation_knee_lsb", cfg.physics.saturation_knee_lsb);
        get(s, "trial_noise_sigma_lsb", cfg.physics.trial_noise_sigma_lsb);
        get(s, "ideal_mode", cfg.physics.ideal_mode);
    }
    if (j.contains("mac")) {
        const auto& s = j["mac"];
        check_known(s, {"wait_ns", "resends", "skip_zeros", "settle_us"}, "mac");
        get(s, "wait_ns", cfg.mac.wait_ns);
        get(s, "resends", cfg.mac.resends);
        get(s, "skip_zeros", cfg.mac.skip_zeros);
        get(s, "settle_us", cfg.mac.settle_us);
    }
    if (j.contains("calibration")) {
        const auto& s = j["calibration"];
        check_known(s,
                    {"target_amplitude_lsb", "tolerance_cv", "driver_tolerance_ns", "reads",
                     "max_iterations", "max_reads", "stimulus_row", "stimulus_weight",
                     "stimulus_input", "stimulus_resends"},
                    "calibration");
        get(s, "target_amplitude_lsb", cfg.calibration.target_amplitude_lsb);
        get(s, "tolerance_cv", cfg.calibration.tolerance_cv);
        get(s, "driver_tolerance_ns", cfg.calibration.driver_tolerance_ns);
        get(s, "reads", cfg.calibration.reads);
        get(s, "max_iterations", cfg.calibration.max_iterations);
        get(s, "max_reads", cfg.calibration.max_reads);
        get(s, "stimulus_row", cfg.calibration.stimulus.row);
        get(s, "stimulus_weight", cfg.calibration.stimulus.weight);
        get(s, "stimulus_input", cfg.calibration.stimulus.input);
        get(s, "stimulus_resends", cfg.calibration.stimulus.resends);
    }
    if (j.contains("timing")) {
        const auto& s = j["timing"];
        check_known(s,
                    {"t_weight_write_ms", "t_reset_us", "t_settle_us", "t_adc_us", "t_matmul_ms",
                     "power_w"},
                    "timing");
        get(s, "t_weight_write_ms", cfg.timing.t_weight_write_ms);
        get(s, "t_reset_us", cfg.timing.t_reset_us);
        get(s, "t_settle_us", cfg.timing.t_settle_us);
        get(s, "t_adc_us", cfg.timing.t_adc_us);
        get(s, "t_matmul_ms", cfg.timing.t_matmul_ms);
        get(s, "power_w", cfg.timing.power_w);
    }
    if (j.contains("training")) {
        const auto& s = j["training"];
        check_known(s,
                    {"lr", "beta1", "beta2", "eps", "batch_size", "batches_per_epoch",
                     "software_epochs", "itl_epochs", "warmup_images", "weight_limit"},
                    "training");
        get(s, "lr", cfg.training.adam.lr);
        get(s, "beta1", cfg.training.adam.beta1);
        get(s, "beta2", cfg.training.adam.beta2);
        get(s, "eps", cfg.training.adam.eps);
        get(s, "batch_size", cfg.training.batch_size);
        get(s, "batches_per_epoch", cfg.training.batches_per_epoch);
        get(s, "software_epochs", cfg.training.software_epochs);
        get(s, "itl_epochs", cfg.training.itl_epochs);
        get(s, "warmup_images", cfg.training.warmup_images);
        get(s, "weight_limit", cfg.training.weight_limit);
    }

    try {
        cfg.validate();
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

void save_config(const Config& cfg, const std::filesystem::path& path) {
    json j;
    j["variation"] = {{"gain_sigma_ln", cfg.variation.gain_sigma_ln},
                      {"gain_truncation", cfg.variation.gain_truncation},
                      {"leak_sigma_ln", cfg.variation.leak_sigma_ln},
                      {"leak_mean_us", cfg.variation.leak_mean_us},
                      {"capacitance_sigma_ln", cfg.variation.capacitance_sigma_ln},
                      {"rest_offset_sigma_lsb", cfg.variation.rest_offset_sigma_lsb},
                      {"pulse_offset_sigma_ns", cfg.variation.pulse_offset_sigma_ns}};
    j["physics"] = {{"tau_syn_us", cfg.physics.tau_syn_us},
                    {"tau_mem_target_us", cfg.physics.tau_mem_target_us},
                    {"pulse_unit_ns", cfg.physics.pulse_unit_ns},
                    {"charge_to_lsb", cfg.physics.charge_to_lsb},
                    {"saturation_knee_lsb", cfg.physics.saturation_knee_lsb},
                    {"trial_noise_sigma_lsb", cfg.physics.trial_noise_sigma_lsb},
                    {"ideal_mode", cfg.physics.ideal_mode}};
    j["mac"] = {{"wait_ns", cfg.mac.wait_ns},
                {"resends", cfg.mac.resends},
                {"skip_zeros", cfg.mac.skip_zeros},
                {"settle_us", cfg.mac.settle_us}};
    j["calibration"] = {{"target_amplitude_lsb", cfg.calibration.target_amplitude_lsb},
                        {"tolerance_cv", cfg.calibration.tolerance_cv},
                        {"driver_tolerance_ns", cfg.calibration.driver_tolerance_ns},
                        {"reads", cfg.calibration.reads},
                        {"max_iterations", cfg.calibration.max_iterations},
                        {"max_reads", cfg.calibration.max_reads},
                        {"stimulus_row", cfg.calibration.stimulus.row},
                        {"stimulus_weight", cfg.calibration.stimulus.weight},
                        {"stimulus_input", cfg.calibration.stimulus.input},
                        {"stimulus_resends", cfg.calibration.stimulus.resends}};
    j["timing"] = {{"t_weight_write_ms", cfg.timing.t_weight_write_ms},
                   {"t_reset_us", cfg.timing.t_reset_us},
                   {"t_settle_us", cfg.timing.t_settle_us},
                   {"t_adc_us", cfg.timing.t_adc_us},
                   {"t_matmul_ms", cfg.timing.t_matmul_ms},
                   {"power_w", cfg.timing.power_w}};
    j["training"] = {{"lr", cfg.training.adam.lr},
                     {"beta1", cfg.training.adam.beta1},
                     {"beta2", cfg.training.adam.beta2},
                     {"eps", cfg.training.adam.eps},
                     {"batch_size", cfg.training.batch_size},
                     {"batches_per_epoch", cfg.training.batches_per_epoch},
                     {"software_epochs", cfg.training.software_epochs},
                     {"itl_epochs", cfg.training.itl_epochs},
                     {"warmup_images", cfg.training.warmup_images},
                     {"weight_limit", cfg.training.weight_limit}};

    std::ofstream os(path);
    if (!os) throw ConfigError("config: cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
}

std::filesystem::path default_config_path() {
    if (const char* env = std::getenv("AIMCSIM_CONFIG")) return env;
    return {};
}

} // namespace aimc
