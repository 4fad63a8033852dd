#include "aimc/fixed_pattern.hpp"

#include "aimc/rng.hpp"

namespace aimc {

FixedPatternState generate_fixed_pattern(std::uint64_t seed, const VariationSpec& spec,
                                         const CoreGeometry& geometry) {
    spec.validate();
    geometry.validate();

    Rng rng(seed);
    FixedPatternState fp;
    fp.rng_seed = seed;

    const int n = geometry.cols();
    fp.gain_pos.resize(n);
    fp.gain_neg.resize(n);
    fp.leak_us.resize(n);
    fp.rest_offset_lsb.resize(n);
    fp.capacitance.resize(n);

    // fixed draw order per neuron keeps states reproducible when spreads change
    for (int i = 0; i < n; ++i) {
        fp.gain_pos[i] = rng.lognormal(spec.gain_sigma_ln, spec.gain_truncation);
        fp.gain_neg[i] = rng.lognormal(spec.gain_sigma_ln, spec.gain_truncation);
        fp.leak_us[i] = spec.leak_mean_us * rng.lognormal(spec.leak_sigma_ln);
        fp.rest_offset_lsb[i] = rng.normal(0.0, spec.rest_offset_sigma_lsb);
        fp.capacitance[i] = rng.lognormal(spec.capacitance_sigma_ln);
    }

    fp.pulse_offset_ns.resize(geometry.driver_channels());
    for (auto& off : fp.pulse_offset_ns) off = rng.normal(0.0, spec.pulse_offset_sigma_ns);

    return fp;
}

} // namespace aimc
