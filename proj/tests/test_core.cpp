#include <doctest.h>

#include <cmath>

#include "aimc/core.hpp"
#include "aimc/mac.hpp"
#include "aimc/errors.hpp"

using namespace aimc;

namespace {

VariationSpec zero_spread() {
    VariationSpec v;
    v.gain_sigma_ln = 0.0;
    v.leak_sigma_ln = 0.0;
    v.capacitance_sigma_ln = 0.0;
    v.rest_offset_sigma_lsb = 0.0;
    v.pulse_offset_sigma_ns = 0.0;
    return v;
}

} // namespace

TEST_CASE("fixed pattern generation is deterministic in the seed") {
    const auto a = generate_fixed_pattern(42, {});
    const auto b = generate_fixed_pattern(42, {});
    CHECK(a == b);

    const auto c = generate_fixed_pattern(43, {});
    CHECK(a != c);
}

TEST_CASE("zero spread gives exactly nominal parameters") {
    const auto fp = generate_fixed_pattern(7, zero_spread());
    for (int n = 0; n < fp.neurons(); ++n) {
        CHECK(fp.gain_pos[n] == 1.0);
        CHECK(fp.gain_neg[n] == 1.0);
        CHECK(fp.leak_us[n] == 100.0);
        CHECK(fp.rest_offset_lsb[n] == 0.0);
        CHECK(fp.capacitance[n] == 1.0);
    }
    for (int d = 0; d < fp.drivers(); ++d) CHECK(fp.pulse_offset_ns[d] == 0.0);
}

TEST_CASE("negative spread is a configuration error") {
    VariationSpec v;
    v.gain_sigma_ln = -0.1;
    CHECK_THROWS_AS(generate_fixed_pattern(1, v), ConfigError);
}

TEST_CASE("uncalibrated gain spread spans roughly a factor of four") {
    for (std::uint64_t seed : {42ULL, 1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        const auto fp = generate_fixed_pattern(seed, {});
        double lo = fp.gain_pos[0], hi = fp.gain_pos[0];
        for (double g : fp.gain_pos) {
            lo = std::min(lo, g);
            hi = std::max(hi, g);
        }
        const double ratio = hi / lo;
        CHECK(ratio >= 3.0);
        CHECK(ratio <= 5.0);
    }
}

TEST_CASE("synapse charge contract") {
    PhysicsSpec phys;

    SUBCASE("zero weight emits nothing") {
        CHECK(synapse_charge(0, 31, 0.0, 1.0, 1.0, phys) == 0.0);
    }
    SUBCASE("zero input with zero offset emits nothing") {
        CHECK(synapse_charge(63, 0, 0.0, 1.0, 1.0, phys) == 0.0);
    }
    SUBCASE("linearity in the input") {
        const double q2 = synapse_charge(10, 2, 0.0, 1.0, 1.0, phys);
        const double q4 = synapse_charge(10, 4, 0.0, 1.0, 1.0, phys);
        CHECK(q4 == doctest::Approx(2.0 * q2).epsilon(1e-12));
    }
    SUBCASE("row polarity flips the charge exactly") {
        const double q = synapse_charge(17, 9, 0.7, 1.3, 1.3, phys);
        const double qneg = synapse_charge(17, 9, 0.7, 1.3, 1.3, phys, -1);
        CHECK(q == -qneg);
    }
    SUBCASE("per-sign gains select on the effective sign") {
        const double qp = synapse_charge(10, 4, 0.0, 2.0, 3.0, phys);
        const double qn = synapse_charge(-10, 4, 0.0, 2.0, 3.0, phys);
        CHECK(qp == doctest::Approx(2.0 * 10 * 4));
        CHECK(qn == doctest::Approx(-3.0 * 10 * 4));
    }
    SUBCASE("driver offset lengthens the pulse") {
        // 2 ns offset at pulse_unit 2 ns acts like one extra input LSB
        const double q = synapse_charge(10, 4, 2.0, 1.0, 1.0, phys);
        CHECK(q == doctest::Approx(10.0 * 5));
    }
    SUBCASE("negative pulse lengths clamp to zero") {
        CHECK(synapse_charge(10, 1, -50.0, 1.0, 1.0, phys) == 0.0);
    }
    SUBCASE("out-of-range arguments are contract violations") {
        CHECK_THROWS_AS(synapse_charge(64, 0, 0.0, 1.0, 1.0, phys), ContractViolation);
        CHECK_THROWS_AS(synapse_charge(-64, 0, 0.0, 1.0, 1.0, phys), ContractViolation);
        CHECK_THROWS_AS(synapse_charge(1, 32, 0.0, 1.0, 1.0, phys), ContractViolation);
        CHECK_THROWS_AS(synapse_charge(1, -1, 0.0, 1.0, 1.0, phys), ContractViolation);
    }
    SUBCASE("ideal mode ignores offsets and gains") {
        phys.ideal_mode = true;
        CHECK(synapse_charge(10, 4, 5.0, 2.0, 3.0, phys) == doctest::Approx(40.0));
    }
}

TEST_CASE("membrane kernel matches the closed-form double exponential") {
    // independent evaluation of the analytic solution
    const double tau_s = 1.0, tau_m = 100.0;
    for (double delta : {0.5, 2.0, 10.0, 50.0, 250.0}) {
        const double reference =
            (std::exp(-delta / tau_m) - std::exp(-delta / tau_s)) / (1.0 - tau_s / tau_m);
        const double got = membrane_kernel(delta, tau_s, tau_m);
        CHECK(got == doctest::Approx(reference).epsilon(1e-9));
    }
}

TEST_CASE("single event decays by 1/e over one membrane time constant") {
    PhysicsSpec phys; // tau_syn 1 us, tau_mem 100 us
    const ChargeEvent ev{0.0, 1000.0};
    // "prompt" read well after the synaptic rise but well before decay
    const double t0 = 10.0;
    const double prompt =
        accumulate_membrane(std::span(&ev, 1), t0, phys.tau_mem_target_us, 1.0, phys);
    const double delayed = accumulate_membrane(std::span(&ev, 1), t0 + phys.tau_mem_target_us,
                                               phys.tau_mem_target_us, 1.0, phys);
    CHECK(delayed / prompt == doctest::Approx(std::exp(-1.0)).epsilon(0.01));
}

TEST_CASE("accumulate_membrane basics") {
    PhysicsSpec phys;

    SUBCASE("no events reads zero") {
        CHECK(accumulate_membrane({}, 5.0, 100.0, 1.0, phys) == 0.0);
    }
    SUBCASE("ideal mode sums charge exactly") {
        phys.ideal_mode = true;
        const ChargeEvent evs[] = {{0.0, 300.0}, {8.0, 500.0}, {16.0, -200.0}};
        const double amp = accumulate_membrane(std::span(evs, 3), 2.0, 100.0, 1.0, phys);
        CHECK(amp == 600.0 * phys.charge_to_lsb);
    }
    SUBCASE("event after read time is a contract violation") {
        const ChargeEvent ev{5000.0, 1.0}; // 5 us
        CHECK_THROWS_AS(accumulate_membrane(std::span(&ev, 1), 2.0, 100.0, 1.0, phys),
                        ContractViolation);
    }
    SUBCASE("saturation bends large amplitudes onto the knee") {
        const ChargeEvent ev{0.0, 200000.0}; // 400 LSB linear
        const double amp = accumulate_membrane(std::span(&ev, 1), 2.0, 1e9, 1.0, phys);
        const double lin = 200000.0 * phys.charge_to_lsb * membrane_kernel(2.0, 1.0, 1e9);
        CHECK(amp == doctest::Approx(phys.saturation_knee_lsb * std::tanh(lin / phys.saturation_knee_lsb)));
        CHECK(amp < phys.saturation_knee_lsb);
    }
}

TEST_CASE("zero-spread core responds identically on all neurons") {
    auto core = AnalogCore::make(11, zero_spread());
    PhysicsSpec phys = core.physics();
    phys.trial_noise_sigma_lsb = 0.0;
    core.set_physics(phys);

    TileWeights w;
    w.rows = 1;
    w.cols = core.geometry().cols();
    w.col_offset = 0;
    w.w.assign(w.cols, 30);

    MacOptions mo;
    mo.resends = 50;
    mo.skip_zeros = false;
    MacRunner runner(core, w, mo, 1);
    Rng rng(1);
    const auto out = runner.run({10}, rng);
    for (int c = 1; c < w.cols; ++c) CHECK(out.values[c] == out.values[0]);
    CHECK(out.values[0] > 0);
}

TEST_CASE("ideal-mode charge is exactly bilinear over the full grid") {
    PhysicsSpec phys;
    phys.ideal_mode = true;
    for (int w = -weight_limit; w <= weight_limit; ++w)
        for (int x = 0; x <= input_limit; ++x) {
            const double q = synapse_charge(w, x, 0.0, 1.0, 1.0, phys);
            REQUIRE(q == static_cast<double>(w) * x);
        }
}

TEST_CASE("single-event accumulation matches the closed form to 1e-9") {
    // knee pushed out of reach so the saturation map is the identity
    PhysicsSpec phys;
    phys.saturation_knee_lsb = 1e12;
    const double tau_mem = 137.0, cap = 1.3;
    const ChargeEvent ev{40.0, 777.0}; // 0.04 us
    for (double read_us : {0.5, 2.0, 25.0, 400.0}) {
        const double got = accumulate_membrane(std::span(&ev, 1), read_us, tau_mem, cap, phys);
        const double delta = read_us - 0.04;
        const double kernel = (std::exp(-delta / tau_mem) - std::exp(-delta / phys.tau_syn_us)) /
                              (1.0 - phys.tau_syn_us / tau_mem);
        const double want = 777.0 * kernel * phys.charge_to_lsb / cap;
        REQUIRE(got == doctest::Approx(want).epsilon(1e-9));
    }
}
