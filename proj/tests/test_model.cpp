#include <doctest.h>

#include <cmath>

#include "aimc/errors.hpp"
#include "aimc/model.hpp"
#include "aimc/train.hpp"

using namespace aimc;

namespace {

MatF random_images(Rng& rng, int n, int dim) {
    MatF m(n, dim);
    for (auto& x : m.v) x = static_cast<float>(rng.uniform(0.0, 1.0));
    return m;
}

AnalogCore ideal_core(std::uint64_t seed = 1) {
    PhysicsSpec phys;
    phys.ideal_mode = true;
    return AnalogCore::make(seed, {}, phys);
}

} // namespace

TEST_CASE("compiled benchmark models match the published tiling") {
    Rng rng(1);

    SUBCASE("dense model: 7 + 1 tiles, 2 packed runs") {
        const auto spec = ModelSpec::mnist_dense();
        const auto weights = init_weights(spec, 1);
        const auto model = compile_model(spec, weights, random_images(rng, 8, 784));
        CHECK(model.tile_execs == 8);
        CHECK(model.runs == 2);
        CHECK(model.layers[0].plan.row_tiles == 7);
        CHECK(model.layers[0].mode == AdcMode::signed_centered); // recombined, must keep sign
        CHECK(model.layers[1].mode == AdcMode::signed_centered); // logits
    }
    SUBCASE("conv model: 25 patch executions + 4 + 1 tiles, 8 packed runs") {
        const auto spec = ModelSpec::mnist_conv();
        const auto weights = init_weights(spec, 1);
        const auto model = compile_model(spec, weights, random_images(rng, 8, 784));
        CHECK(model.tile_execs == 30);
        CHECK(model.runs == 8);
        CHECK(model.layers[0].mode == AdcMode::relu); // single tile + hardware rectifier
        CHECK(model.layers[0].patch_execs == 25);
        CHECK(model.layers[1].plan.row_tiles == 4);
        CHECK(model.layers[1].mode == AdcMode::signed_centered);
    }
}

TEST_CASE("ideal-mode simulator forward equals the software-quantized forward") {
    Rng rng(11);
    const auto core = ideal_core();

    for (const auto& spec : {ModelSpec::mnist_dense(), ModelSpec::mnist_conv()}) {
        const auto weights = init_weights(spec, 3);
        auto model = compile_model(spec, weights, random_images(rng, 16, 784));

        MacOptions mac;
        mac.resends = 1;
        SimExecutor sim(core, model, mac);
        init_hw_gains(model, core.physics(), mac.resends);

        const MatF images = random_images(rng, 12, 784);
        const auto sim_trace =
            forward_batch(model, weights, images, Backend::simulator, &sim, 5, 0);
        const auto swq_trace =
            forward_batch(model, weights, images, Backend::software_quantized, &sim, 5, 0);

        REQUIRE(sim_trace.logits.size() == swq_trace.logits.size());
        for (std::size_t i = 0; i < sim_trace.logits.v.size(); ++i)
            REQUIRE(sim_trace.logits.v[i] == swq_trace.logits.v[i]);
        for (std::size_t l = 0; l < model.layers.size(); ++l)
            REQUIRE(sim_trace.outputs[l].v == swq_trace.outputs[l].v);
    }
}

TEST_CASE("split 784-row layer recombines to the unpartitioned dot product") {
    // weights and inputs chosen so every per-tile amplitude lands exactly on
    // an ADC code: no rounding loss, the recombination is exact
    const auto core = ideal_core();
    const auto spec = ModelSpec::mnist_dense();
    auto weights = init_weights(spec, 1);

    Rng rng(13);
    auto model = compile_model(spec, weights, random_images(rng, 4, 784));
    for (auto& w : model.layers[0].qweights.w) w = 25;

    std::vector<std::uint8_t> x_q(784, 20); // tile dot = 112*25*20 = 56000 -> 112 LSB
    const auto lsb = quantized_layer_reference(model.layers[0], x_q, 0.002, 1);
    for (int c = 0; c < 64; ++c) {
        const long long full_dot = 784LL * 25 * 20;
        CHECK(lsb[c] == std::llround(0.002 * static_cast<double>(full_dot)));
    }

    // in general the per-tile ADC rounding bounds the recombination error
    Rng wrng(17);
    for (auto& w : model.layers[0].qweights.w)
        w = static_cast<std::int8_t>(wrng.uniform_int(-63, 63));
    for (auto& v : x_q) v = static_cast<std::uint8_t>(wrng.uniform_int(0, 31));
    const auto lsb2 = quantized_layer_reference(model.layers[0], x_q, 0.002, 1);
    for (int c = 0; c < 64; ++c) {
        long long dot = 0;
        for (int r = 0; r < 784; ++r)
            dot += static_cast<long long>(model.layers[0].qweights.at(r, c)) * x_q[r];
        const double exact = 0.002 * static_cast<double>(dot);
        CHECK(std::abs(lsb2[c] - exact) <= 7 * 0.5 + 1e-9); // 7 tiles, half LSB each
    }
}

TEST_CASE("simulator layer execution validates input size") {
    const auto core = ideal_core();
    const auto spec = ModelSpec::mnist_dense();
    const auto weights = init_weights(spec, 1);
    Rng rng(2);
    auto model = compile_model(spec, weights, random_images(rng, 4, 784));
    MacOptions mac;
    SimExecutor sim(core, model, mac);
    Rng nrng(3);
    CHECK_THROWS_AS(sim.run_layer(0, std::vector<std::uint8_t>(100, 1), nrng), ContractViolation);
}

TEST_CASE("hardware gain fit recovers the exact factor on an ideal core") {
    Rng rng(19);
    const auto core = ideal_core();
    const auto spec = ModelSpec::mnist_dense();
    const auto weights = init_weights(spec, 7);
    auto model = compile_model(spec, weights, random_images(rng, 16, 784));

    MacOptions mac;
    mac.resends = 2;
    SimExecutor sim(core, model, mac);
    init_hw_gains(model, core.physics(), mac.resends);
    const double exact = core.physics().charge_to_lsb * mac.resends;

    fit_hw_gains(model, sim, random_images(rng, 32, 784), weights, 5);
    for (double g : model.hw_gain) CHECK(g == doctest::Approx(exact).epsilon(0.08));
}

TEST_CASE("requantize refreshes integer weights from the masters") {
    Rng rng(23);
    const auto spec = ModelSpec::mnist_dense();
    auto weights = init_weights(spec, 1);
    auto model = compile_model(spec, weights, random_images(rng, 4, 784));
    const auto before = model.layers[0].qweights.w;
    for (auto& x : weights[0].v) x *= 2.0f; // same quantized pattern, doubled scale
    requantize(model, weights);
    CHECK(model.layers[0].qweights.w == before);
    weights[0].v[0] += 10.0f;
    requantize(model, weights);
    CHECK(model.layers[0].qweights.w != before);
}
