#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aimc/errors.hpp"
#include "aimc/train.hpp"

using namespace aimc;

namespace {

namespace fs = std::filesystem;

void write_be32(std::ofstream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxFiles {
    fs::path images, labels;
    ~IdxFiles() {
        std::error_code ec;
        fs::remove(images, ec);
        fs::remove(labels, ec);
    }
};

// synthetic IDX pair with optional corruptions
IdxFiles write_idx(int count, int rows, int cols, std::uint32_t img_magic = 0x803,
                   std::uint32_t lbl_magic = 0x801, int truncate_pixels = 0, int bad_label_at = -1,
                   int label_count = -1) {
    IdxFiles f;
    f.images = fs::temp_directory_path() / "aimc_test_images.idx";
    f.labels = fs::temp_directory_path() / "aimc_test_labels.idx";

    std::ofstream imgs(f.images, std::ios::binary);
    write_be32(imgs, img_magic);
    write_be32(imgs, static_cast<std::uint32_t>(count));
    write_be32(imgs, static_cast<std::uint32_t>(rows));
    write_be32(imgs, static_cast<std::uint32_t>(cols));
    const int pixels = count * rows * cols - truncate_pixels;
    for (int i = 0; i < pixels; ++i) imgs.put(static_cast<char>((i * 37 + 11) % 256));
    imgs.close();

    if (label_count < 0) label_count = count;
    std::ofstream lbls(f.labels, std::ios::binary);
    write_be32(lbls, lbl_magic);
    write_be32(lbls, static_cast<std::uint32_t>(label_count));
    for (int i = 0; i < label_count; ++i)
        lbls.put(static_cast<char>(i == bad_label_at ? 12 : i % 10));
    lbls.close();
    return f;
}

MatF random_images(Rng& rng, int n, int dim) {
    MatF m(n, dim);
    for (auto& x : m.v) x = static_cast<float>(rng.uniform(0.0, 1.0));
    return m;
}

// small synthetic task: one bright block per class, perfectly separable
Dataset block_dataset(int count, Rng& rng) {
    Dataset ds;
    ds.count = count;
    ds.rows = 28;
    ds.cols = 28;
    ds.images.assign(static_cast<std::size_t>(count) * 784, 0);
    ds.labels.resize(count);
    for (int i = 0; i < count; ++i) {
        const int label = static_cast<int>(rng.uniform_int(0, 9));
        ds.labels[i] = static_cast<std::uint8_t>(label);
        // 78-pixel band per class plus mild amplitude jitter
        const int begin = label * 78;
        for (int p = begin; p < begin + 78; ++p)
            ds.images[static_cast<std::size_t>(i) * 784 + p] =
                static_cast<std::uint8_t>(rng.uniform_int(160, 255));
    }
    return ds;
}

} // namespace

TEST_CASE("IDX loader") {
    SUBCASE("well-formed pair loads with validated shape") {
        const auto f = write_idx(50, 28, 28);
        const auto ds = load_mnist(f.images, f.labels);
        CHECK(ds.count == 50);
        CHECK(ds.rows == 28);
        CHECK(ds.cols == 28);
        CHECK(ds.images.size() == 50u * 784u);
        CHECK(ds.labels.size() == 50u);
    }
    SUBCASE("wrong image magic") {
        const auto f = write_idx(5, 28, 28, 0x807);
        CHECK_THROWS_WITH_AS(load_mnist(f.images, f.labels),
                             doctest::Contains("magic"), IngestError);
    }
    SUBCASE("wrong label magic") {
        const auto f = write_idx(5, 28, 28, 0x803, 0x803);
        CHECK_THROWS_WITH_AS(load_mnist(f.images, f.labels),
                             doctest::Contains("magic"), IngestError);
    }
    SUBCASE("truncated pixel payload names the field") {
        const auto f = write_idx(5, 28, 28, 0x803, 0x801, 100);
        CHECK_THROWS_WITH_AS(load_mnist(f.images, f.labels),
                             doctest::Contains("truncated"), IngestError);
    }
    SUBCASE("label outside 0-9") {
        const auto f = write_idx(5, 28, 28, 0x803, 0x801, 0, 3);
        CHECK_THROWS_WITH_AS(load_mnist(f.images, f.labels),
                             doctest::Contains("label"), IngestError);
    }
    SUBCASE("count mismatch between files") {
        const auto f = write_idx(5, 28, 28, 0x803, 0x801, 0, -1, 7);
        CHECK_THROWS_WITH_AS(load_mnist(f.images, f.labels),
                             doctest::Contains("count mismatch"), IngestError);
    }
}

TEST_CASE("Adam reproduces the published update rule on a scalar") {
    // hand-computed single step
    const double g = 0.3, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double m1 = (1 - b1) * g;
    const double v1 = (1 - b2) * g * g;
    const double mhat = m1 / (1 - b1);
    const double vhat = v1 / (1 - b2);
    const double expected = 1.0f - lr * (float(m1) / (1 - b1)) / (std::sqrt(float(v1) / (1 - b2)) + eps);
    (void)mhat;
    (void)vhat;

    std::vector<MatF> w(1, MatF(1, 1));
    w[0].v[0] = 1.0f;
    std::vector<MatF> grads(1, MatF(1, 1));
    grads[0].v[0] = static_cast<float>(g);
    Adam adam(w, {lr, b1, b2, eps});
    adam.step(w, grads);
    CHECK(w[0].v[0] == static_cast<float>(expected));
}

TEST_CASE("zero learning rate leaves weights unchanged") {
    Rng rng(3);
    const auto spec = ModelSpec::mnist_dense();
    auto weights = init_weights(spec, 3);
    const auto before = weights;
    Adam adam(weights, {0.0, 0.9, 0.999, 1e-8});
    std::vector<MatF> grads;
    for (const auto& w : weights) {
        MatF grad(w.rows, w.cols);
        for (auto& x : grad.v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
        grads.push_back(std::move(grad));
    }
    adam.step(weights, grads);
    for (std::size_t l = 0; l < weights.size(); ++l) CHECK(weights[l].v == before[l].v);
}

TEST_CASE("software-float gradients match central finite differences") {
    // toy network: 4 -> 3 relu -> 2 softmax, 18 parameters
    ModelSpec spec;
    spec.input_h = 2;
    spec.input_w = 2;
    spec.layers.push_back({LayerSpec::Kind::dense, 3, {}, Activation::relu});
    spec.layers.push_back({LayerSpec::Kind::dense, 2, {}, Activation::softmax});

    Rng rng(5);
    auto weights = init_weights(spec, 5);
    const MatF images = random_images(rng, 6, 4);
    std::vector<std::uint8_t> labels = {0, 1, 1, 0, 1, 0};
    auto model = compile_model(spec, weights, images);

    const auto trace = forward_batch(model, weights, images, Backend::software_float);
    const auto grads = backward_itl(model, weights, trace, labels.data());

    // independent oracle: the same two-layer forward in double precision
    const auto loss_at = [&](const std::vector<std::vector<double>>& w) {
        double loss = 0.0;
        for (int i = 0; i < images.rows; ++i) {
            double hid[3];
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 4; ++k) acc += images.at(i, k) * w[0][k * 3 + j];
                hid[j] = std::max(0.0, acc);
            }
            double logit[2];
            for (int j = 0; j < 2; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += hid[k] * w[1][k * 2 + j];
                logit[j] = acc;
            }
            const double mx = std::max(logit[0], logit[1]);
            const double z = std::exp(logit[0] - mx) + std::exp(logit[1] - mx);
            loss -= logit[labels[i]] - mx - std::log(z);
        }
        return loss / images.rows;
    };

    std::vector<std::vector<double>> wd(2);
    for (int l = 0; l < 2; ++l) wd[l].assign(weights[l].v.begin(), weights[l].v.end());

    double max_rel = 0.0;
    for (std::size_t l = 0; l < wd.size(); ++l) {
        for (std::size_t i = 0; i < wd[l].size(); ++i) {
            auto wp = wd, wm = wd;
            const double h = 1e-5;
            wp[l][i] += h;
            wm[l][i] -= h;
            const double fd = (loss_at(wp) - loss_at(wm)) / (2 * h);
            const double an = grads.dw[l].v[i];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
            max_rel = std::max(max_rel, rel);
        }
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("measured zero activation gates its incoming-weight gradient") {
    ModelSpec spec;
    spec.input_h = 2;
    spec.input_w = 2;
    spec.layers.push_back({LayerSpec::Kind::dense, 3, {}, Activation::relu});
    spec.layers.push_back({LayerSpec::Kind::dense, 2, {}, Activation::softmax});
    Rng rng(7);
    auto weights = init_weights(spec, 7);
    // force hidden unit 1 dead for every input
    for (int r = 0; r < 4; ++r) weights[0].at(r, 1) = -5.0f;
    const MatF images = random_images(rng, 4, 4);
    std::vector<std::uint8_t> labels = {0, 1, 0, 1};
    auto model = compile_model(spec, weights, images);
    const auto trace = forward_batch(model, weights, images, Backend::software_float);
    const auto grads = backward_itl(model, weights, trace, labels.data());
    for (int r = 0; r < 4; ++r) CHECK(grads.dw[0].at(r, 1) == 0.0f);
}

TEST_CASE("ideal-mode simulator gradients equal the quantized straight-through gradients") {
    PhysicsSpec phys;
    phys.ideal_mode = true;
    const auto core = AnalogCore::make(1, {}, phys);

    const auto spec = ModelSpec::mnist_dense();
    const auto weights = init_weights(spec, 9);
    Rng rng(9);
    auto model = compile_model(spec, weights, random_images(rng, 8, 784));
    MacOptions mac;
    SimExecutor sim(core, model, mac);
    init_hw_gains(model, core.physics(), mac.resends);

    const MatF images = random_images(rng, 10, 784);
    std::vector<std::uint8_t> labels(10);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 9));

    const auto sim_trace = forward_batch(model, weights, images, Backend::simulator, &sim, 3, 0);
    const auto swq_trace =
        forward_batch(model, weights, images, Backend::software_quantized, &sim, 3, 0);
    const auto g_sim = backward_itl(model, weights, sim_trace, labels.data());
    const auto g_swq = backward_itl(model, weights, swq_trace, labels.data());

    CHECK(g_sim.loss == g_swq.loss);
    for (std::size_t l = 0; l < g_sim.dw.size(); ++l) REQUIRE(g_sim.dw[l].v == g_swq.dw[l].v);
}

TEST_CASE("all-zero image yields equal logits") {
    const auto spec = ModelSpec::mnist_dense();
    const auto weights = init_weights(spec, 11);
    Rng rng(11);
    auto model = compile_model(spec, weights, random_images(rng, 4, 784));
    MatF zero(1, 784);
    const auto trace = forward_batch(model, weights, zero, Backend::software_float);
    for (int j = 1; j < 10; ++j) CHECK(trace.logits.at(0, j) == trace.logits.at(0, 0));
}

TEST_CASE("perfect-prediction stub yields identity confusion and accuracy 1") {
    ModelSpec spec;
    spec.layers.push_back({LayerSpec::Kind::dense, 10, {}, Activation::softmax});

    std::vector<MatF> weights(1, MatF(784, 10));
    for (int c = 0; c < 10; ++c) weights[0].at(c * 78, c) = 1.0f; // picks up each class band

    Rng rng(13);
    Dataset ds = block_dataset(200, rng);
    auto model = compile_model(spec, weights, to_float_images(ds, 0, 16));

    const auto res = evaluate(model, weights, ds, Backend::software_float);
    CHECK(res.accuracy == 1.0);
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j)
            if (i != j) CHECK(res.confusion[i][j] == 0);
}

TEST_CASE("training is deterministic under fixed seeds") {
    Rng rng(17);
    Dataset ds = block_dataset(400, rng);

    const auto run = [&](std::uint64_t seed) {
        TrainState st;
        st.spec = ModelSpec::mnist_dense();
        st.master = init_weights(st.spec, seed);
        st.hyper.batch_size = 20;
        st.hyper.batches_per_epoch = 10;
        st.optimizer = Adam(st.master, st.hyper.adam);
        st.backend = Backend::software_quantized;
        st.data_seed = seed;
        st.noise_seed = seed;
        auto model = compile_model(st.spec, st.master, to_float_images(ds, 0, 32));
        return train_epoch(st, model, ds);
    };

    const auto a = run(23), b = run(23), c = run(24);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].loss == b[i].loss);
        CHECK(a[i].accuracy == b[i].accuracy);
    }
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].loss != c[i].loss) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("simulator-in-the-loop training learns a separable task") {
    Rng rng(19);
    Dataset ds = block_dataset(600, rng);

    auto core = AnalogCore::make(19); // physical core, noise and all
    TrainState st;
    st.spec = ModelSpec::mnist_dense();
    st.master = init_weights(st.spec, 19);
    st.hyper.batch_size = 20;
    st.hyper.batches_per_epoch = 30;
    st.optimizer = Adam(st.master, st.hyper.adam);
    st.backend = Backend::simulator;
    auto model = compile_model(st.spec, st.master, to_float_images(ds, 0, 64));

    MacOptions mac;
    SimExecutor sim(core, model, mac);
    init_hw_gains(model, core.physics(), mac.resends);
    fit_hw_gains(model, sim, to_float_images(ds, 0, 64), st.master, 100);

    const auto before = evaluate(model, st.master, ds, Backend::simulator, 1, &sim, 1);
    for (int epoch = 0; epoch < 3; ++epoch) train_epoch(st, model, ds, &sim);
    requantize(model, st.master);
    sim.set_weights(model);
    const auto after = evaluate(model, st.master, ds, Backend::simulator, 1, &sim, 1);

    CHECK(after.accuracy > before.accuracy);
    CHECK(after.accuracy >= 0.9);
}

TEST_CASE("master weights round-trip through the checkpoint file") {
    const auto spec = ModelSpec::mnist_dense();
    const auto weights = init_weights(spec, 31);
    const auto path = std::filesystem::temp_directory_path() / "aimc_test_master.bin";
    save_master_weights(path, weights);
    const auto loaded = load_master_weights(path);
    REQUIRE(loaded.size() == weights.size());
    for (std::size_t l = 0; l < weights.size(); ++l) {
        CHECK(loaded[l].rows == weights[l].rows);
        CHECK(loaded[l].cols == weights[l].cols);
        CHECK(loaded[l].v == weights[l].v);
    }
    std::filesystem::remove(path);
}

TEST_CASE("conv-layer gradients match finite differences through the flatten") {
    // tiny conv net: 6x6 input, 2 filters of 3x3 stride 3, dense 8 -> 3
    ModelSpec spec;
    spec.input_h = 6;
    spec.input_w = 6;
    LayerSpec conv;
    conv.kind = LayerSpec::Kind::conv2d;
    conv.conv = Conv2DSpec{2, 3, 3, 3, 3, 0};
    conv.activation = Activation::relu;
    spec.layers.push_back(conv);
    spec.layers.push_back({LayerSpec::Kind::dense, 3, {}, Activation::softmax});

    Rng rng(41);
    auto weights = init_weights(spec, 41);
    MatF images = random_images(rng, 5, 36);
    std::vector<std::uint8_t> labels = {0, 1, 2, 1, 0};
    auto model = compile_model(spec, weights, images);

    const auto trace = forward_batch(model, weights, images, Backend::software_float);
    const auto grads = backward_itl(model, weights, trace, labels.data());

    // independent double-precision oracle of the same topology
    const auto loss_at = [&](const std::vector<std::vector<double>>& w) {
        double loss = 0.0;
        for (int i = 0; i < images.rows; ++i) {
            double flat[8];
            for (int py = 0; py < 2; ++py)
                for (int px = 0; px < 2; ++px)
                    for (int f = 0; f < 2; ++f) {
                        double acc = 0.0;
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx)
                                acc += images.at(i, (3 * py + ky) * 6 + (3 * px + kx)) *
                                       w[0][(ky * 3 + kx) * 2 + f];
                        flat[(py * 2 + px) * 2 + f] = std::max(0.0, acc);
                    }
            double logit[3];
            for (int j = 0; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 8; ++k) acc += flat[k] * w[1][k * 3 + j];
                logit[j] = acc;
            }
            const double mx = std::max({logit[0], logit[1], logit[2]});
            double z = 0.0;
            for (double l : logit) z += std::exp(l - mx);
            loss -= logit[labels[i]] - mx - std::log(z);
        }
        return loss / images.rows;
    };

    std::vector<std::vector<double>> wd(2);
    for (int l = 0; l < 2; ++l) wd[l].assign(weights[l].v.begin(), weights[l].v.end());
    double max_rel = 0.0;
    for (std::size_t l = 0; l < wd.size(); ++l)
        for (std::size_t i = 0; i < wd[l].size(); ++i) {
            auto wp = wd, wm = wd;
            const double h = 1e-5;
            wp[l][i] += h;
            wm[l][i] -= h;
            const double fd = (loss_at(wp) - loss_at(wm)) / (2 * h);
            const double an = grads.dw[l].v[i];
            max_rel = std::max(max_rel,
                               std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}));
        }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("noisy evaluation repeats report their spread") {
    Rng rng(53);
    Dataset ds = block_dataset(300, rng);
    // weaken the signal so the noisy simulator actually misclassifies some
    for (auto& p : ds.images) p = static_cast<std::uint8_t>(p / 6);

    auto core = AnalogCore::make(53);
    const auto spec = ModelSpec::mnist_dense();
    const auto weights = init_weights(spec, 53);
    auto model = compile_model(spec, weights, to_float_images(ds, 0, 32));
    MacOptions mac;
    SimExecutor sim(core, model, mac);
    init_hw_gains(model, core.physics(), mac.resends);

    const auto res = evaluate(model, weights, ds, Backend::simulator, 5, &sim, 7);
    CHECK(res.repeat_accuracies.size() == 5);
    CHECK(res.accuracy_std > 0.0);
    CHECK(res.accuracy_mean > 0.0);
    // deterministic given the seed
    const auto res2 = evaluate(model, weights, ds, Backend::simulator, 5, &sim, 7);
    CHECK(res2.repeat_accuracies == res.repeat_accuracies);
}

TEST_CASE("training defaults follow the benchmark protocol") {
    const TrainHyper hyper;
    CHECK(hyper.batch_size == 200);
    CHECK(hyper.batches_per_epoch == 300);
    CHECK(hyper.adam.lr == 1e-3);
    CHECK(hyper.adam.beta1 == 0.9);
    CHECK(hyper.adam.beta2 == 0.999);
}
