#include "aimc/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "aimc/errors.hpp"

namespace aimc {

ModelSpec ModelSpec::mnist_dense() {
    ModelSpec m;
    m.layers.push_back({LayerSpec::Kind::dense, 64, {}, Activation::relu});
    m.layers.push_back({LayerSpec::Kind::dense, 10, {}, Activation::softmax});
    return m;
}

ModelSpec ModelSpec::mnist_conv() {
    ModelSpec m;
    LayerSpec conv;
    conv.kind = LayerSpec::Kind::conv2d;
    conv.conv = Conv2DSpec{20, 10, 10, 5, 5, 1};
    conv.activation = Activation::relu;
    m.layers.push_back(conv);
    m.layers.push_back({LayerSpec::Kind::dense, 128, {}, Activation::relu});
    m.layers.push_back({LayerSpec::Kind::dense, 10, {}, Activation::softmax});
    return m;
}

void ModelSpec::validate() const {
    if (input_h < 1 || input_w < 1) throw ContractViolation("ModelSpec: empty input");
    if (layers.empty()) throw ContractViolation("ModelSpec: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.kind == LayerSpec::Kind::conv2d && i != 0)
            throw ContractViolation("ModelSpec: conv2d is only supported as the first layer");
        if (l.kind == LayerSpec::Kind::dense && l.units < 1)
            throw ContractViolation("ModelSpec: dense layer needs units >= 1");
    }
}

std::vector<std::pair<int, int>> ModelSpec::matmul_shapes() const {
    validate();
    std::vector<std::pair<int, int>> shapes;
    int flat = input_dim();
    for (const auto& l : layers) {
        if (l.kind == LayerSpec::Kind::conv2d) {
            const LoweredConv lc = lower_conv(l.conv, input_h, input_w);
            shapes.emplace_back(lc.patch_len, lc.filters);
            flat = lc.patches() * lc.filters;
        } else {
            shapes.emplace_back(flat, l.units);
            flat = l.units;
        }
    }
    return shapes;
}

std::vector<int> ModelSpec::flat_widths() const {
    std::vector<int> widths;
    int flat = input_dim();
    for (const auto& l : layers) {
        if (l.kind == LayerSpec::Kind::conv2d) {
            const LoweredConv lc = lower_conv(l.conv, input_h, input_w);
            flat = lc.patches() * lc.filters;
        } else {
            flat = l.units;
        }
        widths.push_back(flat);
    }
    return widths;
}

namespace {

void relu_inplace(MatF& m) {
    for (auto& x : m.v) x = std::max(0.0f, x);
}

// X (n x k) times W (k x m), double accumulation
MatF matmul(const MatF& x, const MatF& w) {
    MatF out(x.rows, w.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < x.rows; ++i) {
        for (int j = 0; j < w.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < x.cols; ++k)
                acc += static_cast<double>(x.at(i, k)) * w.at(k, j);
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

MatF image_matrix(const MatF& images, int row, int h, int w) {
    MatF img(h, w);
    std::memcpy(img.v.data(), &images.v[static_cast<std::size_t>(row) * images.cols],
                sizeof(float) * img.size());
    return img;
}

// float forward collecting the per-layer flattened activations (shared by
// the warmup scale fit and the software-float backend)
std::vector<MatF> float_forward_flat(const ModelSpec& spec, const std::vector<MatF>& weights,
                                     const MatF& images) {
    std::vector<MatF> acts;
    MatF cur = images;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& layer = spec.layers[l];
        MatF next;
        if (layer.kind == LayerSpec::Kind::conv2d) {
            const LoweredConv lc = lower_conv(layer.conv, spec.input_h, spec.input_w);
            next = MatF(cur.rows, lc.patches() * lc.filters);
            for (int i = 0; i < cur.rows; ++i) {
                const MatF patches =
                    extract_patches(image_matrix(cur, i, spec.input_h, spec.input_w), layer.conv);
                const MatF out = matmul(patches, weights[l]);
                std::memcpy(&next.v[static_cast<std::size_t>(i) * next.cols], out.v.data(),
                            sizeof(float) * out.size());
            }
        } else {
            next = matmul(cur, weights[l]);
        }
        if (layer.activation == Activation::relu) relu_inplace(next);
        acts.push_back(next);
        cur = std::move(next);
    }
    return acts;
}

} // namespace

CompiledModel compile_model(const ModelSpec& spec, const std::vector<MatF>& master_weights,
                            const MatF& warmup_images, const CoreGeometry& geom, int limit) {
    spec.validate();
    geom.validate();
    const auto shapes = spec.matmul_shapes();
    if (master_weights.size() != shapes.size())
        throw ContractViolation("compile_model: one weight matrix per layer required");
    for (std::size_t l = 0; l < shapes.size(); ++l)
        if (master_weights[l].rows != shapes[l].first || master_weights[l].cols != shapes[l].second)
            throw ContractViolation("compile_model: weight shape mismatch at layer " +
                                    std::to_string(l));
    if (warmup_images.rows < 1 || warmup_images.cols != spec.input_dim())
        throw ContractViolation("compile_model: warmup batch must hold flattened input images");

    CompiledModel model;
    model.spec = spec;
    model.geometry = geom;
    model.weight_limit_used = limit;

    // fixed per-layer input scales from warmup maxima
    const auto acts = float_forward_flat(spec, master_weights, warmup_images);
    std::vector<double> in_max(shapes.size(), 0.0);
    for (float x : warmup_images.v) in_max[0] = std::max(in_max[0], static_cast<double>(x));
    for (std::size_t l = 0; l + 1 < shapes.size(); ++l)
        for (float x : acts[l].v) in_max[l + 1] = std::max(in_max[l + 1], static_cast<double>(x));

    for (std::size_t l = 0; l < shapes.size(); ++l) {
        CompiledLayer cl;
        cl.spec = spec.layers[l];
        cl.in_dim = shapes[l].first;
        cl.out_dim = shapes[l].second;
        if (cl.spec.kind == LayerSpec::Kind::conv2d) {
            cl.lowered = lower_conv(cl.spec.conv, spec.input_h, spec.input_w);
            cl.patch_execs = cl.lowered.patches();
        }
        cl.qweights = quantize_weights(master_weights[l], limit);
        cl.input_scale = std::max(in_max[l], 1e-6) / input_limit;

        // hidden ReLU layers that fit a single row tile run on the hardware
        // rectifier; anything recombined or carrying logits stays signed
        bool relu_mode = false;
        if (cl.spec.activation == Activation::relu) {
            const PartitionPlan unsigned_plan = partition(cl.in_dim, cl.out_dim, geom, false);
            if (unsigned_plan.row_tiles == 1) {
                relu_mode = true;
                cl.mode = AdcMode::relu;
                cl.plan = unsigned_plan;
            }
        }
        if (!relu_mode) {
            cl.mode = AdcMode::signed_centered;
            cl.plan = partition(cl.in_dim, cl.out_dim, geom, true);
        }
        model.layers.push_back(std::move(cl));
    }

    model.tile_execs = 0;
    for (const auto& cl : model.layers)
        model.tile_execs += static_cast<int>(cl.plan.tiles.size()) * cl.patch_execs;
    model.runs = (model.tile_execs + 3) / 4;
    model.hw_gain.assign(shapes.size(), PhysicsSpec{}.charge_to_lsb);
    return model;
}

void requantize(CompiledModel& model, const std::vector<MatF>& master_weights) {
    if (master_weights.size() != model.layers.size())
        throw ContractViolation("requantize: weight count mismatch");
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        model.layers[l].qweights = quantize_weights(master_weights[l], model.weight_limit_used);
}

void init_hw_gains(CompiledModel& model, const PhysicsSpec& physics, int resends) {
    model.hw_gain.assign(model.layers.size(), physics.charge_to_lsb * resends);
}

// ---------------------------------------------------------------------------
// simulator executor

struct SimExecutor::Impl {
    const AnalogCore* core;
    // one prepared runner per (layer, tile)
    std::vector<std::vector<MacRunner>> runners;

    static TileWeights slice(const CompiledLayer& layer, const Tile& t, const CoreGeometry& geom) {
        TileWeights tw;
        tw.rows = t.row_count;
        tw.cols = t.col_count;
        tw.col_offset = t.block * geom.cols_per_block;
        tw.row_base = 0;
        tw.w.resize(static_cast<std::size_t>(t.row_count) * t.col_count);
        for (int r = 0; r < t.row_count; ++r)
            for (int c = 0; c < t.col_count; ++c)
                tw.w[static_cast<std::size_t>(r) * t.col_count + c] =
                    layer.qweights.at(t.row_begin + r, t.col_begin + c);
        return tw;
    }
};

SimExecutor::SimExecutor(const AnalogCore& core, const CompiledModel& model, MacOptions mac)
    : impl_(std::make_unique<Impl>()), model_(&model), mac_(mac) {
    mac_.skip_zeros = false; // fixed schedule shape, kernel tables reusable
    impl_->core = &core;
    impl_->runners.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const CompiledLayer& layer = model.layers[l];
        MacOptions mo = mac_;
        mo.mode = layer.mode;
        for (const Tile& t : layer.plan.tiles) {
            impl_->runners[l].emplace_back(core, Impl::slice(layer, t, core.geometry()), mo,
                                           t.row_count);
        }
    }
}

const AnalogCore& SimExecutor::core() const { return *impl_->core; }
const PhysicsSpec& SimExecutor::core_physics() const { return impl_->core->physics(); }

SimExecutor::~SimExecutor() = default;
SimExecutor::SimExecutor(SimExecutor&&) noexcept = default;
SimExecutor& SimExecutor::operator=(SimExecutor&&) noexcept = default;

void SimExecutor::set_weights(const CompiledModel& model) {
    if (model.layers.size() != impl_->runners.size())
        throw ContractViolation("SimExecutor::set_weights: layer count mismatch");
    model_ = &model;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const CompiledLayer& layer = model.layers[l];
        for (std::size_t t = 0; t < layer.plan.tiles.size(); ++t) {
            impl_->runners[l][t] = impl_->runners[l][t].with_weights(
                Impl::slice(layer, layer.plan.tiles[t], impl_->core->geometry()));
        }
    }
}

std::vector<long long> SimExecutor::run_layer(int layer_index, const std::vector<std::uint8_t>& x_q,
                                              Rng& rng) const {
    const CompiledLayer& layer = model_->layers[layer_index];
    if (static_cast<int>(x_q.size()) != layer.in_dim * layer.patch_execs)
        throw ContractViolation("SimExecutor::run_layer: input size mismatch");

    std::vector<long long> out(static_cast<std::size_t>(layer.out_dim) * layer.patch_execs, 0);
    std::vector<std::vector<int>> partials(layer.plan.tiles.size());
    std::vector<std::uint8_t> vec;
    for (int p = 0; p < layer.patch_execs; ++p) {
        for (std::size_t t = 0; t < layer.plan.tiles.size(); ++t) {
            const Tile& tile = layer.plan.tiles[t];
            vec.assign(x_q.begin() + static_cast<std::ptrdiff_t>(p) * layer.in_dim + tile.row_begin,
                       x_q.begin() + static_cast<std::ptrdiff_t>(p) * layer.in_dim + tile.row_begin +
                           tile.row_count);
            const ActivationVector act = impl_->runners[layer_index][t].run(vec, rng);
            partials[t].assign(act.values.begin(), act.values.end());
        }
        const auto combined = combine_partials(layer.plan, partials, layer.mode);
        for (int c = 0; c < layer.out_dim; ++c)
            out[static_cast<std::size_t>(p) * layer.out_dim + c] = combined[c];
    }
    return out;
}

std::vector<long long> quantized_layer_reference(const CompiledLayer& layer,
                                                 const std::vector<std::uint8_t>& x_q,
                                                 double charge_to_lsb, int resends) {
    if (static_cast<int>(x_q.size()) != layer.in_dim * layer.patch_execs)
        throw ContractViolation("quantized_layer_reference: input size mismatch");

    std::vector<long long> out(static_cast<std::size_t>(layer.out_dim) * layer.patch_execs, 0);
    std::vector<std::vector<int>> partials(layer.plan.tiles.size());
    for (int p = 0; p < layer.patch_execs; ++p) {
        const std::uint8_t* x = x_q.data() + static_cast<std::ptrdiff_t>(p) * layer.in_dim;
        for (std::size_t t = 0; t < layer.plan.tiles.size(); ++t) {
            const Tile& tile = layer.plan.tiles[t];
            partials[t].resize(tile.col_count);
            for (int c = 0; c < tile.col_count; ++c) {
                long long dot = 0;
                for (int r = 0; r < tile.row_count; ++r)
                    dot += static_cast<long long>(
                               layer.qweights.at(tile.row_begin + r, tile.col_begin + c)) *
                           x[tile.row_begin + r];
                const double amp = charge_to_lsb * (static_cast<double>(resends) * dot);
                partials[t][c] = digitize(amp, layer.mode);
            }
        }
        const auto combined = combine_partials(layer.plan, partials, layer.mode);
        for (int c = 0; c < layer.out_dim; ++c)
            out[static_cast<std::size_t>(p) * layer.out_dim + c] = combined[c];
    }
    return out;
}

namespace {

// one image through the quantized pipeline (simulator or digital reference)
void tiled_forward_image(const CompiledModel& model, const MatF& images, int row,
                         Backend backend, const SimExecutor* sim, Rng& rng, BatchTrace& trace) {
    const ModelSpec& spec = model.spec;
    std::vector<float> cur(images.cols);
    for (int c = 0; c < images.cols; ++c) cur[c] = images.at(row, c);

    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const CompiledLayer& layer = model.layers[l];

        // matmul-form float input (patch rows for conv)
        MatF in_rows;
        if (layer.spec.kind == LayerSpec::Kind::conv2d) {
            MatF img(spec.input_h, spec.input_w);
            std::copy(cur.begin(), cur.end(), img.v.begin());
            in_rows = extract_patches(img, layer.spec.conv);
        } else {
            in_rows = MatF(1, static_cast<int>(cur.size()));
            std::copy(cur.begin(), cur.end(), in_rows.v.begin());
        }

        const auto x_q = quantize_inputs(std::span<const float>(in_rows.v), layer.input_scale);

        std::vector<long long> lsb;
        double gain;
        if (backend == Backend::simulator) {
            lsb = sim->run_layer(static_cast<int>(l), x_q, rng);
            gain = model.hw_gain[l];
        } else {
            const double c2l = sim ? sim->core_physics().charge_to_lsb : PhysicsSpec{}.charge_to_lsb;
            const int resends = sim ? sim->mac().resends : 1;
            lsb = quantized_layer_reference(layer, x_q, c2l, resends);
            gain = c2l * resends;
        }

        // dequantize to model units; measured activations feed the next layer
        const double unit = layer.qweights.scale * layer.input_scale / gain;
        std::vector<float> next(lsb.size());
        for (std::size_t i = 0; i < lsb.size(); ++i) {
            double a = static_cast<double>(lsb[i]) * unit;
            if (layer.spec.activation == Activation::relu) a = std::max(0.0, a);
            next[i] = static_cast<float>(a);
        }

        // record trace rows
        const int base_row = row * (layer.spec.kind == LayerSpec::Kind::conv2d ? layer.patch_execs : 1);
        std::memcpy(&trace.inputs[l].v[static_cast<std::size_t>(base_row) * in_rows.cols],
                    in_rows.v.data(), sizeof(float) * in_rows.size());
        std::memcpy(&trace.outputs[l].v[static_cast<std::size_t>(base_row) * layer.out_dim],
                    next.data(), sizeof(float) * next.size());

        cur = std::move(next);
    }
    std::memcpy(&trace.logits.v[static_cast<std::size_t>(row) * trace.logits.cols], cur.data(),
                sizeof(float) * cur.size());
}

} // namespace

BatchTrace forward_batch(const CompiledModel& model, const std::vector<MatF>& master_weights,
                         const MatF& images, Backend backend, const SimExecutor* sim,
                         std::uint64_t noise_seed, std::uint64_t stream_base) {
    if (backend == Backend::simulator && sim == nullptr)
        throw ContractViolation("forward_batch: simulator backend requires a compiled executor");
    if (images.cols != model.spec.input_dim())
        throw ContractViolation("forward_batch: image width mismatch");

    const int n = images.rows;
    BatchTrace trace;
    trace.inputs.resize(model.layers.size());
    trace.outputs.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const CompiledLayer& cl = model.layers[l];
        const int rows_per_image = cl.spec.kind == LayerSpec::Kind::conv2d ? cl.patch_execs : 1;
        trace.inputs[l] = MatF(n * rows_per_image, cl.in_dim);
        trace.outputs[l] = MatF(n * rows_per_image, cl.out_dim);
    }
    trace.logits = MatF(n, model.layers.back().flat_out());

    if (backend == Backend::software_float) {
        // dense-matrix route: one matmul per layer over the whole batch
        const auto acts = float_forward_flat(model.spec, master_weights, images);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const CompiledLayer& cl = model.layers[l];
            if (cl.spec.kind == LayerSpec::Kind::conv2d) {
                for (int i = 0; i < n; ++i) {
                    const MatF patches = extract_patches(
                        image_matrix(images, i, model.spec.input_h, model.spec.input_w),
                        cl.spec.conv);
                    std::memcpy(
                        &trace.inputs[l].v[static_cast<std::size_t>(i) * patches.size()],
                        patches.v.data(), sizeof(float) * patches.size());
                }
            } else {
                trace.inputs[l] = l == 0 ? images : acts[l - 1];
            }
            // conv outputs reshape from (n x patches*filters) to rows of filters
            std::memcpy(trace.outputs[l].v.data(), acts[l].v.data(), sizeof(float) * acts[l].size());
        }
        trace.logits = acts.back();
        return trace;
    }

#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng(noise_seed).fork(stream_base + static_cast<std::uint64_t>(i));
        tiled_forward_image(model, images, i, backend, sim, rng, trace);
    }
    return trace;
}

void fit_hw_gains(CompiledModel& model, const SimExecutor& sim, const MatF& warmup_images,
                  const std::vector<MatF>& master_weights, std::uint64_t noise_seed) {
    // two passes: the second one fits at the operating point set by the
    // first pass's dequantization, where the saturation statistics match
    // later production forwards
    for (int pass = 0; pass < 2; ++pass)
        fit_hw_gains_once(model, sim, warmup_images, master_weights, noise_seed + pass);
}

void fit_hw_gains_once(CompiledModel& model, const SimExecutor& sim, const MatF& warmup_images,
                       const std::vector<MatF>& master_weights, std::uint64_t noise_seed) {
    (void)master_weights;
    const int n = warmup_images.rows;
    std::vector<double> num(model.layers.size(), 0.0), den(model.layers.size(), 0.0);

    for (int i = 0; i < n; ++i) {
        Rng rng = Rng(noise_seed).fork(static_cast<std::uint64_t>(i));
        std::vector<float> cur(warmup_images.cols);
        for (int c = 0; c < warmup_images.cols; ++c) cur[c] = warmup_images.at(i, c);

        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            const CompiledLayer& layer = model.layers[l];
            MatF in_rows;
            if (layer.spec.kind == LayerSpec::Kind::conv2d) {
                MatF img(model.spec.input_h, model.spec.input_w);
                std::copy(cur.begin(), cur.end(), img.v.begin());
                in_rows = extract_patches(img, layer.spec.conv);
            } else {
                in_rows = MatF(1, static_cast<int>(cur.size()));
                std::copy(cur.begin(), cur.end(), in_rows.v.begin());
            }
            const auto x_q = quantize_inputs(std::span<const float>(in_rows.v), layer.input_scale);

            const auto lsb = sim.run_layer(static_cast<int>(l), x_q, rng);

            // ideal integer dots for the same quantized input
            for (int p = 0; p < layer.patch_execs; ++p) {
                const std::uint8_t* x = x_q.data() + static_cast<std::ptrdiff_t>(p) * layer.in_dim;
                for (int c = 0; c < layer.out_dim; ++c) {
                    long long dot = 0;
                    for (int r = 0; r < layer.in_dim; ++r)
                        dot += static_cast<long long>(layer.qweights.at(r, c)) * x[r];
                    const double d = static_cast<double>(dot);
                    const double s =
                        static_cast<double>(lsb[static_cast<std::size_t>(p) * layer.out_dim + c]);
                    // near-clip readings would bias the linear fit
                    if (layer.mode == AdcMode::signed_centered && std::abs(s) >= 126.0) continue;
                    if (layer.mode == AdcMode::relu && (s <= 0.0 || s >= 254.0)) continue;
                    num[l] += s * d;
                    den[l] += d * d;
                }
            }

            // feed the measured activations forward, like the real pipeline
            const double gain = model.hw_gain[l];
            const double unit = layer.qweights.scale * layer.input_scale / gain;
            std::vector<float> next(lsb.size());
            for (std::size_t k = 0; k < lsb.size(); ++k) {
                double a = static_cast<double>(lsb[k]) * unit;
                if (layer.spec.activation == Activation::relu) a = std::max(0.0, a);
                next[k] = static_cast<float>(a);
            }
            cur = std::move(next);
        }
    }

    for (std::size_t l = 0; l < model.layers.size(); ++l)
        if (den[l] > 0.0) model.hw_gain[l] = num[l] / den[l];
}

} // namespace aimc
