#include "aimc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "aimc/errors.hpp"

namespace aimc {

namespace {

// A^T * B with double accumulation: (k x n)^T (k x m) -> (n x m)
MatF matmul_tn(const MatF& a, const MatF& b) {
    MatF out(a.cols, b.cols);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.cols; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.rows; ++k)
                acc += static_cast<double>(a.at(k, i)) * b.at(k, j);
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

// A * B^T: (n x k) (m x k)^T -> (n x m)
MatF matmul_nt(const MatF& a, const MatF& b) {
    MatF out(a.rows, b.rows);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.rows; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k)
                acc += static_cast<double>(a.at(i, k)) * b.at(j, k);
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

} // namespace

Adam::Adam(const std::vector<MatF>& shapes, AdamParams params) : params_(params) {
    for (const auto& s : shapes) {
        m_.emplace_back(s.rows, s.cols);
        v_.emplace_back(s.rows, s.cols);
    }
}

void Adam::step(std::vector<MatF>& weights, const std::vector<MatF>& grads) {
    if (weights.size() != m_.size() || grads.size() != m_.size())
        throw ContractViolation("Adam::step: parameter count mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < weights.size(); ++p) {
        auto& w = weights[p].v;
        auto& m = m_[p].v;
        auto& v = v_[p].v;
        const auto& g = grads[p].v;
        if (w.size() != g.size()) throw ContractViolation("Adam::step: gradient shape mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            m[i] = static_cast<float>(params_.beta1 * m[i] + (1.0 - params_.beta1) * gi);
            v[i] = static_cast<float>(params_.beta2 * v[i] + (1.0 - params_.beta2) * gi * gi);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] = static_cast<float>(w[i] - params_.lr * mhat / (std::sqrt(vhat) + params_.eps));
        }
    }
}

std::vector<MatF> init_weights(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<MatF> weights;
    for (const auto& [in_dim, out_dim] : spec.matmul_shapes()) {
        MatF w(in_dim, out_dim);
        const double sigma = std::sqrt(2.0 / in_dim);
        for (auto& x : w.v) x = static_cast<float>(rng.normal(0.0, sigma));
        weights.push_back(std::move(w));
    }
    return weights;
}

std::pair<double, int> softmax_xent(const MatF& logits, const std::uint8_t* labels, MatF* dlogits) {
    const int n = logits.rows;
    const int k = logits.cols;
    if (dlogits) *dlogits = MatF(n, k);
    double loss = 0.0;
    int correct = 0;
    std::vector<double> p(k);
    for (int i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        int arg = 0;
        for (int j = 1; j < k; ++j)
            if (logits.at(i, j) > mx) {
                mx = logits.at(i, j);
                arg = j;
            }
        double z = 0.0;
        for (int j = 0; j < k; ++j) {
            p[j] = std::exp(static_cast<double>(logits.at(i, j)) - mx);
            z += p[j];
        }
        const int y = labels[i];
        loss -= std::log(p[y] / z);
        if (arg == y) ++correct;
        if (dlogits)
            for (int j = 0; j < k; ++j)
                dlogits->at(i, j) = static_cast<float>((p[j] / z - (j == y ? 1.0 : 0.0)) / n);
    }
    return {loss / n, correct};
}

Gradients backward_itl(const CompiledModel& model, const std::vector<MatF>& master_weights,
                       const BatchTrace& trace, const std::uint8_t* labels) {
    const std::size_t num_layers = model.layers.size();
    if (trace.inputs.size() != num_layers || trace.outputs.size() != num_layers)
        throw ContractViolation("backward_itl: trace does not cover every layer (run forward first)");
    for (std::size_t l = 0; l < num_layers; ++l)
        if (trace.outputs[l].size() == 0)
            throw ContractViolation("backward_itl: missing measured activations for layer " +
                                    std::to_string(l));

    Gradients g;
    g.dw.resize(num_layers);

    MatF dlogits;
    std::tie(g.loss, g.correct) = softmax_xent(trace.logits, labels, &dlogits);

    // delta in matmul form of the current layer
    MatF delta = std::move(dlogits);
    for (int l = static_cast<int>(num_layers) - 1; l >= 0; --l) {
        const CompiledLayer& layer = model.layers[l];
        if (delta.rows != trace.outputs[l].rows || delta.cols != layer.out_dim)
            throw ContractViolation("backward_itl: delta shape mismatch");

        g.dw[l] = matmul_tn(trace.inputs[l], delta);
        if (l == 0) break;

        MatF prev = matmul_nt(delta, master_weights[l]); // rows x in_dim
        // reshape to the previous layer's matmul form; flattening is
        // patch-major so the linear layout already matches
        const CompiledLayer& below = model.layers[l - 1];
        MatF reshaped(trace.outputs[l - 1].rows, below.out_dim);
        if (reshaped.size() != prev.size())
            throw ContractViolation("backward_itl: flatten size mismatch between layers");
        std::memcpy(reshaped.v.data(), prev.v.data(), sizeof(float) * prev.size());

        // ReLU gate from the measured activations
        if (below.spec.activation == Activation::relu) {
            for (std::size_t i = 0; i < reshaped.v.size(); ++i)
                if (trace.outputs[l - 1].v[i] <= 0.0f) reshaped.v[i] = 0.0f;
        }
        delta = std::move(reshaped);
    }
    return g;
}

std::vector<BatchMetrics> train_epoch(TrainState& state, CompiledModel& model, const Dataset& data,
                                      SimExecutor* sim) {
    const int n = state.hyper.batch_size;
    const int batches = state.hyper.batches_per_epoch;
    if (static_cast<long>(n) * batches > data.count)
        throw ContractViolation("train_epoch: batch_size * batches_per_epoch exceeds dataset size");
    if (state.backend == Backend::simulator && sim == nullptr)
        throw ContractViolation("train_epoch: simulator backend requires an executor");

    // deterministic per-epoch order
    const long epoch_index = state.step / batches;
    std::vector<int> order(data.count);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(state.data_seed + 0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(epoch_index));
    for (int i = data.count - 1; i > 0; --i)
        std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

    std::vector<BatchMetrics> metrics;
    metrics.reserve(batches);
    std::vector<std::uint8_t> labels(n);

    for (int b = 0; b < batches; ++b) {
        const MatF images = to_float_images(data, order, b * n, n);
        for (int i = 0; i < n; ++i) labels[i] = data.labels[order[b * n + i]];

        requantize(model, state.master); // masters stay float, tiles see fresh integers
        if (sim) sim->set_weights(model);

        const std::uint64_t stream_base =
            static_cast<std::uint64_t>(state.step) * static_cast<std::uint64_t>(n);
        const BatchTrace trace = forward_batch(model, state.master, images, state.backend, sim,
                                               state.noise_seed, stream_base);
        Gradients grads = backward_itl(model, state.master, trace, labels.data());
        state.optimizer.step(state.master, grads.dw);
        ++state.step;

        metrics.push_back({b, grads.loss, static_cast<double>(grads.correct) / n});
    }
    return metrics;
}

EvalResult evaluate(const CompiledModel& model, const std::vector<MatF>& master_weights,
                    const Dataset& data, Backend backend, int repeats, SimExecutor* sim,
                    std::uint64_t noise_seed) {
    if (repeats < 1) throw ContractViolation("evaluate: repeats must be >= 1");
    if (backend == Backend::simulator && sim == nullptr)
        throw ContractViolation("evaluate: simulator backend requires an executor");

    EvalResult res;
    constexpr int chunk = 500;
    for (int rep = 0; rep < repeats; ++rep) {
        long correct = 0;
        for (int begin = 0; begin < data.count; begin += chunk) {
            const int count = std::min(chunk, data.count - begin);
            const MatF images = to_float_images(data, begin, count);
            const std::uint64_t stream_base =
                static_cast<std::uint64_t>(rep) * static_cast<std::uint64_t>(data.count) + begin;
            const BatchTrace trace =
                forward_batch(model, master_weights, images, backend, sim, noise_seed, stream_base);
            for (int i = 0; i < count; ++i) {
                int arg = 0;
                for (int j = 1; j < trace.logits.cols; ++j)
                    if (trace.logits.at(i, j) > trace.logits.at(i, arg)) arg = j;
                const int y = data.labels[begin + i];
                if (arg == y) ++correct;
                if (rep == 0) ++res.confusion[y][arg];
            }
        }
        res.repeat_accuracies.push_back(static_cast<double>(correct) / data.count);
    }

    res.accuracy = res.repeat_accuracies.front();
    res.accuracy_mean = std::accumulate(res.repeat_accuracies.begin(), res.repeat_accuracies.end(), 0.0) /
                        repeats;
    double var = 0.0;
    for (double a : res.repeat_accuracies) var += (a - res.accuracy_mean) * (a - res.accuracy_mean);
    res.accuracy_std = repeats > 1 ? std::sqrt(var / (repeats - 1)) : 0.0;
    return res;
}

void EvalResult::save_confusion_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw IngestError("confusion csv: cannot open " + path.string());
    os << "true\\pred";
    for (int j = 0; j < 10; ++j) os << ',' << j;
    os << '\n';
    for (int i = 0; i < 10; ++i) {
        os << i;
        for (int j = 0; j < 10; ++j) os << ',' << confusion[i][j];
        os << '\n';
    }
}

void save_metrics_csv(const std::filesystem::path& path, const std::vector<BatchMetrics>& metrics) {
    std::ofstream os(path);
    if (!os) throw IngestError("metrics csv: cannot open " + path.string());
    os << "batch,loss,accuracy\n";
    for (const auto& m : metrics) os << m.batch_index << ',' << m.loss << ',' << m.accuracy << '\n';
}

namespace {

constexpr std::uint32_t master_magic = 0x574d4941; // "AIMW"

template <typename T>
void write_le(std::ostream& os, T value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_le(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(value));
    return value;
}

} // namespace

void save_master_weights(const std::filesystem::path& path, const std::vector<MatF>& weights) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IngestError("master weights: cannot open " + path.string() + " for writing");
    write_le<std::uint32_t>(os, master_magic);
    write_le<std::uint32_t>(os, 1);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(weights.size()));
    for (const auto& w : weights) {
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(w.rows));
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(w.cols));
        os.write(reinterpret_cast<const char*>(w.v.data()),
                 static_cast<std::streamsize>(sizeof(float) * w.size()));
    }
    if (!os) throw IngestError("master weights: write failed: " + path.string());
}

std::vector<MatF> load_master_weights(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError("master weights: cannot open " + path.string());
    if (read_le<std::uint32_t>(is) != master_magic)
        throw IngestError("master weights: bad magic in " + path.string());
    const auto version = read_le<std::uint32_t>(is);
    if (version != 1)
        throw IngestError("master weights: unsupported version " + std::to_string(version));
    const auto n = read_le<std::uint32_t>(is);
    std::vector<MatF> weights(n);
    for (auto& w : weights) {
        const auto rows = read_le<std::uint32_t>(is);
        const auto cols = read_le<std::uint32_t>(is);
        if (!is || rows == 0 || cols == 0)
            throw IngestError("master weights: malformed layer header");
        w = MatF(static_cast<int>(rows), static_cast<int>(cols));
        is.read(reinterpret_cast<char*>(w.v.data()),
                static_cast<std::streamsize>(sizeof(float) * w.size()));
        if (!is) throw IngestError("master weights: truncated payload");
    }
    return weights;
}

} // namespace aimc
