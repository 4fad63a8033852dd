#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "aimc/mnist.hpp"
#include "aimc/model.hpp"

namespace aimc {

struct AdamParams {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam optimizer state over a set of weight matrices.
class Adam {
public:
    Adam() = default;
    Adam(const std::vector<MatF>& shapes, AdamParams params);

    void step(std::vector<MatF>& weights, const std::vector<MatF>& grads);

    long steps_taken() const { return t_; }
    const AdamParams& params() const { return params_; }

private:
    AdamParams params_;
    std::vector<MatF> m_, v_;
    long t_ = 0;
};

struct TrainHyper {
    AdamParams adam;
    int batch_size = 200;
    int batches_per_epoch = 300;
};

// Master float weights plus optimizer state; quantization happens per
// forward pass, the masters stay float.
struct TrainState {
    ModelSpec spec;
    std::vector<MatF> master;
    Adam optimizer;
    Backend backend = Backend::software_float;
    TrainHyper hyper;
    long step = 0;
    std::uint64_t data_seed = 1;
    std::uint64_t noise_seed = 1;
};

// He-initialized weights, deterministic in seed.
std::vector<MatF> init_weights(const ModelSpec& spec, std::uint64_t seed);

struct Gradients {
    std::vector<MatF> dw;
    double loss = 0.0;
    int correct = 0;
};

// mean cross-entropy after softmax + argmax hit count
std::pair<double, int> softmax_xent(const MatF& logits, const std::uint8_t* labels,
                                    MatF* dlogits = nullptr);

// Backprop through the recorded forward: ReLU gates from measured
// activations, Jacobians from the float master weights, cross-entropy on
// softmax logits.
Gradients backward_itl(const CompiledModel& model, const std::vector<MatF>& master_weights,
                       const BatchTrace& trace, const std::uint8_t* labels);

struct BatchMetrics {
    int batch_index = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

// One epoch of mini-batch training on the requested backend. For the
// simulator backend, `sim` runs the forwards and its weights are refreshed
// after every optimizer step. Deterministic under fixed seeds.
std::vector<BatchMetrics> train_epoch(TrainState& state, CompiledModel& model,
                                      const Dataset& data, SimExecutor* sim = nullptr);

struct EvalResult {
    double accuracy = 0.0;
    long confusion[10][10] = {}; // [true][predicted]
    std::vector<double> repeat_accuracies;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;

    void save_confusion_csv(const std::filesystem::path& path) const;
};

// Full-set classification accuracy and confusion counts. With repeats > 1
// the noisy evaluation is repeated on fresh noise streams and the spread
// reported; the confusion matrix comes from the first repeat.
EvalResult evaluate(const CompiledModel& model, const std::vector<MatF>& master_weights,
                    const Dataset& data, Backend backend, int repeats = 1,
                    SimExecutor* sim = nullptr, std::uint64_t noise_seed = 1);

void save_metrics_csv(const std::filesystem::path& path, const std::vector<BatchMetrics>& metrics);

// float master checkpoint (little-endian, versioned header)
void save_master_weights(const std::filesystem::path& path, const std::vector<MatF>& weights);
std::vector<MatF> load_master_weights(const std::filesystem::path& path);

} // namespace aimc
