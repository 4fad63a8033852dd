#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "aimc/netcompiler.hpp"

namespace aimc {

enum class Activation { relu, softmax, none };

struct LayerSpec {
    enum class Kind { dense, conv2d };
    Kind kind = Kind::dense;
    int units = 0;  // dense output width
    Conv2DSpec conv;
    Activation activation = Activation::none;
};

// Layer graph of the two benchmark topologies: an optional leading 2-d
// convolution followed by dense layers, ReLU hidden activations, softmax
// readout, no bias terms anywhere.
struct ModelSpec {
    int input_h = 28, input_w = 28;
    std::vector<LayerSpec> layers;

    static ModelSpec mnist_dense(); // 784 -> 64 relu -> 10 softmax
    static ModelSpec mnist_conv();  // conv 20x(10x10)/s5 pad1 relu -> 128 relu -> 10 softmax

    void validate() const;
    int input_dim() const { return input_h * input_w; }
    // matmul shape per layer: {in_dim (patch_len for conv), out_dim}
    std::vector<std::pair<int, int>> matmul_shapes() const;
    // flattened activation width per layer
    std::vector<int> flat_widths() const;
};

struct CompiledLayer {
    LayerSpec spec;
    int in_dim = 0;           // matmul rows
    int out_dim = 0;          // matmul cols
    LoweredConv lowered;      // conv layers only
    int patch_execs = 1;      // conv: one execution per output pixel
    QuantizedMatrix qweights; // refreshed from master weights per forward pass
    double input_scale = 1.0; // fixed from warmup maxima
    AdcMode mode = AdcMode::signed_centered;
    PartitionPlan plan;

    int flat_in() const { return in_dim * (spec.kind == LayerSpec::Kind::conv2d ? patch_execs : 1); }
    int flat_out() const { return out_dim * patch_execs; }
};

// A model lowered onto tiles: quantization scales, partition plans, packing
// and the per-layer hardware gain estimate used to dequantize readings.
struct CompiledModel {
    ModelSpec spec;
    CoreGeometry geometry;
    int weight_limit_used = weight_limit;
    std::vector<CompiledLayer> layers;
    int tile_execs = 0; // per image, counting conv patch executions
    int runs = 0;       // ceil(tile_execs / 4)

    // LSB per integer-dot unit per layer; exact (charge_to_lsb * resends)
    // for the digital reference, least-squares fitted for the simulator
    std::vector<double> hw_gain;
};

// Quantizes weights, fixes per-layer input scales from a warmup forward
// over sample images, partitions every layer and packs the executions.
CompiledModel compile_model(const ModelSpec& spec, const std::vector<MatF>& master_weights,
                            const MatF& warmup_images, const CoreGeometry& geom = {},
                            int limit = weight_limit);

// Refresh integer weights (and their scales) from evolving master weights.
void requantize(CompiledModel& model, const std::vector<MatF>& master_weights);

enum class Backend { software_float, software_quantized, simulator };

// Per-layer forward record of one batch, in matmul form: inputs[l] is
// ((batch * patches) x in_dim), outputs[l] the measured post-activation
// ((batch * patches) x out_dim). logits is (batch x label_count).
struct BatchTrace {
    std::vector<MatF> inputs;
    std::vector<MatF> outputs;
    MatF logits;
};

// Executes compiled tiles on an analog core, caching the per-tile kernel
// tables. Weight updates keep the tables (only the synapse values change).
class SimExecutor {
public:
    SimExecutor(const AnalogCore& core, const CompiledModel& model, MacOptions mac);
    ~SimExecutor();
    SimExecutor(SimExecutor&&) noexcept;
    SimExecutor& operator=(SimExecutor&&) noexcept;

    void set_weights(const CompiledModel& model);

    // integer LSB sums per output column for one layer input; exercised
    // per image, safe to call concurrently with distinct rng streams
    std::vector<long long> run_layer(int layer, const std::vector<std::uint8_t>& x_q,
                                     Rng& rng) const;

    const CompiledModel& model() const { return *model_; }
    const MacOptions& mac() const { return mac_; }
    const AnalogCore& core() const;
    const PhysicsSpec& core_physics() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    const CompiledModel* model_;
    MacOptions mac_;
};

// Forward pass of one image batch. `sim` is required for the simulator
// backend; noise streams fork per image from stream_base + row index.
BatchTrace forward_batch(const CompiledModel& model, const std::vector<MatF>& master_weights,
                         const MatF& images, Backend backend, const SimExecutor* sim = nullptr,
                         std::uint64_t noise_seed = 0, std::uint64_t stream_base = 0);

// Digital reference of one layer's tile pipeline (integer dot, ADC
// round/clamp per tile, recombination), shared by the software-quantized
// backend; independent of the event/kernel machinery.
std::vector<long long> quantized_layer_reference(const CompiledLayer& layer,
                                                 const std::vector<std::uint8_t>& x_q,
                                                 double charge_to_lsb, int resends);

// hw_gain = charge_to_lsb * resends, the exact dequantization factor of the
// digital reference and of the ideal-mode simulator
void init_hw_gains(CompiledModel& model, const PhysicsSpec& physics, int resends);

// Least-squares fit of LSB readings against ideal integer dots over a
// warmup batch; updates model.hw_gain per layer.
void fit_hw_gains(CompiledModel& model, const SimExecutor& sim, const MatF& warmup_images,
                  const std::vector<MatF>& master_weights, std::uint64_t noise_seed);
void fit_hw_gains_once(CompiledModel& model, const SimExecutor& sim, const MatF& warmup_images,
                       const std::vector<MatF>& master_weights, std::uint64_t noise_seed);

} // namespace aimc
