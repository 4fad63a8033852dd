#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "aimc/geometry.hpp"
#include "aimc/mac.hpp"

namespace aimc {

// row-major float matrix
struct MatF {
    int rows = 0;
    int cols = 0;
    std::vector<float> v;

    MatF() = default;
    MatF(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0f) {}

    float& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return v.size(); }
};

// 6-bit (or reduced-resolution) integer weights with one float scale per
// matrix: w_float ~ scale * w_int.
struct QuantizedMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::int8_t> w;
    double scale = 1.0;

    std::int8_t at(int r, int c) const { return w[static_cast<std::size_t>(r) * cols + c]; }
};

// scale = max|w| / limit, entries clamp(round(w / scale)); all-zero input
// gives scale 1. limit 63 is the native resolution, 15 the 4-bit variant.
QuantizedMatrix quantize_weights(const MatF& m, int limit = weight_limit);

// clamp(round(x / scale), 0, 31); inputs must be non-negative (post-ReLU or
// normalized pixels)
std::vector<std::uint8_t> quantize_inputs(std::span<const float> x, double scale);

struct Conv2DSpec {
    int filters = 20;
    int kernel_h = 10, kernel_w = 10;
    int stride_h = 5, stride_w = 5;
    int pad = 1;
};

// im2col-style lowering: one patch vector per output pixel, one matmul
// column per filter
struct LoweredConv {
    int out_h = 0, out_w = 0;
    int patch_len = 0;
    int filters = 0;
    int patches() const { return out_h * out_w; }
};

// Kernel/stride must cover the padded image exactly.
LoweredConv lower_conv(const Conv2DSpec& spec, int in_h, int in_w, int in_c = 1);

// patches() x patch_len matrix from a single-channel image
MatF extract_patches(const MatF& image, const Conv2DSpec& spec);

// Direct sliding-window convolution, the independent reference for the
// lowering: out[p][f] = sum over the receptive field.
MatF conv2d_direct(const MatF& image, const MatF& filters_rowmajor, const Conv2DSpec& spec);

struct Tile {
    int row_begin = 0, row_count = 0; // rows of the layer matrix
    int col_begin = 0, col_count = 0; // columns of the layer matrix
    bool signed_rows = true;
    int run = 0, block = 0, label_set = 0; // greedy 4-per-run packing slot
};

struct PartitionPlan {
    int layer_rows = 0, layer_cols = 0;
    bool signed_rows = true;
    int row_tiles = 0, col_tiles = 0;
    std::vector<Tile> tiles;

    int runs() const { return static_cast<int>((tiles.size() + 3) / 4); }
};

// Balanced row split at the mode's capacity (128 signed / 256 unsigned),
// column split per 256-column block, tiles packed greedily four per chip
// run (2 blocks x 2 synapse label sets).
PartitionPlan partition(int rows, int cols, const CoreGeometry& geom = {}, bool signed_rows = true);

// Exact integer recombination of per-tile partial sums; the activation
// function is applied by the caller afterwards. Multi-row-tile plans
// require signed-mode partials.
std::vector<long long> combine_partials(const PartitionPlan& plan,
                                        const std::vector<std::vector<int>>& partials,
                                        AdcMode partials_mode);

// flat little-endian binary: integer weights plus per-matrix scale table
void save_quantized_model(const std::filesystem::path& path,
                          const std::vector<QuantizedMatrix>& layers);
std::vector<QuantizedMatrix> load_quantized_model(const std::filesystem::path& path);

} // namespace aimc
