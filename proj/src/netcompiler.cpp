#include "aimc/netcompiler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "aimc/errors.hpp"

namespace aimc {

QuantizedMatrix quantize_weights(const MatF& m, int limit) {
    if (limit < 1 || limit > weight_limit)
        throw ContractViolation("quantize_weights: limit must lie in [1, 63]");

    double max_abs = 0.0;
    for (float x : m.v) {
        if (!std::isfinite(x)) throw ContractViolation("quantize_weights: non-finite weight");
        max_abs = std::max(max_abs, std::abs(static_cast<double>(x)));
    }

    QuantizedMatrix q;
    q.rows = m.rows;
    q.cols = m.cols;
    q.scale = max_abs > 0.0 ? max_abs / limit : 1.0;
    q.w.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const long v = std::lround(m.v[i] / q.scale);
        q.w[i] = static_cast<std::int8_t>(std::clamp(v, static_cast<long>(-limit), static_cast<long>(limit)));
    }
    return q;
}

std::vector<std::uint8_t> quantize_inputs(std::span<const float> x, double scale) {
    if (scale <= 0.0) throw ContractViolation("quantize_inputs: scale must be > 0");
    std::vector<std::uint8_t> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] >= 0.0f))
            throw ContractViolation("quantize_inputs: negative input in unsigned pipeline");
        const long v = std::lround(x[i] / scale);
        out[i] = static_cast<std::uint8_t>(std::clamp(v, 0L, static_cast<long>(input_limit)));
    }
    return out;
}

LoweredConv lower_conv(const Conv2DSpec& spec, int in_h, int in_w, int in_c) {
    if (spec.filters < 1 || spec.kernel_h < 1 || spec.kernel_w < 1 || spec.stride_h < 1 ||
        spec.stride_w < 1 || spec.pad < 0 || in_c < 1)
        throw ContractViolation("lower_conv: non-positive geometry");
    const int padded_h = in_h + 2 * spec.pad;
    const int padded_w = in_w + 2 * spec.pad;
    if (padded_h < spec.kernel_h || padded_w < spec.kernel_w ||
        (padded_h - spec.kernel_h) % spec.stride_h != 0 ||
        (padded_w - spec.kernel_w) % spec.stride_w != 0)
        throw ContractViolation("lower_conv: kernel/stride do not cover the padded image exactly");

    LoweredConv lc;
    lc.out_h = (padded_h - spec.kernel_h) / spec.stride_h + 1;
    lc.out_w = (padded_w - spec.kernel_w) / spec.stride_w + 1;
    lc.patch_len = spec.kernel_h * spec.kernel_w * in_c;
    lc.filters = spec.filters;
    return lc;
}

MatF extract_patches(const MatF& image, const Conv2DSpec& spec) {
    const LoweredConv lc = lower_conv(spec, image.rows, image.cols, 1);
    MatF patches(lc.patches(), lc.patch_len);
    for (int py = 0; py < lc.out_h; ++py) {
        for (int px = 0; px < lc.out_w; ++px) {
            const int p = py * lc.out_w + px;
            const int y0 = py * spec.stride_h - spec.pad;
            const int x0 = px * spec.stride_w - spec.pad;
            for (int ky = 0; ky < spec.kernel_h; ++ky) {
                for (int kx = 0; kx < spec.kernel_w; ++kx) {
                    const int y = y0 + ky;
                    const int x = x0 + kx;
                    const bool inside = y >= 0 && y < image.rows && x >= 0 && x < image.cols;
                    patches.at(p, ky * spec.kernel_w + kx) = inside ? image.at(y, x) : 0.0f;
                }
            }
        }
    }
    return patches;
}

MatF conv2d_direct(const MatF& image, const MatF& filters_rowmajor, const Conv2DSpec& spec) {
    const LoweredConv lc = lower_conv(spec, image.rows, image.cols, 1);
    if (filters_rowmajor.rows != lc.patch_len || filters_rowmajor.cols != spec.filters)
        throw ContractViolation("conv2d_direct: filter matrix shape mismatch");
    MatF out(lc.patches(), spec.filters);
    for (int py = 0; py < lc.out_h; ++py) {
        for (int px = 0; px < lc.out_w; ++px) {
            const int p = py * lc.out_w + px;
            for (int f = 0; f < spec.filters; ++f) {
                double acc = 0.0;
                for (int ky = 0; ky < spec.kernel_h; ++ky) {
                    for (int kx = 0; kx < spec.kernel_w; ++kx) {
                        const int y = py * spec.stride_h - spec.pad + ky;
                        const int x = px * spec.stride_w - spec.pad + kx;
                        if (y < 0 || y >= image.rows || x < 0 || x >= image.cols) continue;
                        acc += static_cast<double>(image.at(y, x)) *
                               filters_rowmajor.at(ky * spec.kernel_w + kx, f);
                    }
                }
                out.at(p, f) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

PartitionPlan partition(int rows, int cols, const CoreGeometry& geom, bool signed_rows) {
    if (rows < 1 || cols < 1) throw ContractViolation("partition: rows and cols must be >= 1");

    PartitionPlan plan;
    plan.layer_rows = rows;
    plan.layer_cols = cols;
    plan.signed_rows = signed_rows;

    const int row_cap = geom.max_rows(signed_rows);
    const int col_cap = geom.cols_per_block;
    plan.row_tiles = (rows + row_cap - 1) / row_cap;
    plan.col_tiles = (cols + col_cap - 1) / col_cap;

    // balanced row split: sizes differ by at most one
    std::vector<int> row_sizes(plan.row_tiles, rows / plan.row_tiles);
    for (int i = 0; i < rows % plan.row_tiles; ++i) ++row_sizes[i];
    std::vector<int> col_sizes(plan.col_tiles, cols / plan.col_tiles);
    for (int i = 0; i < cols % plan.col_tiles; ++i) ++col_sizes[i];

    int index = 0;
    int row_begin = 0;
    for (int rt = 0; rt < plan.row_tiles; ++rt) {
        int col_begin = 0;
        for (int ct = 0; ct < plan.col_tiles; ++ct) {
            Tile t;
            t.row_begin = row_begin;
            t.row_count = row_sizes[rt];
            t.col_begin = col_begin;
            t.col_count = col_sizes[ct];
            t.signed_rows = signed_rows;
            t.run = index / 4;
            t.block = (index % 4) / 2;
            t.label_set = index % 2;
            plan.tiles.push_back(t);
            col_begin += col_sizes[ct];
            ++index;
        }
        row_begin += row_sizes[rt];
    }
    return plan;
}

std::vector<long long> combine_partials(const PartitionPlan& plan,
                                        const std::vector<std::vector<int>>& partials,
                                        AdcMode partials_mode) {
    if (partials.size() != plan.tiles.size())
        throw ContractViolation("combine_partials: one partial vector per tile required");
    if (plan.row_tiles > 1 && partials_mode == AdcMode::relu)
        throw ContractViolation("combine_partials: relu-mode partials cannot be recombined; "
                                "multi-tile plans need signed partials");

    std::vector<long long> out(plan.layer_cols, 0);
    for (std::size_t i = 0; i < plan.tiles.size(); ++i) {
        const Tile& t = plan.tiles[i];
        if (static_cast<int>(partials[i].size()) != t.col_count)
            throw ContractViolation("combine_partials: partial size does not match tile columns");
        for (int c = 0; c < t.col_count; ++c) out[t.col_begin + c] += partials[i][c];
    }
    return out;
}

namespace {

template <typename T>
void write_le(std::ostream& os, T value) {
    // on-disk format is little-endian; this build targets LE hosts
    os.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_le(std::istream& is) {
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(value));
    return value;
}

constexpr std::uint32_t quant_magic = 0x514d4941; // "AIMQ"

} // namespace

void save_quantized_model(const std::filesystem::path& path,
                          const std::vector<QuantizedMatrix>& layers) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IngestError("quantized model: cannot open " + path.string() + " for writing");
    write_le<std::uint32_t>(os, quant_magic);
    write_le<std::uint32_t>(os, 1); // version
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(layers.size()));
    for (const auto& q : layers) {
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(q.rows));
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(q.cols));
        write_le<double>(os, q.scale);
        os.write(reinterpret_cast<const char*>(q.w.data()), static_cast<std::streamsize>(q.w.size()));
    }
    if (!os) throw IngestError("quantized model: write failed: " + path.string());
}

std::vector<QuantizedMatrix> load_quantized_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestError("quantized model: cannot open " + path.string());
    if (read_le<std::uint32_t>(is) != quant_magic)
        throw IngestError("quantized model: bad magic in " + path.string());
    const auto version = read_le<std::uint32_t>(is);
    if (version != 1)
        throw IngestError("quantized model: unsupported version " + std::to_string(version));
    const auto n = read_le<std::uint32_t>(is);
    std::vector<QuantizedMatrix> layers(n);
    for (auto& q : layers) {
        q.rows = static_cast<int>(read_le<std::uint32_t>(is));
        q.cols = static_cast<int>(read_le<std::uint32_t>(is));
        q.scale = read_le<double>(is);
        if (!is || q.rows <= 0 || q.cols <= 0 || q.scale <= 0.0)
            throw IngestError("quantized model: malformed layer header");
        q.w.resize(static_cast<std::size_t>(q.rows) * q.cols);
        is.read(reinterpret_cast<char*>(q.w.data()), static_cast<std::streamsize>(q.w.size()));
        if (!is) throw IngestError("quantized model: truncated weight payload");
        for (auto v : q.w)
            if (v < -weight_limit || v > weight_limit)
                throw IngestError("quantized model: weight outside 6-bit range");
    }
    return layers;
}

} // namespace aimc
