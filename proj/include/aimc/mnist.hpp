#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aimc/netcompiler.hpp"

namespace aimc {

// Labeled image set in raw 8-bit form.
struct Dataset {
    int count = 0;
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> images; // count x rows*cols
    std::vector<std::uint8_t> labels; // 0..9
    std::string split;

    int image_dim() const { return rows * cols; }
    const std::uint8_t* image(int i) const {
        return images.data() + static_cast<std::size_t>(i) * image_dim();
    }
};

// IDX parser (big-endian, magic 0x00000803 for images / 0x00000801 for
// labels). Validates header fields against the actual payload and the two
// files against each other; errors name the offending field.
Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path);

// pixels normalized to [0, 1], one flattened image per row
MatF to_float_images(const Dataset& ds, int begin = 0, int count = -1);

// subset by index list
MatF to_float_images(const Dataset& ds, const std::vector<int>& indices, int begin, int count);

} // namespace aimc
