#pragma once

#include "aimc/errors.hpp"

namespace aimc {

// Analog core layout: two synapse blocks side by side. Input rows are shared
// logically across blocks (one 256-entry vector drives both), each block has
// its own synapse drivers, so driver channels count blocks * rows.
struct CoreGeometry {
    int blocks = 2;
    int rows_per_block = 256;
    int cols_per_block = 256;

    int rows() const { return rows_per_block; }
    int cols() const { return blocks * cols_per_block; }
    int driver_channels() const { return blocks * rows_per_block; }

    // capacity of one tile, by row-pairing mode
    int max_rows(bool signed_rows) const { return signed_rows ? rows_per_block / 2 : rows_per_block; }

    int block_of_col(int col) const { return col / cols_per_block; }

    void validate() const {
        if (blocks <= 0 || rows_per_block <= 0 || cols_per_block <= 0)
            throw ConfigError("CoreGeometry: all counts must be positive");
    }

    bool operator==(const CoreGeometry&) const = default;
};

} // namespace aimc
