#include "aimc/mnist.hpp"

#include <fstream>

#include "aimc/errors.hpp"

namespace aimc {

namespace {

std::uint32_t read_be32(std::istream& is, const std::string& file, const char* field) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IngestError(file + ": truncated while reading " + field);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

constexpr std::uint32_t images_magic = 0x00000803;
constexpr std::uint32_t labels_magic = 0x00000801;

} // namespace

Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IngestError("images file: cannot open " + images_path.string());
    std::ifstream lbls(labels_path, std::ios::binary);
    if (!lbls) throw IngestError("labels file: cannot open " + labels_path.string());

    const std::string iname = images_path.filename().string();
    const std::string lname = labels_path.filename().string();

    const auto imagic = read_be32(imgs, iname, "magic");
    if (imagic != images_magic)
        throw IngestError(iname + ": magic " + std::to_string(imagic) + " != expected " +
                          std::to_string(images_magic) + " (images)");
    const auto icount = read_be32(imgs, iname, "count");
    const auto irows = read_be32(imgs, iname, "rows");
    const auto icols = read_be32(imgs, iname, "cols");
    if (icount == 0 || irows == 0 || icols == 0)
        throw IngestError(iname + ": zero count or dimensions in header");

    const auto lmagic = read_be32(lbls, lname, "magic");
    if (lmagic != labels_magic)
        throw IngestError(lname + ": magic " + std::to_string(lmagic) + " != expected " +
                          std::to_string(labels_magic) + " (labels)");
    const auto lcount = read_be32(lbls, lname, "count");
    if (lcount != icount)
        throw IngestError("count mismatch: " + iname + " holds " + std::to_string(icount) +
                          " images but " + lname + " holds " + std::to_string(lcount) + " labels");

    Dataset ds;
    ds.count = static_cast<int>(icount);
    ds.rows = static_cast<int>(irows);
    ds.cols = static_cast<int>(icols);
    ds.split = images_path.stem().string();

    const std::size_t pixels = std::size_t(icount) * irows * icols;
    ds.images.resize(pixels);
    imgs.read(reinterpret_cast<char*>(ds.images.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(imgs.gcount()) != pixels)
        throw IngestError(iname + ": truncated pixel payload: header promises " +
                          std::to_string(pixels) + " bytes, got " + std::to_string(imgs.gcount()));

    ds.labels.resize(icount);
    lbls.read(reinterpret_cast<char*>(ds.labels.data()), static_cast<std::streamsize>(icount));
    if (static_cast<std::size_t>(lbls.gcount()) != icount)
        throw IngestError(lname + ": truncated label payload: header promises " +
                          std::to_string(icount) + " bytes, got " + std::to_string(lbls.gcount()));

    for (std::size_t i = 0; i < ds.labels.size(); ++i)
        if (ds.labels[i] > 9)
            throw IngestError(lname + ": label " + std::to_string(int(ds.labels[i])) + " at index " +
                              std::to_string(i) + " outside 0-9");
    return ds;
}

MatF to_float_images(const Dataset& ds, int begin, int count) {
    if (count < 0) count = ds.count - begin;
    if (begin < 0 || begin + count > ds.count)
        throw ContractViolation("to_float_images: range outside dataset");
    MatF out(count, ds.image_dim());
    for (int i = 0; i < count; ++i) {
        const std::uint8_t* px = ds.image(begin + i);
        for (int j = 0; j < ds.image_dim(); ++j)
            out.at(i, j) = static_cast<float>(px[j]) / 255.0f;
    }
    return out;
}

MatF to_float_images(const Dataset& ds, const std::vector<int>& indices, int begin, int count) {
    if (begin < 0 || begin + count > static_cast<int>(indices.size()))
        throw ContractViolation("to_float_images: range outside index list");
    MatF out(count, ds.image_dim());
    for (int i = 0; i < count; ++i) {
        const std::uint8_t* px = ds.image(indices[begin + i]);
        for (int j = 0; j < ds.image_dim(); ++j)
            out.at(i, j) = static_cast<float>(px[j]) / 255.0f;
    }
    return out;
}

} // namespace aimc
