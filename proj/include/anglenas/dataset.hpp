#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "anglenas/errors.hpp"
#include "anglenas/matrix.hpp"
#include "anglenas/rng.hpp"

namespace anglenas {

enum class Split { train, validation };

struct ToyDataset {
    Matrix inputs;           // [n x input_dim]
    std::vector<int> labels; // class indices
    Split split = Split::train;
    std::size_t class_count = 0;
    std::uint64_t seed = 0;

    std::size_t size() const { return inputs.rows; }
};

struct DataBundle {
    ToyDataset train;
    ToyDataset val;
};

struct RingsConfig {
    std::size_t train_size = 512;
    std::size_t val_size = 512;
    std::size_t classes = 4;
    double noise = 0.12;
    std::uint64_t seed = 7;
};

// Concentric-rings classification task: class c lives on radius (c+1) / classes
// with gaussian radial noise. Rotationally symmetric, so it is not linearly
// separable from the raw 2-d coordinates.
inline ToyDataset make_rings_split(std::size_t n, std::size_t classes, double noise, Rng& rng,
                                   Split split, std::uint64_t seed) {
    ToyDataset ds;
    ds.inputs = Matrix(n, 2);
    ds.labels.resize(n);
    ds.class_count = classes;
    ds.split = split;
    ds.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        const int c = int(i % classes);
        const double r = (double(c) + 1.0) / double(classes) + rng.normal(0.0, noise);
        const double theta = rng.uniform_real(0.0, 2.0 * std::numbers::pi);
        ds.inputs(i, 0) = r * std::cos(theta);
        ds.inputs(i, 1) = r * std::sin(theta);
        ds.labels[i] = c;
    }
    return ds;
}

inline DataBundle make_rings(const RingsConfig& cfg) {
    Rng rng(cfg.seed);
    DataBundle b;
    b.train = make_rings_split(cfg.train_size, cfg.classes, cfg.noise, rng, Split::train, cfg.seed);
    b.val = make_rings_split(cfg.val_size, cfg.classes, cfg.noise, rng, Split::validation, cfg.seed);
    return b;
}

// Flat binary layout: header (magic, version, seed, rows, cols, classes,
// split), then row-major float64 inputs, then int32 labels. Little-endian.
constexpr std::uint32_t kDatasetMagic = 0x414e4c44; // "ANLD"
constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const ToyDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write dataset file: " + path.string());
    auto put = [&out](const void* p, std::size_t n) {
        out.write(static_cast<const char*>(p), std::streamsize(n));
    };
    const std::uint64_t rows = ds.inputs.rows, cols = ds.inputs.cols, classes = ds.class_count;
    const std::uint8_t split = ds.split == Split::train ? 0 : 1;
    put(&kDatasetMagic, 4);
    put(&kDatasetVersion, 4);
    put(&ds.seed, 8);
    put(&rows, 8);
    put(&cols, 8);
    put(&classes, 8);
    put(&split, 1);
    put(ds.inputs.data.data(), rows * cols * sizeof(double));
    for (int label : ds.labels) {
        const std::int32_t v = label;
        put(&v, 4);
    }
    if (!out) throw IoFailure("short write on dataset file: " + path.string());
}

inline ToyDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open dataset file: " + path.string());
    auto get = [&in, &path](void* p, std::size_t n) {
        in.read(static_cast<char*>(p), std::streamsize(n));
        if (!in) throw IoFailure("truncated dataset file: " + path.string());
    };
    std::uint32_t magic = 0, version = 0;
    get(&magic, 4);
    get(&version, 4);
    if (magic != kDatasetMagic) throw IoFailure("not a dataset file: " + path.string());
    if (version != kDatasetVersion) throw IoFailure("unsupported dataset version");
    ToyDataset ds;
    std::uint64_t rows = 0, cols = 0, classes = 0;
    std::uint8_t split = 0;
    get(&ds.seed, 8);
    get(&rows, 8);
    get(&cols, 8);
    get(&classes, 8);
    get(&split, 1);
    ds.inputs = Matrix(rows, cols);
    ds.class_count = classes;
    ds.split = split == 0 ? Split::train : Split::validation;
    get(ds.inputs.data.data(), rows * cols * sizeof(double));
    ds.labels.resize(rows);
    for (auto& label : ds.labels) {
        std::int32_t v = 0;
        get(&v, 4);
        label = v;
    }
    for (int label : ds.labels)
        if (label < 0 || std::size_t(label) >= ds.class_count)
            throw IoFailure("dataset label out of range");
    return ds;
}

} // namespace anglenas
