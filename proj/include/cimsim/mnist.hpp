#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cimsim/rng.hpp"

namespace cimsim {

// A labeled image set in memory (28x28 grayscale for the digit tasks).
struct Dataset {
    int rows = 28;
    int cols = 28;
    std::vector<std::uint8_t> images; // size() * rows * cols, row-major
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return labels.size(); }
    const std::uint8_t* image(std::size_t i) const {
        return images.data() + i * static_cast<std::size_t>(rows) * cols;
    }
};

// IDX readers (big-endian headers, magic 0x00000803 for images and
// 0x00000801 for labels). Throw BadMagic / TruncatedFile / ShapeMismatch.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path);

// Loads <dir>/train-images-idx3-ubyte (+labels) or the t10k pair.
Dataset load_idx_dir(const std::string& dir, bool train);
bool idx_dir_present(const std::string& dir);

// Deterministic subset: seeded shuffle of indices, first n taken.
Dataset subset(const Dataset& data, std::size_t n, Rng rng);

// Procedurally rendered digit glyphs with per-sample jitter and noise,
// in the same format as the IDX data. Stands in for the real dataset in
// offline environments; see the dataset-gen CLI command.
Dataset synth_digits(std::size_t n, Rng rng);

} // namespace cimsim
