#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cimsim/block.hpp"

namespace cimsim {

enum class KernelMode : std::uint8_t { Binary, Int8 };
enum class Metric : std::uint8_t { Hamming, EuclidSq };

const char* to_string(Metric m);

// A flattened kernel for similarity search: a bit pattern (binarized
// weights) or a list of int8 values.
struct KernelVector {
    KernelMode mode = KernelMode::Binary;
    std::vector<std::uint8_t> bits;
    std::vector<std::int8_t> elements;
    int layer_id = 0;
    int kernel_id = 0;

    static KernelVector binary(std::vector<std::uint8_t> bits, int layer_id = 0,
                               int kernel_id = 0);
    static KernelVector int8(std::vector<std::int8_t> elements, int layer_id = 0,
                             int kernel_id = 0);

    std::size_t size() const {
        return mode == KernelMode::Binary ? bits.size() : elements.size();
    }
};

struct SimilarityMatrix {
    int n = 0;
    Metric metric = Metric::Hamming;
    std::size_t vector_len = 0; // kernel element/bit count, for normalization
    std::vector<std::int64_t> d; // n*n, symmetric, zero diagonal

    std::int64_t at(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
    void set(int i, int j, std::int64_t v) {
        d[static_cast<std::size_t>(i) * n + j] = v;
        d[static_cast<std::size_t>(j) * n + i] = v;
    }

    // Largest value the metric can reach for vectors of this length;
    // normalized thresholds are fractions of it.
    double max_distance() const;

    std::string to_csv() const;          // row,col,distance
    std::string to_json_heatmap() const; // heatmap payload for plotting
};

// Hamming distance in-memory: a's bits programmed into block rows of one
// column, b streamed on the K input with op = XOR and X = 1, output
// popcounted. Requires a.size() <= block.data_rows(). Gate counts land on
// the ledger attached to the block.
std::int64_t hamming_cim(const KernelVector& a, const KernelVector& b,
                         CimBlock& block);

// Squared difference of two int8 values from per-bit AND (P_j) and
// XOR (R_j) terms on the sign-magnitude patterns. Equals (x-y)^2 exactly.
std::int64_t euclid_sq_int8_cim(int x, int y, CimBlock& block,
                                EnergyLedger* ledger = nullptr);

// Distance between two kernels of the same mode and shape: Hamming for
// binary kernels (chunked over the block when longer than its rows),
// summed squared Euclidean for int8 kernels.
std::int64_t kernel_distance(const KernelVector& a, const KernelVector& b,
                             CimBlock& block, EnergyLedger* ledger = nullptr);

// All pairwise distances, symmetric with zero diagonal. One
// search-in-memory pass is accounted per pair.
SimilarityMatrix similarity_matrix(const std::vector<KernelVector>& kernels,
                                   CimBlock& block,
                                   EnergyLedger* ledger = nullptr);

} // namespace cimsim
