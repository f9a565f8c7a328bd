#pragma once

#include <cstdint>
#include <vector>

#include "cimsim/block.hpp"

namespace cimsim {

// Maps one conv layer's binarized kernels onto 512x32 blocks: kernel ->
// column, receptive-field bit -> row, chunked over blocks when a kernel
// is longer than the data rows or a layer wider than the data columns.
class LayerChip {
public:
    LayerChip(int n_kernels, int kernel_len, const DeviceParams& dev,
              const TimingParams& timing, const Rng& rng);

    int n_kernels() const { return n_kernels_; }
    int kernel_len() const { return kernel_len_; }
    int chunks() const { return chunks_; }
    int groups() const { return groups_; }

    // Programs the kernels whose active flag is set; bits is kernel-major
    // (n_kernels x kernel_len). Columns of inactive kernels are left as
    // they are and excluded from every computation.
    void program(const std::vector<std::uint8_t>& bits,
                 const std::vector<std::uint8_t>& active);

    // acc[k] += sum_i patch[i] * bit_{k,i} for active kernels, evaluated
    // as bit-serial AND passes over the resident bits (one pass per input
    // bit plane). Patch values must fit in `input_bits` unsigned bits.
    void conv_counts(const std::vector<std::int32_t>& patch,
                     const std::vector<std::uint8_t>& active, int input_bits,
                     std::vector<std::int64_t>& acc, EnergyLedger* ledger) const;

    // Same result assembled from per-plane ternary_vmm calls; the slow
    // reference used to pin the fast path to the block operation.
    void conv_counts_via_vmm(const std::vector<std::int32_t>& patch,
                             const std::vector<std::uint8_t>& active, int input_bits,
                             std::vector<std::int64_t>& acc) const;

    // d[k] = Hamming(ref, kernel k) for active kernels, via XOR against
    // the resident bits with the reference streamed on K.
    void xor_distances(const std::vector<std::uint8_t>& ref,
                       const std::vector<std::uint8_t>& active,
                       std::vector<std::int64_t>& d, EnergyLedger* ledger) const;

    // ternary_vmm-based reference for xor_distances.
    void xor_distances_via_vmm(const std::vector<std::uint8_t>& ref,
                               const std::vector<std::uint8_t>& active,
                               std::vector<std::int64_t>& d) const;

    std::vector<CimBlock>& blocks() { return blocks_; }
    const std::vector<CimBlock>& blocks() const { return blocks_; }
    const CimBlock& block(int chunk, int group) const;
    CimBlock& block(int chunk, int group);

    int chunk_rows(int chunk) const;
    int chunk_offset(int chunk) const;

private:
    int n_kernels_;
    int kernel_len_;
    int chunk_capacity_;
    int data_cols_;
    int chunks_;
    int groups_;
    std::vector<CimBlock> blocks_; // [chunk * groups_ + group]
};

} // namespace cimsim
