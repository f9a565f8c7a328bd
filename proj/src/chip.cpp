#include "cimsim/chip.hpp"

#include <bit>

#include "cimsim/errors.hpp"

namespace cimsim {

LayerChip::LayerChip(int n_kernels, int kernel_len, const DeviceParams& dev,
                     const TimingParams& timing, const Rng& rng)
    : n_kernels_(n_kernels), kernel_len_(kernel_len) {
    if (dev.n_levels != 2) {
        raise(Errc::ModeMismatch, "LayerChip: binary blocks need 2-level cells");
    }
    CimBlock probe(dev, timing, rng.substream(0));
    chunk_capacity_ = probe.data_rows();
    data_cols_ = probe.data_cols();
    chunks_ = (kernel_len_ + chunk_capacity_ - 1) / chunk_capacity_;
    groups_ = (n_kernels_ + data_cols_ - 1) / data_cols_;
    blocks_.reserve(static_cast<std::size_t>(chunks_) * groups_);
    for (int c = 0; c < chunks_; ++c) {
        for (int g = 0; g < groups_; ++g) {
            blocks_.emplace_back(dev, timing, rng.substream(static_cast<std::uint64_t>(c) * 64 + g + 1));
            blocks_.back().form_all();
        }
    }
}

const CimBlock& LayerChip::block(int chunk, int group) const {
    return blocks_[static_cast<std::size_t>(chunk) * groups_ + group];
}

CimBlock& LayerChip::block(int chunk, int group) {
    return blocks_[static_cast<std::size_t>(chunk) * groups_ + group];
}

int LayerChip::chunk_rows(int chunk) const {
    const int off = chunk * chunk_capacity_;
    return std::min(chunk_capacity_, kernel_len_ - off);
}

int LayerChip::chunk_offset(int chunk) const { return chunk * chunk_capacity_; }

void LayerChip::program(const std::vector<std::uint8_t>& bits,
                        const std::vector<std::uint8_t>& active) {
    if (bits.size() != static_cast<std::size_t>(n_kernels_) * kernel_len_ ||
        active.size() != static_cast<std::size_t>(n_kernels_)) {
        raise(Errc::ShapeMismatch, "LayerChip::program: size mismatch");
    }
    const int hrs = 1; // 2-level block: level 0 = bit 1, level 1 = bit 0
    for (int k = 0; k < n_kernels_; ++k) {
        if (!active[static_cast<std::size_t>(k)]) continue;
        const int g = k / data_cols_;
        const int col = k % data_cols_;
        const std::uint8_t* kbits = bits.data() + static_cast<std::size_t>(k) * kernel_len_;
        for (int c = 0; c < chunks_; ++c) {
            CimBlock& b = block(c, g);
            const int off = chunk_offset(c);
            const int len = chunk_rows(c);
            for (int r = 0; r < len; ++r) {
                b.program_cell_if_changed(r, col, kbits[off + r] ? 0 : hrs);
            }
        }
    }
}

void LayerChip::conv_counts(const std::vector<std::int32_t>& patch,
                            const std::vector<std::uint8_t>& active, int input_bits,
                            std::vector<std::int64_t>& acc,
                            EnergyLedger* ledger) const {
    if (patch.size() != static_cast<std::size_t>(kernel_len_)) {
        raise(Errc::ShapeMismatch, "conv_counts: patch length mismatch");
    }
    acc.assign(static_cast<std::size_t>(n_kernels_), 0);

    const int words = blocks_.front().packed_words();
    // One bit-plane of the patch per AND pass, packed along the rows.
    thread_local std::vector<std::uint64_t> planes;
    planes.assign(static_cast<std::size_t>(input_bits) * words, 0);
    for (int c = 0; c < chunks_; ++c) {
        const int off = chunk_offset(c);
        const int len = chunk_rows(c);
        std::fill(planes.begin(), planes.end(), 0);
        for (int r = 0; r < len; ++r) {
            std::uint32_t v = static_cast<std::uint32_t>(patch[static_cast<std::size_t>(off + r)]);
            while (v != 0) {
                const int t = std::countr_zero(v);
                v &= v - 1;
                planes[static_cast<std::size_t>(t) * words + static_cast<std::size_t>(r / 64)] |=
                    1ULL << (r % 64);
            }
        }
        for (int k = 0; k < n_kernels_; ++k) {
            if (!active[static_cast<std::size_t>(k)]) continue;
            const std::uint64_t* w = block(c, k / data_cols_).packed_column(k % data_cols_);
            std::int64_t sum = 0;
            for (int t = 0; t < input_bits; ++t) {
                const std::uint64_t* x = &planes[static_cast<std::size_t>(t) * words];
                int cnt = 0;
                for (int i = 0; i * 64 < len; ++i) cnt += std::popcount(x[i] & w[i]);
                sum += static_cast<std::int64_t>(cnt) << t;
            }
            acc[static_cast<std::size_t>(k)] += sum;
        }
    }
    if (ledger) {
        std::uint64_t n_active = 0;
        for (auto a : active) n_active += a ? 1 : 0;
        ledger->add_gates(static_cast<std::uint64_t>(kernel_len_) * n_active *
                          static_cast<std::uint64_t>(input_bits));
        ledger->add_shift_add(n_active * static_cast<std::uint64_t>(input_bits));
        ledger->add_accumulations(n_active);
    }
}

void LayerChip::conv_counts_via_vmm(const std::vector<std::int32_t>& patch,
                                    const std::vector<std::uint8_t>& active,
                                    int input_bits,
                                    std::vector<std::int64_t>& acc) const {
    acc.assign(static_cast<std::size_t>(n_kernels_), 0);
    for (int c = 0; c < chunks_; ++c) {
        const int off = chunk_offset(c);
        const int len = chunk_rows(c);
        const int rows = block(c, 0).rows();
        std::vector<std::uint8_t> x(static_cast<std::size_t>(rows), 0);
        const std::vector<std::uint8_t> ones(static_cast<std::size_t>(rows), 1);
        for (int t = 0; t < input_bits; ++t) {
            for (int r = 0; r < len; ++r) {
                x[static_cast<std::size_t>(r)] =
                    static_cast<std::uint8_t>((patch[static_cast<std::size_t>(off + r)] >> t) & 1);
            }
            for (int g = 0; g < groups_; ++g) {
                const std::vector<int> counts = block(c, g).ternary_vmm(x, ones, LogicOp::AND);
                for (int col = 0; col < data_cols_; ++col) {
                    const int k = g * data_cols_ + col;
                    if (k >= n_kernels_ || !active[static_cast<std::size_t>(k)]) continue;
                    acc[static_cast<std::size_t>(k)] +=
                        static_cast<std::int64_t>(counts[static_cast<std::size_t>(col)]) << t;
                }
            }
        }
    }
}

void LayerChip::xor_distances(const std::vector<std::uint8_t>& ref,
                              const std::vector<std::uint8_t>& active,
                              std::vector<std::int64_t>& d,
                              EnergyLedger* ledger) const {
    if (ref.size() != static_cast<std::size_t>(kernel_len_)) {
        raise(Errc::ShapeMismatch, "xor_distances: reference length mismatch");
    }
    d.assign(static_cast<std::size_t>(n_kernels_), 0);
    const int words = blocks_.front().packed_words();
    std::vector<std::uint64_t> rw(static_cast<std::size_t>(words));
    for (int c = 0; c < chunks_; ++c) {
        const int off = chunk_offset(c);
        const int len = chunk_rows(c);
        std::fill(rw.begin(), rw.end(), 0);
        for (int r = 0; r < len; ++r) {
            if (ref[static_cast<std::size_t>(off + r)]) rw[static_cast<std::size_t>(r / 64)] |= 1ULL << (r % 64);
        }
        for (int k = 0; k < n_kernels_; ++k) {
            if (!active[static_cast<std::size_t>(k)]) continue;
            const std::uint64_t* w = block(c, k / data_cols_).packed_column(k % data_cols_);
            std::int64_t sum = 0;
            for (int i = 0; i * 64 < len; ++i) {
                std::uint64_t term = w[i] ^ rw[static_cast<std::size_t>(i)];
                const int tail = len - i * 64;
                if (tail < 64) term &= (1ULL << tail) - 1;
                sum += std::popcount(term);
            }
            d[static_cast<std::size_t>(k)] += sum;
        }
    }
    if (ledger) {
        std::uint64_t n_active = 0;
        for (auto a : active) n_active += a ? 1 : 0;
        ledger->add_gates(static_cast<std::uint64_t>(kernel_len_) * n_active);
        ledger->add_accumulations(n_active);
    }
}

void LayerChip::xor_distances_via_vmm(const std::vector<std::uint8_t>& ref,
                                      const std::vector<std::uint8_t>& active,
                                      std::vector<std::int64_t>& d) const {
    d.assign(static_cast<std::size_t>(n_kernels_), 0);
    for (int c = 0; c < chunks_; ++c) {
        const int off = chunk_offset(c);
        const int len = chunk_rows(c);
        const int rows = block(c, 0).rows();
        std::vector<std::uint8_t> x(static_cast<std::size_t>(rows), 0);
        std::vector<std::uint8_t> k_bits(static_cast<std::size_t>(rows), 0);
        for (int r = 0; r < len; ++r) {
            x[static_cast<std::size_t>(r)] = 1;
            k_bits[static_cast<std::size_t>(r)] = ref[static_cast<std::size_t>(off + r)] ? 1 : 0;
        }
        for (int g = 0; g < groups_; ++g) {
            const std::vector<int> counts = block(c, g).ternary_vmm(x, k_bits, LogicOp::XOR);
            for (int col = 0; col < data_cols_; ++col) {
                const int k = g * data_cols_ + col;
                if (k >= n_kernels_ || !active[static_cast<std::size_t>(k)]) continue;
                d[static_cast<std::size_t>(k)] += counts[static_cast<std::size_t>(col)];
            }
        }
    }
}

} // namespace cimsim
