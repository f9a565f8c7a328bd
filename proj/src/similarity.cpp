#include "cimsim/similarity.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

#include "cimsim/bitslice.hpp"
#include "cimsim/errors.hpp"

namespace cimsim {

const char* to_string(Metric m) {
    return m == Metric::Hamming ? "hamming" : "euclid_sq";
}

KernelVector KernelVector::binary(std::vector<std::uint8_t> bits, int layer_id,
                                  int kernel_id) {
    KernelVector k;
    k.mode = KernelMode::Binary;
    k.bits = std::move(bits);
    k.layer_id = layer_id;
    k.kernel_id = kernel_id;
    return k;
}

KernelVector KernelVector::int8(std::vector<std::int8_t> elements, int layer_id,
                                int kernel_id) {
    KernelVector k;
    k.mode = KernelMode::Int8;
    k.elements = std::move(elements);
    for (auto e : k.elements) {
        if (e == -128) raise(Errc::OutOfRange, "kernel element -128 not representable");
    }
    k.layer_id = layer_id;
    k.kernel_id = kernel_id;
    return k;
}

double SimilarityMatrix::max_distance() const {
    if (metric == Metric::Hamming) return static_cast<double>(vector_len);
    return 254.0 * 254.0 * static_cast<double>(vector_len);
}

std::string SimilarityMatrix::to_csv() const {
    std::ostringstream out;
    out << "row,col,distance\n";
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            out << i << ',' << j << ',' << at(i, j) << '\n';
        }
    }
    return out.str();
}

std::string SimilarityMatrix::to_json_heatmap() const {
    nlohmann::json j;
    j["schema"] = "cimsim/similarity/v1";
    j["n"] = n;
    j["metric"] = to_string(metric);
    j["vector_len"] = vector_len;
    auto values = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        auto row = nlohmann::json::array();
        for (int jj = 0; jj < n; ++jj) row.push_back(at(i, jj));
        values.push_back(std::move(row));
    }
    j["values"] = std::move(values);
    return j.dump(2);
}

namespace {

// Programs a bit pattern down one column in binary mode (bit 1 = the
// most conductive level, bit 0 = the least conductive).
void store_bits_column(CimBlock& block, int col, const std::vector<std::uint8_t>& bits) {
    const int hrs = block.device_params().n_levels - 1;
    for (std::size_t r = 0; r < bits.size(); ++r) {
        block.program_cell(static_cast<int>(r), col, bits[r] ? 0 : hrs);
    }
}

} // namespace

std::int64_t hamming_cim(const KernelVector& a, const KernelVector& b,
                         CimBlock& block) {
    if (a.mode != KernelMode::Binary || b.mode != KernelMode::Binary) {
        raise(Errc::ModeMismatch, "hamming_cim: binary kernels required");
    }
    if (a.bits.size() != b.bits.size()) {
        raise(Errc::ShapeMismatch, "hamming_cim: length mismatch");
    }
    if (a.bits.size() > static_cast<std::size_t>(block.data_rows())) {
        raise(Errc::ShapeMismatch, "hamming_cim: kernel longer than the block rows");
    }
    store_bits_column(block, 0, a.bits);
    std::vector<std::uint8_t> x(static_cast<std::size_t>(block.rows()), 0);
    std::vector<std::uint8_t> k(static_cast<std::size_t>(block.rows()), 0);
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        x[i] = 1;
        k[i] = b.bits[i] ? 1 : 0;
    }
    const std::vector<int> counts = block.ternary_vmm(x, k, LogicOp::XOR);
    return counts[0];
}

std::int64_t euclid_sq_int8_cim(int x, int y, CimBlock& block, EnergyLedger* ledger) {
    const std::uint8_t xp = SlicedWeight::encode(x).pattern();
    const std::uint8_t yp = SlicedWeight::encode(y).pattern();

    // x's pattern lives in the array; y's drives the K input. XOR and AND
    // passes produce R_j and P_j for every bit position.
    std::vector<std::uint8_t> xbits(8), ybits(8);
    for (int j = 0; j < 8; ++j) {
        xbits[static_cast<std::size_t>(j)] = (xp >> j) & 1;
        ybits[static_cast<std::size_t>(j)] = (yp >> j) & 1;
    }
    store_bits_column(block, 0, xbits);

    std::uint8_t r_bits = 0, p_bits = 0;
    for (int j = 0; j < 8; ++j) {
        const bool xj = block.read_bit_binary(j, 0);
        const bool yj = ybits[static_cast<std::size_t>(j)];
        if (compute_gate(true, xj, yj, LogicOp::XOR)) r_bits |= std::uint8_t(1 << j);
        if (compute_gate(true, xj, yj, LogicOp::AND)) p_bits |= std::uint8_t(1 << j);
    }
    if (ledger) ledger->add_gates(16);

    // Reconstruction of x - y from {P_j, R_j, x_j}. Where R_j = 1 the
    // magnitude bits contribute (2*x_j - 1) * 2^j and cancel elsewhere;
    // opposite signs instead need |x| + |y|, whose bitwise sum is
    // sum_j (R_j + 2*P_j) * 2^j.
    const bool sx = (xp >> 7) & 1;
    std::int64_t diff;
    if (((r_bits >> 7) & 1) == 0) {
        std::int64_t mag_diff = 0; // |x| - |y|
        for (int j = 0; j < 7; ++j) {
            if ((r_bits >> j) & 1) {
                mag_diff += (((xp >> j) & 1) ? 1 : -1) * (1LL << j);
            }
        }
        diff = sx ? -mag_diff : mag_diff;
    } else {
        std::int64_t mag_sum = 0; // |x| + |y|
        for (int j = 0; j < 7; ++j) {
            mag_sum += (((r_bits >> j) & 1) + 2 * ((p_bits >> j) & 1)) * (1LL << j);
        }
        diff = sx ? -mag_sum : mag_sum;
    }
    return diff * diff;
}

std::int64_t kernel_distance(const KernelVector& a, const KernelVector& b,
                             CimBlock& block, EnergyLedger* ledger) {
    if (a.mode != b.mode) raise(Errc::ModeMismatch, "kernel_distance: mode mismatch");
    if (a.size() != b.size()) raise(Errc::ShapeMismatch, "kernel_distance: shape mismatch");
    std::int64_t total = 0;
    if (a.mode == KernelMode::Binary) {
        const std::size_t chunk = static_cast<std::size_t>(block.data_rows());
        for (std::size_t off = 0; off < a.bits.size(); off += chunk) {
            const std::size_t len = std::min(chunk, a.bits.size() - off);
            KernelVector ca = KernelVector::binary(
                {a.bits.begin() + static_cast<std::ptrdiff_t>(off),
                 a.bits.begin() + static_cast<std::ptrdiff_t>(off + len)});
            KernelVector cb = KernelVector::binary(
                {b.bits.begin() + static_cast<std::ptrdiff_t>(off),
                 b.bits.begin() + static_cast<std::ptrdiff_t>(off + len)});
            total += hamming_cim(ca, cb, block);
        }
    } else {
        for (std::size_t i = 0; i < a.elements.size(); ++i) {
            total += euclid_sq_int8_cim(a.elements[i], b.elements[i], block, ledger);
        }
    }
    if (ledger) ledger->add_search_passes(1);
    return total;
}

SimilarityMatrix similarity_matrix(const std::vector<KernelVector>& kernels,
                                   CimBlock& block, EnergyLedger* ledger) {
    if (kernels.size() < 2) {
        raise(Errc::ShapeMismatch, "similarity_matrix: need at least two kernels");
    }
    for (const auto& k : kernels) {
        if (k.mode != kernels.front().mode || k.size() != kernels.front().size()) {
            raise(Errc::ModeMismatch, "similarity_matrix: kernels must be homogeneous");
        }
    }
    SimilarityMatrix sm;
    sm.n = static_cast<int>(kernels.size());
    sm.metric = kernels.front().mode == KernelMode::Binary ? Metric::Hamming
                                                           : Metric::EuclidSq;
    sm.vector_len = kernels.front().size();
    sm.d.assign(static_cast<std::size_t>(sm.n) * sm.n, 0);
    for (int i = 0; i < sm.n; ++i) {
        for (int j = i + 1; j < sm.n; ++j) {
            sm.set(i, j, kernel_distance(kernels[static_cast<std::size_t>(i)],
                                         kernels[static_cast<std::size_t>(j)], block,
                                         ledger));
        }
    }
    return sm;
}

} // namespace cimsim
