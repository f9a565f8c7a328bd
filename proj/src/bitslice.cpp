#include "cimsim/bitslice.hpp"

#include <cmath>
#include <cstdlib>

#include "cimsim/errors.hpp"

namespace cimsim {

SlicedWeight SlicedWeight::encode(int v) {
    if (v < -127 || v > 127) {
        raise(Errc::OutOfRange, "encode_int8: value outside [-127, 127]");
    }
    SlicedWeight w;
    w.sign = v < 0;
    const std::uint8_t mag = static_cast<std::uint8_t>(std::abs(v));
    const std::uint8_t pattern = static_cast<std::uint8_t>((w.sign ? 0x80 : 0x00) | mag);
    for (int s = 0; s < 4; ++s) {
        w.segments[static_cast<std::size_t>(s)] =
            static_cast<std::uint8_t>((pattern >> (2 * s)) & 0x3);
    }
    return w;
}

std::uint8_t SlicedWeight::pattern() const {
    std::uint8_t p = 0;
    for (int s = 0; s < 4; ++s) {
        p = static_cast<std::uint8_t>(p | (segments[static_cast<std::size_t>(s)] << (2 * s)));
    }
    return p;
}

std::uint8_t SlicedWeight::magnitude() const {
    return static_cast<std::uint8_t>(pattern() & 0x7F);
}

int SlicedWeight::decode() const {
    const int mag = magnitude();
    return (pattern() & 0x80) ? -mag : mag;
}

void MacAccumulator::add(const MacResult& r) { add_value(r.value()); }

void MacAccumulator::add_value(std::int64_t v) {
    sum_ += v;
    if (sum_ > kMagnitudeBound || sum_ < -kMagnitudeBound) {
        raise(Errc::AccumulatorOverflow, "accumulator magnitude bound exceeded");
    }
}

MacResult MacAccumulator::result() const {
    MacResult r;
    r.negative = sum_ < 0;
    r.magnitude = sum_ < 0 ? -sum_ : sum_;
    return r;
}

YieldReport store_weight(CimBlock& block, int row, int col_start,
                         const SlicedWeight& w) {
    if (block.device_params().n_levels != 4) {
        raise(Errc::ModeMismatch, "store_weight: block must hold 4-level cells");
    }
    if (col_start < 0 || col_start + 4 > block.data_cols()) {
        raise(Errc::OutOfRange, "store_weight: column group outside the data columns");
    }
    YieldReport report;
    for (int i = 0; i < 4; ++i) {
        // Most significant segment in the leftmost column of the span.
        report.merge(block.program_cell(row, col_start + i,
                                        w.segments[static_cast<std::size_t>(3 - i)]));
    }
    return report;
}

SlicedWeight load_weight(const CimBlock& block, int row, int col_start) {
    SlicedWeight w;
    for (int i = 0; i < 4; ++i) {
        w.segments[static_cast<std::size_t>(3 - i)] =
            static_cast<std::uint8_t>(block.read_cell_level(row, col_start + i));
    }
    w.sign = (w.segments[3] & 0x2) != 0;
    return w;
}

MacResult cim_multiply(int x, const CimBlock& block, int row, int col_start,
                       EnergyLedger* ledger) {
    const SlicedWeight xe = SlicedWeight::encode(x);
    const SlicedWeight w = load_weight(block, row, col_start);

    // Sign: XOR gate on the two sign bits, gated by X=1.
    const bool w_sign = (w.segments[3] & 0x2) != 0;
    const bool sign = compute_gate(true, w_sign, xe.sign, LogicOp::XOR);

    // Magnitude: input magnitude bits serially against all weight segment
    // bits through AND gates, combined with place-value shifts.
    std::int64_t magnitude = 0;
    std::uint64_t gates = 1;
    for (int b = 0; b < 7; ++b) {
        const bool x_bit = (xe.magnitude() >> b) & 1;
        for (int s = 0; s < 4; ++s) {
            const std::uint8_t seg = w.seg_mag(s);
            for (int j = 0; j < 2; ++j) {
                const bool w_bit = (seg >> j) & 1;
                ++gates;
                if (compute_gate(x_bit, w_bit, true, LogicOp::AND)) {
                    magnitude += 1LL << (b + 2 * s + j);
                }
            }
        }
    }
    if (ledger) {
        ledger->add_gates(gates);
        ledger->add_shift_add(7);
    }

    MacResult r;
    r.magnitude = magnitude;
    r.negative = sign && magnitude != 0; // -0 normalizes to +0
    return r;
}

MacResult cim_dot(const std::vector<int>& x, const CimBlock& block, int col_start,
                  int row_start, EnergyLedger* ledger) {
    MacAccumulator acc;
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc.add(cim_multiply(x[i], block, row_start + static_cast<int>(i), col_start,
                             ledger));
    }
    if (ledger) ledger->add_accumulations(x.size());
    return acc.result();
}

IntImage conv2d_lowered(const Int8Image& input,
                        const std::vector<StoredKernel>& kernels,
                        const std::vector<std::uint8_t>& active, int kh, int kw,
                        int stride, int pad, EnergyLedger* ledger) {
    if (active.size() != kernels.size()) {
        raise(Errc::ShapeMismatch, "conv2d_lowered: active mask size mismatch");
    }
    const int patch_len = input.c * kh * kw;
    for (const auto& k : kernels) {
        if (k.length != patch_len) {
            raise(Errc::ShapeMismatch, "conv2d_lowered: kernel/input channel mismatch");
        }
    }
    if (stride < 1 || pad < 0) raise(Errc::OutOfRange, "conv2d_lowered: bad stride/pad");
    const int h_out = (input.h + 2 * pad - kh) / stride + 1;
    const int w_out = (input.w + 2 * pad - kw) / stride + 1;
    if (h_out < 1 || w_out < 1) raise(Errc::ShapeMismatch, "conv2d_lowered: empty output");

    int c_out = 0;
    for (auto a : active) c_out += a ? 1 : 0;

    IntImage out;
    out.c = c_out;
    out.h = h_out;
    out.w = w_out;
    out.v.assign(static_cast<std::size_t>(c_out) * h_out * w_out, 0);

    std::vector<int> patch(static_cast<std::size_t>(patch_len));
    for (int y = 0; y < h_out; ++y) {
        for (int x = 0; x < w_out; ++x) {
            int idx = 0;
            for (int ci = 0; ci < input.c; ++ci) {
                for (int dy = 0; dy < kh; ++dy) {
                    for (int dx = 0; dx < kw; ++dx) {
                        const int sy = y * stride + dy - pad;
                        const int sx = x * stride + dx - pad;
                        patch[static_cast<std::size_t>(idx++)] =
                            (sy < 0 || sy >= input.h || sx < 0 || sx >= input.w)
                                ? 0
                                : input.at(ci, sy, sx);
                    }
                }
            }
            int oc = 0;
            for (std::size_t ki = 0; ki < kernels.size(); ++ki) {
                if (!active[ki]) continue;
                const auto& k = kernels[ki];
                out.at(oc, y, x) =
                    cim_dot(patch, *k.block, k.col_start, k.row_start, ledger).value();
                ++oc;
            }
        }
    }
    return out;
}

std::vector<int> binary_vmm(const CimBlock& block,
                            const std::vector<std::uint8_t>& x_bits) {
    const std::vector<std::uint8_t> ones(static_cast<std::size_t>(block.rows()), 1);
    return block.ternary_vmm(x_bits, ones, LogicOp::AND);
}

} // namespace cimsim
