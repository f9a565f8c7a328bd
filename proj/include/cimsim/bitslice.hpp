#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cimsim/block.hpp"

namespace cimsim {

// Sign-magnitude INT8 value split into four 2-bit cell segments.
// Bit 7 of the pattern is the sign, bits 6..0 the magnitude; segment s
// holds pattern bits [2s+1 : 2s], so segment 3's upper bit is the sign.
struct SlicedWeight {
    bool sign = false;
    std::array<std::uint8_t, 4> segments{};

    // Throws OutOfRange for |v| > 127 (-128 is not representable in
    // sign-magnitude). -0 normalizes to +0.
    static SlicedWeight encode(int v);

    int decode() const;
    std::uint8_t pattern() const;
    std::uint8_t magnitude() const;

    // Segment value with the sign bit masked out (affects segment 3 only).
    std::uint8_t seg_mag(int s) const {
        return s == 3 ? static_cast<std::uint8_t>(segments[3] & 0x1)
                      : segments[static_cast<std::size_t>(s)];
    }
};

// Sign-magnitude MAC output. A single product fits the 16-bit
// presentation (bit 15 sign, bits 14..0 magnitude); dot products widen
// the magnitude field.
struct MacResult {
    bool negative = false;
    std::int64_t magnitude = 0;

    std::int64_t value() const { return negative ? -magnitude : magnitude; }
};

// Widened accumulator: 24-bit magnitude, covering 512-length dot products
// of 14-bit products with margin. Overflow is detected, never wrapped.
class MacAccumulator {
public:
    static constexpr std::int64_t kMagnitudeBound = (1 << 24) - 1;

    void add(const MacResult& r);
    void add_value(std::int64_t v);
    MacResult result() const;

private:
    std::int64_t sum_ = 0;
};

// Stores one weight as four INT2 cells at columns
// [col_start, col_start+4), most significant segment first. The block
// must be configured with 4 levels. Failures are repaired in place.
YieldReport store_weight(CimBlock& block, int row, int col_start,
                         const SlicedWeight& w);

// Reads a stored weight back through the quantized readout.
SlicedWeight load_weight(const CimBlock& block, int row, int col_start);

// Bit-serial INT8 multiply against a stored 4-cell weight group: the sign
// comes from an XOR gate on the two sign bits, the magnitude from AND
// gates between input magnitude bits and weight segment bits feeding the
// shift-and-adder. Exactly equal to the integer product.
MacResult cim_multiply(int x, const CimBlock& block, int row, int col_start,
                       EnergyLedger* ledger = nullptr);

// Dot product of an input vector against a stored column of weights
// (rows row_start..row_start+len-1). Throws AccumulatorOverflow if the
// widened bound is exceeded.
MacResult cim_dot(const std::vector<int>& x, const CimBlock& block,
                  int col_start, int row_start = 0,
                  EnergyLedger* ledger = nullptr);

// Channel-major int8 feature map.
struct Int8Image {
    int c = 0, h = 0, w = 0;
    std::vector<std::int8_t> v;

    std::int8_t at(int ci, int y, int x) const {
        return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
    }
};

// Channel-major wide-int feature map (conv outputs).
struct IntImage {
    int c = 0, h = 0, w = 0;
    std::vector<std::int64_t> v;

    std::int64_t& at(int ci, int y, int x) {
        return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
    }
    std::int64_t at(int ci, int y, int x) const {
        return v[(static_cast<std::size_t>(ci) * h + y) * w + x];
    }
};

// Placement of one stored kernel: a column of weights.
struct StoredKernel {
    const CimBlock* block = nullptr;
    int col_start = 0;
    int row_start = 0;
    int length = 0; // weights in the column = c_in * kh * kw
};

// im2col lowering of an INT8 convolution onto stored kernels. Kernels
// with active[k] == 0 produce no output channel and no ledger counts.
IntImage conv2d_lowered(const Int8Image& input,
                        const std::vector<StoredKernel>& kernels,
                        const std::vector<std::uint8_t>& active, int kh, int kw,
                        int stride, int pad, EnergyLedger* ledger = nullptr);

// Binary VMM used by the binarized CNN forward pass: AND against the
// stored bits with K held at 1, column-accumulated.
std::vector<int> binary_vmm(const CimBlock& block,
                            const std::vector<std::uint8_t>& x_bits);

} // namespace cimsim
