#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cimsim/device.hpp"
#include "cimsim/energy.hpp"
#include "cimsim/rng.hpp"

namespace cimsim {

// Reconfigurable logic: OUT = X AND (W (op) K).
enum class LogicOp : std::uint8_t { NAND = 0, AND = 1, XOR = 2, OR = 3 };

const char* to_string(LogicOp op);

// Plain boolean definition of the W (op) K term; the oracle the
// reconfigurable unit is checked against.
bool logic_op(LogicOp op, bool w, bool k);

// Control bits of the reconfigurable unit. The unit behaves as a
// multiplexer on the stored bit: OUT' = INR when W=1, INL when W=0, and
// the (INR, INL) pair is derived from the requested operation and the K
// input so that OUT' == op(W, K) for every combination.
struct RuConfig {
    bool inr = false;
    bool inl = false;

    static RuConfig derive(LogicOp op, bool k);
};

inline bool ru_eval(bool w, RuConfig cfg) { return w ? cfg.inr : cfg.inl; }

// The chip's ternary gate: X AND (W (op) K), evaluated through the
// reconfigurable-unit control path.
inline bool compute_gate(bool x, bool w, bool k, LogicOp op) {
    return x && ru_eval(w, RuConfig::derive(op, k));
}

// Precharge-compute timing. Output lines hold their charge up to the
// critical delay; past it, leakage flips bits with a probability that
// grows toward 0.5.
struct TimingParams {
    double cycle_ns = 22.5;
    double leak_critical_us = 2.7;  // inclusive threshold
    double leak_slope_per_us = 3.0; // default puts BER at ~0.4995 by 5 us

    // 0 for delay <= leak_critical_us, else 0.5*(1-exp(-slope*(d-crit))).
    double ber(double delay_us) const;

    void validate() const;
};

struct Coord {
    int row = 0;
    int col = 0;

    auto operator<=>(const Coord&) const = default;
};

struct YieldReport {
    std::uint64_t ok = 0;
    std::uint64_t failed = 0;
    std::uint64_t repaired = 0;
    // cycle_histogram[c] = number of program_verify calls that used c
    // cycles (index 0 unused).
    std::vector<std::uint64_t> cycle_histogram;

    void merge(const YieldReport& other);
};

// A 512x32 1T1R block with the reference-comparator readout, the
// reconfigurable logic unit and two redundancy mechanisms: per-row spare
// columns (2 of every 32) and a backup region remap table.
class CimBlock {
public:
    static constexpr int kDefaultRows = 512;
    static constexpr int kDefaultCols = 32;
    static constexpr int kDefaultSparesPerBlock = 2;
    static constexpr int kDefaultBackupRows = 8;

    CimBlock(DeviceParams params, TimingParams timing, Rng rng,
             int rows = kDefaultRows, int cols = kDefaultCols,
             int spare_cols = kDefaultSparesPerBlock,
             int backup_rows = kDefaultBackupRows);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    // Columns carrying payload (spare columns excluded).
    int data_cols() const { return cols_ - spare_cols_; }
    // Rows available for payload (backup region excluded).
    int data_rows() const { return rows_ - backup_rows_; }

    const DeviceParams& device_params() const { return params_; }
    const TimingParams& timing() const { return timing_; }

    void attach_ledger(EnergyLedger* ledger) { ledger_ = ledger; }

    // Electroform every cell; returns the forming voltages in row-major
    // order. Cells in spare columns or the backup region come out of
    // forming with Spare status (reserved for repair).
    std::vector<double> form_all();

    // Programs every cell of the grid with program_verify and repairs the
    // failures. Throws RepairExhausted when a failure cannot be remapped.
    YieldReport program_block(const std::vector<std::vector<int>>& levels);

    // Programs one logical cell (remap-aware). Failures are repaired and
    // counted in the report.
    YieldReport program_cell(int row, int col, int target);

    // Differential write: skips the pulse when the cell already verified
    // at the target level.
    YieldReport program_cell_if_changed(int row, int col, int target);

    // Single-bit readout against interior reference j (boundary between
    // levels j and j+1): 1 iff the cell conducts more than the reference.
    bool read_bit(int row, int col, int rref_level) const;

    // Readout against the midpoint of the two extreme levels; the
    // binary-mode reference.
    bool read_bit_binary(int row, int col) const;

    // Quantized multilevel readout of a logical cell (remap-aware).
    int read_cell_level(int row, int col) const;

    // One row, all data columns in parallel: out[c] = x AND (W[row][c] op k).
    // Delay beyond the leakage threshold flips each output bit
    // independently with probability ber(delay).
    std::vector<std::uint8_t> compute_row_parallel(int row, bool x, bool k,
                                                   LogicOp op, double delay_us,
                                                   Rng& rng) const;

    // Column-accumulated ternary VMM at nominal delay:
    // result[c] = sum_r x[r] AND (W[r][c] op k[r]), for data columns.
    std::vector<int> ternary_vmm(const std::vector<std::uint8_t>& x_bits,
                                 const std::vector<std::uint8_t>& k_bits,
                                 LogicOp op) const;

    // Remaps a Failed logical cell onto a same-row spare column if one is
    // free, otherwise onto the next free backup-region cell; the
    // replacement is programmed to the failed cell's target level.
    // Returns the physical replacement coordinate.
    Coord repair(Coord coord);

    // repair() with programming statistics for yield accounting.
    YieldReport repair_report(Coord coord);

    // Fault injection: write pulses at this physical coordinate stop
    // taking effect.
    void inject_stuck_fault(int row, int col);

    const std::map<Coord, Coord>& remap_table() const { return remap_; }

    // Remap-resolved physical coordinate of a logical cell.
    Coord resolve(Coord coord) const;

    // Word-packed binary readout of one data column (bit r = binary read
    // of logical row r); rebuilt lazily after writes. Valid until the
    // next write to the block.
    const std::uint64_t* packed_column(int col) const;
    int packed_words() const { return (rows_ + 63) / 64; }

    const RramCell& cell_at(int row, int col) const;
    RramCell& cell_at(int row, int col);

    bool in_backup_region(Coord c) const;
    bool in_spare_cols(Coord c) const;

    // Versioned binary image: magic "CIMB", version/rows/cols u16 LE,
    // then one status byte + resistance f64 LE per cell, row-major.
    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static CimBlock load(std::istream& in, DeviceParams params,
                         TimingParams timing, Rng rng);
    static CimBlock load_file(const std::string& path, DeviceParams params,
                              TimingParams timing, Rng rng);

private:
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(cols_) +
               static_cast<std::size_t>(col);
    }
    bool reserved(Coord c) const { return in_backup_region(c) || in_spare_cols(c); }
    YieldReport program_physical(Coord phys, int target, bool claim);
    void rebuild_packed() const;
    std::optional<Coord> find_free_spare(int row) const;
    std::optional<Coord> find_free_backup() const;

    int rows_, cols_, spare_cols_, backup_rows_;
    DeviceParams params_;
    TimingParams timing_;
    Rng rng_;
    std::uint64_t program_seq_ = 0;
    std::vector<RramCell> cells_;
    std::map<Coord, Coord> remap_;
    std::set<Coord> claimed_; // current remap targets
    EnergyLedger* ledger_ = nullptr;

    // Packed binary view of the data columns (bit r of word pack_[c][r/64]
    // = binary readout of logical cell (r, c)); rebuilt lazily after
    // writes so VMM runs word-parallel.
    mutable std::vector<std::uint64_t> packed_;
    mutable bool packed_dirty_ = true;
};

} // namespace cimsim
