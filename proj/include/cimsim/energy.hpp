#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

namespace cimsim {

// Per-module power/energy/area entry. Energy is per 64-lane operation
// (parallel 64-bit AND plus the shift and accumulation that finish it).
struct ModulePower {
    std::string name;
    double power_mw = 0.0;
    double energy_pj_per_64bit_op = 0.0;
    double area_mm2 = 0.0;
};

// The seven chip modules with their measured defaults.
std::vector<ModulePower> default_module_powers();

double total_power_mw(const std::vector<ModulePower>& modules);
double total_energy_pj_per_64bit_op(const std::vector<ModulePower>& modules);

enum class AccountingMode { PowerTimed, TablePerOp };

// Primitive-operation counters. Monotone within a run; safe to bump from
// parallel compute lanes.
class EnergyLedger {
public:
    std::atomic<std::uint64_t> gate_evals{0};
    std::atomic<std::uint64_t> lane64_ops{0};
    std::atomic<std::uint64_t> shift_add_passes{0};
    std::atomic<std::uint64_t> accumulations{0};
    std::atomic<std::uint64_t> cell_writes{0};
    std::atomic<std::uint64_t> search_passes{0};

    AccountingMode accounting_mode = AccountingMode::PowerTimed;

    void add_gates(std::uint64_t n) {
        gate_evals.fetch_add(n, std::memory_order_relaxed);
        lane64_ops.fetch_add((n + 63) / 64, std::memory_order_relaxed);
    }
    void add_shift_add(std::uint64_t n) {
        shift_add_passes.fetch_add(n, std::memory_order_relaxed);
    }
    void add_accumulations(std::uint64_t n) {
        accumulations.fetch_add(n, std::memory_order_relaxed);
    }
    void add_cell_writes(std::uint64_t n) {
        cell_writes.fetch_add(n, std::memory_order_relaxed);
    }
    void add_search_passes(std::uint64_t n) {
        search_passes.fetch_add(n, std::memory_order_relaxed);
    }

    void reset();
};

// MAC count of a convolutional layer; the factor 2 covers multiply and
// accumulate.
std::uint64_t ops_conv(std::uint64_t c_in, std::uint64_t c_out,
                       std::uint64_t kh, std::uint64_t kw,
                       std::uint64_t h_out, std::uint64_t w_out);

// MAC count of a fully connected layer with a w_h x w_w weight matrix.
std::uint64_t ops_fc(std::uint64_t w_h, std::uint64_t w_w);

// Power-timed energy per operation: total power x cycle time / lanes.
// Defaults give 70.17 pJ/OP.
double system_energy_per_op_pj(const std::vector<ModulePower>& modules,
                               double cycle_ns, int lanes = 64);
double system_energy_per_op_pj(); // all defaults

// Table-driven energy per operation: per-64-lane-op energy sum / lanes.
double table_energy_per_op_pj(const std::vector<ModulePower>& modules,
                              int lanes = 64);
double table_energy_per_op_pj();

// Dynamic voltage/frequency scaling: e * (v/v0)^2 * (f0/f).
double scale_energy_pj(double e_pj, double v, double f_hz,
                       double v0 = 3.3, double f0_hz = 100.0e6);

struct GpuBaseline {
    double power_w = 450.0;
    double peak_int8_tops = 660.6;
};

// Energy per INT8 operation of the GPU baseline, pJ. Defaults: 0.6812.
double gpu_energy_per_op_pj(const GpuBaseline& gpu = {});

// Ops description of one network layer for the energy report.
struct LayerOps {
    std::string name;
    bool is_conv = true;
    // conv: c_in/c_out/kh/kw/h_out/w_out; active counts give the pruned
    // channel numbers (equal to the nominal ones when nothing is pruned).
    std::uint64_t c_in = 0, c_out = 0, kh = 0, kw = 0, h_out = 0, w_out = 0;
    std::uint64_t active_c_in = 0, active_c_out = 0;
    // fc: weight matrix dims.
    std::uint64_t w_h = 0, w_w = 0;

    std::uint64_t ops_unpruned() const;
    std::uint64_t ops_pruned() const;
};

struct PlatformEnergy {
    std::string platform;
    std::uint64_t conv_ops = 0;
    std::uint64_t fc_ops = 0;
    double energy_pj_raw = 0.0;    // power-timed per-op accounting
    double energy_pj_table = 0.0;  // table-per-op accounting; differs from
                                   // the power-timed column
    double energy_pj_scaled = 0.0; // voltage/frequency scaled per-op energy
    double reduction_vs_gpu_pct = 0.0;
    double reduction_vs_unpruned_pct = 0.0;
};

struct EnergyReport {
    std::vector<PlatformEnergy> rows; // GPU baseline, CIM unpruned, CIM pruned
    double conv_ops_reduction_pct = 0.0;
    std::string footnote;

    std::string to_json() const;
    std::string to_csv() const;
};

struct EnergyModelConfig {
    std::vector<ModulePower> modules = default_module_powers();
    double cycle_ns = 22.5;
    int lanes = 64;
    double scaled_v = 0.8;
    double scaled_f_hz = 1.8e9;
    double v0 = 3.3;
    double f0_hz = 100.0e6;
    GpuBaseline gpu;
};

// Per-platform inference energy comparison. Linear in ops, so the
// pruned-vs-unpruned reduction equals the conv ops reduction exactly.
EnergyReport inference_energy_report(const std::vector<LayerOps>& layers,
                                     const EnergyModelConfig& cfg = {});

} // namespace cimsim
