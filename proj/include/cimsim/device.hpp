#pragma once

#include <cstdint>
#include <vector>

#include "cimsim/rng.hpp"

namespace cimsim {

// Resistance of a virgin (never formed) cell, in kOhm.
inline constexpr double kVirginResistanceKohm = 1.0e6;

// Behavioral parameters of one multilevel 1T1R cell.
//
// Each write attempt re-draws the cell resistance as the target level's
// nominal value plus Gaussian programming noise; the model reproduces the
// measured terminal write distribution rather than filament dynamics.
struct DeviceParams {
    double program_sigma = 0.8793;   // write noise std-dev, kOhm
    double tolerance = 2.0;          // verify half-window, kOhm
    double form_mean_v = 1.89;       // electroforming voltage mean, V
    double form_sigma_v = 0.18;      // electroforming voltage std-dev, V
    int max_verify_cycles = 8;       // write attempts before giving up
    std::uint64_t endurance_limit = 1'000'000; // lifetime set/reset budget
    int n_levels = 4;
    // Nominal level resistances in kOhm, ascending (level 0 is the most
    // conductive state). Defaults are linearly spaced in conductance with
    // adjacent levels separated by at least 3x tolerance.
    std::vector<double> level_resistances;

    DeviceParams() { level_resistances = default_levels(n_levels, tolerance); }

    static DeviceParams with_levels(int n);
    static std::vector<double> default_levels(int n, double tolerance);

    // Throws SimError(BadConfig) on violated invariants (positive sigma and
    // tolerance, >=2 monotone levels separated by more than 2x tolerance).
    void validate() const;

    // Midpoint resistance between adjacent levels `j` and `j+1`; the j-th
    // readout reference. j in [0, n_levels-2].
    double boundary_resistance(int j) const;
};

enum class CellStatus : std::uint8_t {
    Unformed = 0,
    Ok = 1,
    Failed = 2,
    Spare = 3,
};

// One 1T1R cell. Plain value type; a seeded Rng substream per cell keeps
// parallel evaluation deterministic.
struct RramCell {
    CellStatus status = CellStatus::Unformed;
    int target_level = -1; // -1 = none
    double resistance = kVirginResistanceKohm; // kOhm
    int verify_cycles_last = 0;
    std::uint64_t switch_count = 0;
    bool stuck = false; // fault injection: write pulses never move the cell
};

enum class ProgramOutcome : std::uint8_t {
    Ok = 0,
    Failed = 1,            // verify window missed for max_verify_cycles
    EnduranceExceeded = 2, // switching budget exhausted; cell failed
};

struct ProgramResult {
    int cycles_used = 0;
    ProgramOutcome outcome = ProgramOutcome::Ok;

    bool ok() const { return outcome == ProgramOutcome::Ok; }
};

// Electroforming. Always succeeds; the cell lands on a uniformly random
// level perturbed by programming noise (stochastic initial weight).
// Returns the forming voltage for statistics. Throws AlreadyFormed.
double form(RramCell& cell, const DeviceParams& params, Rng& rng);

// Closed-loop program-and-verify. One cycle = one write pulse followed by
// one verify read; the loop always issues at least one write and stops as
// soon as the resistance is inside the tolerance window. A cell that
// misses the window max_verify_cycles times, or runs out of endurance, is
// marked Failed and must be repaired by the caller.
ProgramResult program_verify(RramCell& cell, int target,
                             const DeviceParams& params, Rng& rng);

// Quantized readout: index of the resistance interval containing the cell
// resistance, thresholds at midpoints between adjacent nominal levels.
// Deterministic. Throws ReadFromFailed / ReadFromUnformed.
int read_level(const RramCell& cell, const DeviceParams& params);

} // namespace cimsim
