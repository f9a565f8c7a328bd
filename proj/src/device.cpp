#include "cimsim/device.hpp"

#include <algorithm>
#include <cmath>

#include "cimsim/errors.hpp"

namespace cimsim {

std::vector<double> DeviceParams::default_levels(int n, double tolerance) {
    // Linear spacing in conductance. The tightest resistance gap sits at
    // the most conductive end; anchor it at 3x tolerance so every pair of
    // adjacent levels clears the 2x-tolerance separability requirement.
    const double gap = 3.0 * tolerance;
    const double r0 = std::max(100.0, 1.5 * gap * static_cast<double>(n - 1));
    const double g0 = 1.0 / r0;
    const double dg = gap / (r0 * (r0 + gap));
    std::vector<double> levels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        levels[static_cast<std::size_t>(i)] = 1.0 / (g0 - dg * i);
    }
    return levels;
}

DeviceParams DeviceParams::with_levels(int n) {
    DeviceParams p;
    p.n_levels = n;
    p.level_resistances = default_levels(n, p.tolerance);
    return p;
}

void DeviceParams::validate() const {
    if (program_sigma <= 0.0) raise(Errc::BadConfig, "program_sigma must be > 0");
    if (tolerance <= 0.0) raise(Errc::BadConfig, "tolerance must be > 0");
    if (form_sigma_v < 0.0) raise(Errc::BadConfig, "form_sigma_v must be >= 0");
    if (max_verify_cycles < 1) raise(Errc::BadConfig, "max_verify_cycles must be >= 1");
    if (n_levels < 2) raise(Errc::BadConfig, "n_levels must be >= 2");
    if (level_resistances.size() != static_cast<std::size_t>(n_levels)) {
        raise(Errc::BadConfig, "level_resistances must have n_levels entries");
    }
    for (std::size_t i = 0; i + 1 < level_resistances.size(); ++i) {
        const double lo = level_resistances[i];
        const double hi = level_resistances[i + 1];
        if (!(lo > 0.0) || !(hi > lo)) {
            raise(Errc::BadConfig, "level_resistances must be positive and strictly increasing");
        }
        if (hi - lo <= 2.0 * tolerance) {
            raise(Errc::BadConfig, "adjacent levels closer than 2x tolerance are not separable");
        }
    }
}

double DeviceParams::boundary_resistance(int j) const {
    return 0.5 * (level_resistances[static_cast<std::size_t>(j)] +
                  level_resistances[static_cast<std::size_t>(j) + 1]);
}

double form(RramCell& cell, const DeviceParams& params, Rng& rng) {
    if (cell.status != CellStatus::Unformed) {
        raise(Errc::AlreadyFormed, "form: cell is already formed");
    }
    const double voltage = params.form_mean_v + params.form_sigma_v * rng.gaussian();
    const int level = rng.uniform_int(params.n_levels);
    cell.resistance = params.level_resistances[static_cast<std::size_t>(level)] +
                      params.program_sigma * rng.gaussian();
    cell.status = CellStatus::Ok;
    return voltage;
}

ProgramResult program_verify(RramCell& cell, int target,
                             const DeviceParams& params, Rng& rng) {
    if (cell.status != CellStatus::Ok && cell.status != CellStatus::Spare) {
        raise(Errc::CellNotProgrammable, "program_verify: cell not in a programmable state");
    }
    if (target < 0 || target >= params.n_levels) {
        raise(Errc::OutOfRange, "program_verify: target level out of range");
    }
    const double nominal = params.level_resistances[static_cast<std::size_t>(target)];
    cell.target_level = target;
    for (int cycle = 1; cycle <= params.max_verify_cycles; ++cycle) {
        cell.switch_count += 1;
        if (cell.switch_count > params.endurance_limit) {
            cell.status = CellStatus::Failed;
            cell.verify_cycles_last = cycle;
            return {cycle, ProgramOutcome::EnduranceExceeded};
        }
        if (!cell.stuck) {
            cell.resistance = nominal + params.program_sigma * rng.gaussian();
        }
        if (std::abs(cell.resistance - nominal) <= params.tolerance) {
            cell.status = CellStatus::Ok;
            cell.verify_cycles_last = cycle;
            return {cycle, ProgramOutcome::Ok};
        }
    }
    cell.status = CellStatus::Failed;
    cell.verify_cycles_last = params.max_verify_cycles;
    return {params.max_verify_cycles, ProgramOutcome::Failed};
}

int read_level(const RramCell& cell, const DeviceParams& params) {
    if (cell.status == CellStatus::Failed) {
        raise(Errc::ReadFromFailed, "read_level: cell is failed");
    }
    if (cell.status == CellStatus::Unformed) {
        raise(Errc::ReadFromUnformed, "read_level: cell is unformed");
    }
    for (int j = 0; j + 1 < params.n_levels; ++j) {
        if (cell.resistance < params.boundary_resistance(j)) return j;
    }
    return params.n_levels - 1;
}

} // namespace cimsim
