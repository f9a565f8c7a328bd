#include <doctest.h>

#include <cmath>
#include <vector>

#include "cimsim/device.hpp"
#include "cimsim/errors.hpp"

using namespace cimsim;

namespace {

// P(|N(0, sigma)| <= tol), the analytic single-write success probability.
double gaussian_window(double tol, double sigma) {
    return std::erf(tol / (sigma * std::sqrt(2.0)));
}

} // namespace

TEST_SUITE("device") {

TEST_CASE("default level placement is valid for the supported sizes") {
    for (int n : {2, 4, 8, 16, 128}) {
        DeviceParams p = DeviceParams::with_levels(n);
        CHECK_NOTHROW(p.validate());
        for (std::size_t i = 0; i + 1 < p.level_resistances.size(); ++i) {
            CHECK(p.level_resistances[i + 1] - p.level_resistances[i] > 2.0 * p.tolerance);
        }
    }
}

TEST_CASE("invalid params are rejected") {
    DeviceParams p;
    p.level_resistances = {100.0, 103.0, 120.0, 130.0}; // 3 kOhm gap < 2*tol
    CHECK_THROWS_AS(p.validate(), SimError);
    p = DeviceParams{};
    p.program_sigma = 0.0;
    CHECK_THROWS_AS(p.validate(), SimError);
    p = DeviceParams{};
    p.n_levels = 1;
    p.level_resistances = {100.0};
    CHECK_THROWS_AS(p.validate(), SimError);
}

TEST_CASE("forming with zero spread returns the mean voltage") {
    DeviceParams p;
    p.form_sigma_v = 0.0;
    Rng rng(1);
    for (int i = 0; i < 32; ++i) {
        RramCell cell;
        CHECK(form(cell, p, rng) == doctest::Approx(1.89).epsilon(1e-12));
        CHECK(cell.status == CellStatus::Ok);
    }
}

TEST_CASE("forming twice is an error") {
    DeviceParams p;
    Rng rng(2);
    RramCell cell;
    form(cell, p, rng);
    CHECK_THROWS_WITH_AS(form(cell, p, rng), "form: cell is already formed", SimError);
}

TEST_CASE("forming statistics match the configured distribution") {
    DeviceParams p;
    Rng rng(3);
    const int n = 10000;
    double sum = 0.0, sq = 0.0;
    int unformed = 0;
    for (int i = 0; i < n; ++i) {
        RramCell cell;
        Rng sub = rng.substream(static_cast<std::uint64_t>(i));
        const double v = form(cell, p, sub);
        sum += v;
        sq += v * v;
        if (cell.status == CellStatus::Unformed) ++unformed;
    }
    const double mean = sum / n;
    const double stdev = std::sqrt(sq / n - mean * mean);
    CHECK(unformed == 0); // forming always succeeds
    CHECK(mean == doctest::Approx(1.89).epsilon(0.01 / 1.89));
    CHECK(std::abs(stdev - 0.18) < 0.01);
}

TEST_CASE("noiseless write lands in one cycle") {
    DeviceParams p;
    p.program_sigma = 1e-12; // sigma must stay positive; effectively exact
    Rng rng(4);
    for (int target = 0; target < p.n_levels; ++target) {
        RramCell cell;
        form(cell, p, rng);
        const ProgramResult res = program_verify(cell, target, p, rng);
        CHECK(res.cycles_used == 1);
        CHECK(res.outcome == ProgramOutcome::Ok);
        CHECK(cell.status == CellStatus::Ok);
        CHECK(read_level(cell, p) == target);
    }
}

TEST_CASE("single-cycle rate matches the Gaussian window") {
    DeviceParams p; // sigma 0.8793, tolerance 2.0
    const double analytic = gaussian_window(p.tolerance, p.program_sigma);
    CHECK(analytic == doctest::Approx(0.977).epsilon(0.002));

    Rng rng(5);
    const int n = 512 * 32;
    int one_cycle = 0, within_two = 0, ok = 0;
    for (int i = 0; i < n; ++i) {
        RramCell cell;
        Rng sub = rng.substream(static_cast<std::uint64_t>(i));
        form(cell, p, sub);
        const ProgramResult res = program_verify(cell, i % 4, p, sub);
        if (res.cycles_used == 1 && res.ok()) ++one_cycle;
        if (res.cycles_used <= 2 && res.ok()) ++within_two;
        if (res.ok()) ++ok;
    }
    const double p1 = static_cast<double>(one_cycle) / n;
    CHECK(std::abs(p1 - analytic) < 0.01);
    CHECK(static_cast<double>(within_two) / n >= 0.97);
    CHECK(static_cast<double>(ok) / n >= 0.998);
}

TEST_CASE("in-tolerance yield meets the reported floor at 8 cycles") {
    DeviceParams p;
    Rng rng(6);
    const int n = 20000;
    int ok = 0;
    for (int i = 0; i < n; ++i) {
        RramCell cell;
        Rng sub = rng.substream(static_cast<std::uint64_t>(i));
        form(cell, p, sub);
        if (program_verify(cell, i % p.n_levels, p, sub).ok()) ++ok;
    }
    CHECK(static_cast<double>(ok) / n >= 0.998);
}

TEST_CASE("yield is non-decreasing in the verify-cycle budget") {
    const int n = 4000;
    Rng rng(7);
    double prev = 0.0;
    for (int budget : {1, 2, 4, 8}) {
        DeviceParams p;
        p.max_verify_cycles = budget;
        int ok = 0;
        for (int i = 0; i < n; ++i) {
            RramCell cell;
            Rng sub = rng.substream(static_cast<std::uint64_t>(i)); // same draws per cell
            form(cell, p, sub);
            if (program_verify(cell, i % 4, p, sub).ok()) ++ok;
        }
        const double y = static_cast<double>(ok) / n;
        CHECK(y >= prev);
        prev = y;
    }
}

TEST_CASE("write-verify soundness: verified cells read back their target") {
    for (int n_levels : {2, 4, 16}) {
        DeviceParams p = DeviceParams::with_levels(n_levels);
        Rng rng(8);
        for (int i = 0; i < 2000; ++i) {
            RramCell cell;
            Rng sub = rng.substream(static_cast<std::uint64_t>(n_levels) * 100000 + i);
            form(cell, p, sub);
            const int target = i % n_levels;
            if (program_verify(cell, target, p, sub).ok()) {
                CHECK(read_level(cell, p) == target);
            }
        }
    }
}

TEST_CASE("read_level thresholds sit at the midpoints") {
    DeviceParams p = DeviceParams::with_levels(4);
    RramCell cell;
    cell.status = CellStatus::Ok;

    cell.resistance = p.level_resistances[3];
    CHECK(read_level(cell, p) == 3);

    const double mid = p.boundary_resistance(1);
    cell.resistance = mid + 1e-9;
    CHECK(read_level(cell, p) == 2);
    cell.resistance = mid - 1e-9;
    CHECK(read_level(cell, p) == 1);
}

TEST_CASE("reads from failed or unformed cells are rejected") {
    DeviceParams p;
    RramCell cell;
    CHECK_THROWS_AS(read_level(cell, p), SimError); // unformed
    cell.status = CellStatus::Failed;
    CHECK_THROWS_AS(read_level(cell, p), SimError);
}

TEST_CASE("endurance budget turns the cell into a failure") {
    DeviceParams p;
    p.endurance_limit = 5;
    Rng rng(9);
    RramCell cell;
    form(cell, p, rng);
    ProgramOutcome last = ProgramOutcome::Ok;
    for (int i = 0; i < 10 && last == ProgramOutcome::Ok; ++i) {
        last = program_verify(cell, i % 4, p, rng).outcome;
    }
    CHECK(last == ProgramOutcome::EnduranceExceeded);
    CHECK(cell.status == CellStatus::Failed);
    CHECK(cell.switch_count > p.endurance_limit);
}

TEST_CASE("stuck cells exhaust the verify budget") {
    DeviceParams p;
    Rng rng(10);
    RramCell cell;
    form(cell, p, rng);
    cell.stuck = true;
    cell.resistance = kVirginResistanceKohm;
    const ProgramResult res = program_verify(cell, 0, p, rng);
    CHECK(res.outcome == ProgramOutcome::Failed);
    CHECK(res.cycles_used == p.max_verify_cycles);
    CHECK(cell.status == CellStatus::Failed);
}

TEST_CASE("identical seeds give bitwise-identical trajectories") {
    DeviceParams p;
    for (int run = 0; run < 2; ++run) {
        std::vector<double> a, b;
        for (auto* out : {&a, &b}) {
            Rng rng(11);
            for (int i = 0; i < 200; ++i) {
                RramCell cell;
                Rng sub = rng.substream(static_cast<std::uint64_t>(i));
                form(cell, p, sub);
                program_verify(cell, i % 4, p, sub);
                out->push_back(cell.resistance);
            }
        }
        CHECK(a == b);
    }
}

TEST_CASE("programming an unformed or failed cell is rejected") {
    DeviceParams p;
    Rng rng(12);
    RramCell cell;
    CHECK_THROWS_AS(program_verify(cell, 0, p, rng), SimError);
    form(cell, p, rng);
    CHECK_THROWS_AS(program_verify(cell, p.n_levels, p, rng), SimError); // target range
    cell.status = CellStatus::Failed;
    CHECK_THROWS_AS(program_verify(cell, 0, p, rng), SimError);
}

} // TEST_SUITE
