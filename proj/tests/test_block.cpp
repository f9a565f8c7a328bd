#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "cimsim/block.hpp"
#include "cimsim/errors.hpp"

using namespace cimsim;

namespace {

const LogicOp kOps[4] = {LogicOp::NAND, LogicOp::AND, LogicOp::XOR, LogicOp::OR};

bool boolean_oracle(LogicOp op, bool x, bool w, bool k) {
    bool inner = false;
    switch (op) {
        case LogicOp::NAND: inner = !(w && k); break;
        case LogicOp::AND: inner = w && k; break;
        case LogicOp::XOR: inner = w ^ k; break;
        case LogicOp::OR: inner = w || k; break;
    }
    return x && inner;
}

CimBlock make_binary_block(std::uint64_t seed, int spare_cols = 2, int backup_rows = 8) {
    CimBlock block(DeviceParams::with_levels(2), TimingParams{}, Rng(seed),
                   CimBlock::kDefaultRows, CimBlock::kDefaultCols, spare_cols,
                   backup_rows);
    block.form_all();
    return block;
}

std::vector<std::vector<int>> random_levels(int rows, int cols, int n_levels, Rng& rng) {
    std::vector<std::vector<int>> levels(static_cast<std::size_t>(rows),
                                         std::vector<int>(static_cast<std::size_t>(cols)));
    for (auto& row : levels) {
        for (auto& v : row) v = rng.uniform_int(n_levels);
    }
    return levels;
}

} // namespace

TEST_SUITE("block") {

TEST_CASE("reconfigurable unit reproduces every logic operation") {
    // 32 combinations: 4 ops x 8 input triples, against the boolean formula.
    for (LogicOp op : kOps) {
        for (int x = 0; x < 2; ++x) {
            for (int w = 0; w < 2; ++w) {
                for (int k = 0; k < 2; ++k) {
                    CAPTURE(to_string(op));
                    CHECK(compute_gate(x, w, k, op) == boolean_oracle(op, x, w, k));
                    CHECK(ru_eval(w, RuConfig::derive(op, k)) == logic_op(op, w, k));
                }
            }
        }
    }
}

TEST_CASE("NAND is the complement of AND under the X gate") {
    for (int w = 0; w < 2; ++w) {
        for (int k = 0; k < 2; ++k) {
            CHECK(compute_gate(true, w, k, LogicOp::NAND) ==
                  !compute_gate(true, w, k, LogicOp::AND));
            CHECK(compute_gate(false, w, k, LogicOp::NAND) == false);
            CHECK(compute_gate(false, w, k, LogicOp::AND) == false);
        }
    }
}

TEST_CASE("leakage BER curve") {
    TimingParams t;
    CHECK(t.ber(1.0) == 0.0);
    CHECK(t.ber(2.7) == 0.0); // threshold inclusive
    CHECK(t.ber(2.7000001) > 0.0);
    CHECK(t.ber(4.0) == doctest::Approx(0.5 * (1.0 - std::exp(-3.0 * 1.3))));
    CHECK(t.ber(5.0) > 0.499);
    double prev = 0.0;
    for (double d = 2.0; d < 10.0; d += 0.25) {
        const double b = t.ber(d);
        CHECK(b >= prev);
        CHECK(b <= 0.5);
        prev = b;
    }
}

TEST_CASE("near-noiseless block programs every cell in one cycle") {
    DeviceParams dev = DeviceParams::with_levels(4);
    dev.program_sigma = 1e-12;
    CimBlock block(dev, TimingParams{}, Rng(21));
    block.form_all();
    Rng lrng(22);
    const auto levels = random_levels(block.rows(), block.cols(), 4, lrng);
    const YieldReport rep = block.program_block(levels);
    CHECK(rep.ok == 512 * 32);
    CHECK(rep.failed == 0);
    CHECK(rep.repaired == 0);
    CHECK(rep.cycle_histogram[1] == 512 * 32);
}

TEST_CASE("default-noise block lands mostly within two cycles") {
    CimBlock block(DeviceParams::with_levels(4), TimingParams{}, Rng(23));
    block.form_all();
    Rng lrng(24);
    const auto levels = random_levels(block.rows(), block.cols(), 4, lrng);
    const YieldReport rep = block.program_block(levels);
    std::uint64_t total = 0, within_two = 0;
    for (std::size_t c = 0; c < rep.cycle_histogram.size(); ++c) {
        total += rep.cycle_histogram[c];
        if (c <= 2) within_two += rep.cycle_histogram[c];
    }
    CHECK(static_cast<double>(within_two) / static_cast<double>(total) > 0.90);
    CHECK(rep.ok >= 16384 - 2); // stray verify failures are repaired
}

TEST_CASE("injected failures are repaired transparently") {
    CimBlock block = make_binary_block(25);
    CimBlock reference = make_binary_block(26);
    Rng lrng(27);
    const auto levels = random_levels(block.rows(), block.cols(), 2, lrng);

    for (int i = 0; i < 10; ++i) {
        block.inject_stuck_fault(7 * i + 3, i % block.data_cols());
    }
    const YieldReport rep = block.program_block(levels);
    reference.program_block(levels);
    CHECK(rep.repaired >= 10);

    // Post-repair functional error rate is zero: every logical cell reads
    // its programmed level, exactly like the fault-free block.
    for (int r = 0; r < block.rows(); ++r) {
        for (int c = 0; c < block.data_cols(); ++c) {
            REQUIRE(block.read_cell_level(r, c) ==
                    levels[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
            REQUIRE(block.read_cell_level(r, c) == reference.read_cell_level(r, c));
        }
    }
}

TEST_CASE("single-bit readout against the reference ladder") {
    DeviceParams dev = DeviceParams::with_levels(4);
    dev.program_sigma = 1e-12;
    CimBlock block(dev, TimingParams{}, Rng(29));
    block.form_all();
    for (int level = 0; level < 4; ++level) block.program_cell(level, 0, level);

    // Most conductive level reads 1 against every interior reference, the
    // least conductive reads 0.
    for (int rref = 0; rref < 3; ++rref) {
        CHECK(block.read_bit(0, 0, rref) == true);
        CHECK(block.read_bit(3, 0, rref) == false);
    }

    // Two successive-approximation reads reconstruct the 2-bit value.
    for (int row = 0; row < 4; ++row) {
        const bool upper = !block.read_bit(row, 0, 1); // level >= 2
        const int second_ref = upper ? 2 : 0;
        const bool inner = !block.read_bit(row, 0, second_ref);
        const int value = (upper ? 2 : 0) + (inner ? 1 : 0);
        CHECK(value == block.read_cell_level(row, 0));
        CHECK(value == row);
    }
}

TEST_CASE("row-parallel compute is exact at nominal delay") {
    CimBlock block = make_binary_block(30);
    Rng lrng(31);
    const auto levels = random_levels(block.rows(), block.cols(), 2, lrng);
    block.program_block(levels);

    Rng srng(32);
    for (double delay : {1.0, 2.7}) {
        int flips = 0;
        for (int trial = 0; trial < 400; ++trial) {
            const int row = srng.uniform_int(block.data_rows());
            const bool x = srng.uniform_int(2) != 0;
            const bool k = srng.uniform_int(2) != 0;
            const LogicOp op = kOps[srng.uniform_int(4)];
            const auto out = block.compute_row_parallel(row, x, k, op, delay, srng);
            for (int c = 0; c < block.data_cols(); ++c) {
                // Stored bit 1 = most conductive level (level 0).
                const bool w = levels[static_cast<std::size_t>(row)][static_cast<std::size_t>(c)] == 0;
                if ((out[static_cast<std::size_t>(c)] != 0) != boolean_oracle(op, x, w, k)) ++flips;
            }
        }
        CHECK(flips == 0);
    }
}

TEST_CASE("row-parallel compute flips bits at long delays") {
    CimBlock block = make_binary_block(33);
    Rng lrng(34);
    block.program_block(random_levels(block.rows(), block.cols(), 2, lrng));

    const double delay = 4.0;
    const double p = block.timing().ber(delay);
    Rng srng(35);
    std::int64_t flips = 0, n = 0;
    for (int trial = 0; trial < 4000; ++trial) {
        const int row = srng.uniform_int(block.data_rows());
        const bool x = srng.uniform_int(2) != 0;
        const bool k = srng.uniform_int(2) != 0;
        const LogicOp op = kOps[srng.uniform_int(4)];
        const auto out = block.compute_row_parallel(row, x, k, op, delay, srng);
        for (int c = 0; c < block.data_cols(); ++c) {
            const bool w = block.read_bit_binary(row, c);
            if ((out[static_cast<std::size_t>(c)] != 0) != boolean_oracle(op, x, w, k)) ++flips;
            ++n;
        }
    }
    const double sigma = std::sqrt(p * (1.0 - p) * static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(flips) - p * static_cast<double>(n)) < 3.0 * sigma);
}

TEST_CASE("ternary VMM equals the nested-loop oracle") {
    CimBlock block = make_binary_block(36);
    Rng lrng(37);
    const auto levels = random_levels(block.rows(), block.cols(), 2, lrng);
    block.program_block(levels);

    Rng vrng(38);
    std::vector<std::uint8_t> x(static_cast<std::size_t>(block.rows()), 0);
    std::vector<std::uint8_t> k(static_cast<std::size_t>(block.rows()), 0);
    for (int r = 0; r < 64; ++r) { // 64-row instance, rest stays zero
        x[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>(vrng.uniform_int(2));
        k[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>(vrng.uniform_int(2));
    }
    for (LogicOp op : kOps) {
        const std::vector<int> got = block.ternary_vmm(x, k, op);
        for (int c = 0; c < block.data_cols(); ++c) {
            int want = 0;
            for (int r = 0; r < block.data_rows(); ++r) {
                const bool w = levels[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] == 0;
                want += boolean_oracle(op, x[static_cast<std::size_t>(r)] != 0, w,
                                       k[static_cast<std::size_t>(r)] != 0)
                            ? 1
                            : 0;
            }
            REQUIRE(got[static_cast<std::size_t>(c)] == want);
        }
    }
}

TEST_CASE("ternary VMM basics and linearity") {
    CimBlock block = make_binary_block(39);
    Rng lrng(40);
    const auto levels = random_levels(block.rows(), block.cols(), 2, lrng);
    block.program_block(levels);

    const std::vector<std::uint8_t> zeros(static_cast<std::size_t>(block.rows()), 0);
    const std::vector<std::uint8_t> ones(static_cast<std::size_t>(block.rows()), 1);

    // All-zero input gives all-zero counts.
    for (int c : block.ternary_vmm(zeros, ones, LogicOp::AND)) CHECK(c == 0);

    // AND with K=1 and X=1 counts the column weight over the data rows.
    const std::vector<int> weights = block.ternary_vmm(ones, ones, LogicOp::AND);
    for (int c = 0; c < block.data_cols(); ++c) {
        int want = 0;
        for (int r = 0; r < block.data_rows(); ++r) {
            want += levels[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] == 0;
        }
        CHECK(weights[static_cast<std::size_t>(c)] == want);
    }

    // Linearity over disjoint supports.
    Rng srng(41);
    std::vector<std::uint8_t> x1(zeros), x2(zeros), k(static_cast<std::size_t>(block.rows()));
    for (int r = 0; r < block.rows(); ++r) {
        k[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>(srng.uniform_int(2));
        if (srng.uniform_int(2)) {
            x1[static_cast<std::size_t>(r)] = 1;
        } else if (srng.uniform_int(2)) {
            x2[static_cast<std::size_t>(r)] = 1;
        }
    }
    std::vector<std::uint8_t> x_both(static_cast<std::size_t>(block.rows()));
    for (int r = 0; r < block.rows(); ++r) {
        x_both[static_cast<std::size_t>(r)] = x1[static_cast<std::size_t>(r)] | x2[static_cast<std::size_t>(r)];
    }
    for (LogicOp op : kOps) {
        const auto a = block.ternary_vmm(x1, k, op);
        const auto b = block.ternary_vmm(x2, k, op);
        const auto both = block.ternary_vmm(x_both, k, op);
        for (int c = 0; c < block.data_cols(); ++c) {
            CHECK(both[static_cast<std::size_t>(c)] ==
                  a[static_cast<std::size_t>(c)] + b[static_cast<std::size_t>(c)]);
        }
    }
}

TEST_CASE("repair prefers the same-row spare column") {
    CimBlock block = make_binary_block(42);
    Rng lrng(43);
    block.program_block(random_levels(block.rows(), block.cols(), 2, lrng));

    block.inject_stuck_fault(10, 3);
    block.program_cell(10, 3, 0);
    auto it = block.remap_table().find({10, 3});
    REQUIRE(it != block.remap_table().end());
    CHECK(it->second.row == 10);
    CHECK(it->second.col >= block.data_cols()); // spare column
    CHECK(block.read_cell_level(10, 3) == 0);
}

TEST_CASE("third failure in a row overflows into the backup region") {
    CimBlock block = make_binary_block(44);
    Rng lrng(45);
    block.program_block(random_levels(block.rows(), block.cols(), 2, lrng));

    for (int c = 0; c < 3; ++c) {
        block.inject_stuck_fault(20, c);
        block.program_cell(20, c, 1);
    }
    const auto& remap = block.remap_table();
    REQUIRE(remap.size() == 3);
    int spares = 0, backups = 0;
    for (const auto& [from, to] : remap) {
        if (to.col >= block.data_cols()) {
            ++spares;
        } else {
            CHECK(block.in_backup_region(to));
            ++backups;
        }
    }
    CHECK(spares == 2);
    CHECK(backups == 1);
}

TEST_CASE("repair exhaustion raises after spares and backup fill up") {
    // Tiny geometry: 1 spare column, 1 backup row.
    CimBlock block(DeviceParams::with_levels(2), TimingParams{}, Rng(46), 8, 4, 1, 1);
    block.form_all();
    std::vector<std::vector<int>> levels(8, std::vector<int>(4, 0));
    block.program_block(levels);

    // Row 0: one spare (col 3) and three backup cells (row 7, cols 0-2).
    int repaired = 0;
    bool exhausted = false;
    for (int c = 0; c < 3 && !exhausted; ++c) {
        block.inject_stuck_fault(0, c);
        try {
            block.program_cell(0, c, 0);
            ++repaired;
        } catch (const SimError& e) {
            CHECK(e.code() == Errc::RepairExhausted);
            exhausted = true;
        }
    }
    CHECK(repaired >= 1);
    // Saturate whatever is left from another row.
    for (int c = 0; c < 3 && !exhausted; ++c) {
        block.inject_stuck_fault(1, c);
        try {
            block.program_cell(1, c, 0);
        } catch (const SimError& e) {
            CHECK(e.code() == Errc::RepairExhausted);
            exhausted = true;
        }
    }
    CHECK(exhausted);
}

TEST_CASE("remapped cells are transparent to the VMM path") {
    CimBlock block = make_binary_block(47);
    CimBlock reference = make_binary_block(48);
    Rng lrng(49);
    const auto levels = random_levels(block.rows(), block.cols(), 2, lrng);

    Rng frng(50);
    for (int i = 0; i < 25; ++i) {
        block.inject_stuck_fault(frng.uniform_int(block.data_rows()),
                                 frng.uniform_int(block.data_cols()));
    }
    block.program_block(levels);
    reference.program_block(levels);

    Rng vrng(51);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::uint8_t> x(static_cast<std::size_t>(block.rows()));
        std::vector<std::uint8_t> k(static_cast<std::size_t>(block.rows()));
        for (int r = 0; r < block.rows(); ++r) {
            x[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>(vrng.uniform_int(2));
            k[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>(vrng.uniform_int(2));
        }
        const LogicOp op = kOps[vrng.uniform_int(4)];
        CHECK(block.ternary_vmm(x, k, op) == reference.ternary_vmm(x, k, op));
    }
}

TEST_CASE("block images round-trip bit-exactly") {
    CimBlock block = make_binary_block(52);
    Rng lrng(53);
    block.program_block(random_levels(block.rows(), block.cols(), 2, lrng));

    std::stringstream buf;
    block.save(buf);

    CimBlock loaded = CimBlock::load(buf, DeviceParams::with_levels(2), TimingParams{}, Rng(54));
    REQUIRE(loaded.rows() == block.rows());
    REQUIRE(loaded.cols() == block.cols());
    for (int r = 0; r < block.rows(); ++r) {
        for (int c = 0; c < block.cols(); ++c) {
            CHECK(loaded.cell_at(r, c).status == block.cell_at(r, c).status);
            CHECK(loaded.cell_at(r, c).resistance == block.cell_at(r, c).resistance);
        }
    }
}

TEST_CASE("block image header errors") {
    std::stringstream bad_magic;
    bad_magic << "NOPE";
    CHECK_THROWS_AS(CimBlock::load(bad_magic, DeviceParams::with_levels(2), TimingParams{}, Rng(1)),
                    SimError);

    CimBlock block(DeviceParams::with_levels(2), TimingParams{}, Rng(55), 4, 4, 1, 1);
    block.form_all();
    std::stringstream buf;
    block.save(buf);
    std::string data = buf.str();
    std::stringstream truncated(data.substr(0, data.size() - 5));
    CHECK_THROWS_AS(
        CimBlock::load(truncated, DeviceParams::with_levels(2), TimingParams{}, Rng(1)),
        SimError);
}

} // TEST_SUITE
