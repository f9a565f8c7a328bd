#include "cimsim/block.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cimsim/errors.hpp"

namespace cimsim {

namespace {

constexpr std::uint64_t kFormStream = 0x464F524D;    // "FORM"
constexpr std::uint64_t kProgramStream = 0x50524F47; // "PROG"

void write_u16_le(std::ostream& out, std::uint16_t v) {
    const char bytes[2] = {static_cast<char>(v & 0xFF),
                           static_cast<char>((v >> 8) & 0xFF)};
    out.write(bytes, 2);
}

std::uint16_t read_u16_le(std::istream& in) {
    unsigned char bytes[2];
    in.read(reinterpret_cast<char*>(bytes), 2);
    if (!in) raise(Errc::TruncatedFile, "block image: truncated header");
    return static_cast<std::uint16_t>(bytes[0] | (bytes[1] << 8));
}

void write_f64_le(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    out.write(bytes, 8);
}

double read_f64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) raise(Errc::TruncatedFile, "block image: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

} // namespace

const char* to_string(LogicOp op) {
    switch (op) {
        case LogicOp::NAND: return "NAND";
        case LogicOp::AND: return "AND";
        case LogicOp::XOR: return "XOR";
        case LogicOp::OR: return "OR";
    }
    return "?";
}

bool logic_op(LogicOp op, bool w, bool k) {
    switch (op) {
        case LogicOp::NAND: return !(w && k);
        case LogicOp::AND: return w && k;
        case LogicOp::XOR: return w != k;
        case LogicOp::OR: return w || k;
    }
    return false;
}

RuConfig RuConfig::derive(LogicOp op, bool k) {
    // The unit multiplexes on the stored bit: output = INR if W else INL.
    // Fixing K collapses each operation to one of {0, 1, W, NOT W}, which
    // the (INR, INL) pair encodes directly.
    switch (op) {
        case LogicOp::AND: return k ? RuConfig{true, false} : RuConfig{false, false};
        case LogicOp::OR: return k ? RuConfig{true, true} : RuConfig{true, false};
        case LogicOp::XOR: return k ? RuConfig{false, true} : RuConfig{true, false};
        case LogicOp::NAND: return k ? RuConfig{false, true} : RuConfig{true, true};
    }
    return {};
}

double TimingParams::ber(double delay_us) const {
    if (delay_us <= leak_critical_us) return 0.0;
    return 0.5 * (1.0 - std::exp(-leak_slope_per_us * (delay_us - leak_critical_us)));
}

void TimingParams::validate() const {
    if (cycle_ns <= 0.0) raise(Errc::BadConfig, "cycle_ns must be > 0");
    if (leak_critical_us <= 0.0) raise(Errc::BadConfig, "leak_critical_us must be > 0");
    if (leak_slope_per_us < 0.0) raise(Errc::BadConfig, "leak_slope_per_us must be >= 0");
}

void YieldReport::merge(const YieldReport& other) {
    ok += other.ok;
    failed += other.failed;
    repaired += other.repaired;
    if (cycle_histogram.size() < other.cycle_histogram.size()) {
        cycle_histogram.resize(other.cycle_histogram.size(), 0);
    }
    for (std::size_t i = 0; i < other.cycle_histogram.size(); ++i) {
        cycle_histogram[i] += other.cycle_histogram[i];
    }
}

CimBlock::CimBlock(DeviceParams params, TimingParams timing, Rng rng, int rows,
                   int cols, int spare_cols, int backup_rows)
    : rows_(rows),
      cols_(cols),
      spare_cols_(spare_cols),
      backup_rows_(backup_rows),
      params_(std::move(params)),
      timing_(timing),
      rng_(rng),
      cells_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    params_.validate();
    timing_.validate();
    if (rows_ < 1 || cols_ < 1 || spare_cols_ < 0 || spare_cols_ >= cols_ ||
        backup_rows_ < 0 || backup_rows_ >= rows_) {
        raise(Errc::BadConfig, "block geometry invalid");
    }
}

bool CimBlock::in_spare_cols(Coord c) const { return c.col >= cols_ - spare_cols_; }

bool CimBlock::in_backup_region(Coord c) const {
    // Backup region: the last rows of the data columns. Spare columns are
    // never part of it.
    return c.row >= rows_ - backup_rows_ && !in_spare_cols(c);
}

const RramCell& CimBlock::cell_at(int row, int col) const {
    return cells_[index(row, col)];
}

RramCell& CimBlock::cell_at(int row, int col) {
    packed_dirty_ = true;
    return cells_[index(row, col)];
}

std::vector<double> CimBlock::form_all() {
    std::vector<double> voltages;
    voltages.reserve(cells_.size());
    for (int r = 0; r < rows_; ++r) {
        for (int c = 0; c < cols_; ++c) {
            Rng sub = rng_.substream(kFormStream, index(r, c));
            voltages.push_back(form(cells_[index(r, c)], params_, sub));
            if (reserved({r, c})) cells_[index(r, c)].status = CellStatus::Spare;
        }
    }
    packed_dirty_ = true;
    return voltages;
}

Coord CimBlock::resolve(Coord coord) const {
    auto it = remap_.find(coord);
    return it == remap_.end() ? coord : it->second;
}

YieldReport CimBlock::program_physical(Coord phys, int target, bool claim) {
    YieldReport report;
    report.cycle_histogram.assign(static_cast<std::size_t>(params_.max_verify_cycles) + 1, 0);
    RramCell& cell = cells_[index(phys.row, phys.col)];
    const bool was_reserved_free = cell.status == CellStatus::Spare;
    Rng sub = rng_.substream(kProgramStream + program_seq_++, index(phys.row, phys.col));
    const ProgramResult res = program_verify(cell, target, params_, sub);
    packed_dirty_ = true;
    if (ledger_) ledger_->add_cell_writes(static_cast<std::uint64_t>(res.cycles_used));
    report.cycle_histogram[static_cast<std::size_t>(res.cycles_used)] += 1;
    if (res.ok()) {
        report.ok += 1;
        // Reserved cells stay Spare until a repair claims them.
        if (was_reserved_free && !claim) cell.status = CellStatus::Spare;
    } else {
        report.failed += 1;
    }
    return report;
}

YieldReport CimBlock::program_cell(int row, int col, int target) {
    const Coord logical{row, col};
    YieldReport report = program_physical(resolve(logical), target, false);
    if (report.failed > 0) {
        YieldReport fix = repair_report(logical);
        report.merge(fix);
    }
    return report;
}

YieldReport CimBlock::program_cell_if_changed(int row, int col, int target) {
    const Coord phys = resolve({row, col});
    const RramCell& cell = cells_[index(phys.row, phys.col)];
    if ((cell.status == CellStatus::Ok || cell.status == CellStatus::Spare) &&
        cell.target_level == target) {
        return {};
    }
    return program_cell(row, col, target);
}

YieldReport CimBlock::repair_report(Coord coord) {
    // Repair chain: keep allocating replacements until one programs
    // cleanly. Each successful remap counts once.
    YieldReport report;
    report.cycle_histogram.assign(static_cast<std::size_t>(params_.max_verify_cycles) + 1, 0);
    const Coord phys = resolve(coord);
    RramCell& failed_cell = cells_[index(phys.row, phys.col)];
    if (failed_cell.status != CellStatus::Failed) {
        raise(Errc::CellNotProgrammable, "repair: cell is not failed");
    }
    const int target = failed_cell.target_level < 0 ? 0 : failed_cell.target_level;
    for (;;) {
        std::optional<Coord> cand = find_free_spare(coord.row);
        if (!cand) cand = find_free_backup();
        if (!cand) raise(Errc::RepairExhausted, "repair: no spare or backup cell left");
        YieldReport attempt = program_physical(*cand, target, true);
        report.cycle_histogram.resize(
            std::max(report.cycle_histogram.size(), attempt.cycle_histogram.size()), 0);
        for (std::size_t i = 0; i < attempt.cycle_histogram.size(); ++i) {
            report.cycle_histogram[i] += attempt.cycle_histogram[i];
        }
        if (attempt.ok > 0) {
            auto old = remap_.find(coord);
            if (old != remap_.end()) claimed_.erase(old->second);
            remap_[coord] = *cand;
            claimed_.insert(*cand);
            report.repaired += 1;
            packed_dirty_ = true;
            return report;
        }
        // The candidate itself failed to program; it is now Failed and no
        // longer allocatable, so the loop moves to the next one.
    }
}

Coord CimBlock::repair(Coord coord) {
    repair_report(coord);
    return remap_.at(coord);
}

std::optional<Coord> CimBlock::find_free_spare(int row) const {
    for (int c = cols_ - spare_cols_; c < cols_; ++c) {
        if (cells_[index(row, c)].status == CellStatus::Spare) return Coord{row, c};
    }
    return std::nullopt;
}

std::optional<Coord> CimBlock::find_free_backup() const {
    for (int r = rows_ - backup_rows_; r < rows_; ++r) {
        for (int c = 0; c < cols_ - spare_cols_; ++c) {
            if (cells_[index(r, c)].status == CellStatus::Spare) return Coord{r, c};
        }
    }
    return std::nullopt;
}

YieldReport CimBlock::program_block(const std::vector<std::vector<int>>& levels) {
    if (levels.size() != static_cast<std::size_t>(rows_)) {
        raise(Errc::ShapeMismatch, "program_block: level matrix row count mismatch");
    }
    YieldReport report;
    report.cycle_histogram.assign(static_cast<std::size_t>(params_.max_verify_cycles) + 1, 0);
    for (int r = 0; r < rows_; ++r) {
        if (levels[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(cols_)) {
            raise(Errc::ShapeMismatch, "program_block: level matrix column count mismatch");
        }
        for (int c = 0; c < cols_; ++c) {
            const Coord coord{r, c};
            // A cell claimed as a repair replacement carries another
            // coordinate's data; it has no own-address payload anymore.
            if (claimed_.count(coord)) continue;
            const int target = levels[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            if (reserved(coord) && !remap_.count(coord)) {
                // Reserved cells take the image but are not payload; a
                // failure just retires them from the free pool.
                report.merge(program_physical(coord, target, false));
            } else {
                report.merge(program_cell(r, c, target));
            }
        }
    }
    return report;
}

namespace {

void check_readable(const RramCell& cell) {
    if (cell.status == CellStatus::Failed) {
        raise(Errc::ReadFromFailed, "read: cell is failed and not remapped");
    }
    if (cell.status == CellStatus::Unformed) {
        raise(Errc::ReadFromUnformed, "read: cell is unformed");
    }
}

} // namespace

bool CimBlock::read_bit(int row, int col, int rref_level) const {
    if (rref_level < 0 || rref_level >= params_.n_levels - 1) {
        raise(Errc::OutOfRange, "read_bit: reference index out of range");
    }
    const Coord phys = resolve({row, col});
    const RramCell& cell = cells_[index(phys.row, phys.col)];
    check_readable(cell);
    // Conductance above the reference means resistance below it.
    return cell.resistance < params_.boundary_resistance(rref_level);
}

bool CimBlock::read_bit_binary(int row, int col) const {
    const Coord phys = resolve({row, col});
    const RramCell& cell = cells_[index(phys.row, phys.col)];
    check_readable(cell);
    const double mid = 0.5 * (params_.level_resistances.front() +
                              params_.level_resistances.back());
    return cell.resistance < mid;
}

int CimBlock::read_cell_level(int row, int col) const {
    const Coord phys = resolve({row, col});
    return read_level(cells_[index(phys.row, phys.col)], params_);
}

std::vector<std::uint8_t> CimBlock::compute_row_parallel(int row, bool x, bool k,
                                                         LogicOp op, double delay_us,
                                                         Rng& rng) const {
    if (row < 0 || row >= data_rows()) {
        raise(Errc::OutOfRange, "compute_row_parallel: reserved rows are not compute-addressable");
    }
    const int n = data_cols();
    std::vector<std::uint8_t> out(static_cast<std::size_t>(n));
    const double p = timing_.ber(delay_us);
    for (int c = 0; c < n; ++c) {
        bool bit = compute_gate(x, read_bit_binary(row, c), k, op);
        if (p > 0.0 && rng.bernoulli(p)) bit = !bit;
        out[static_cast<std::size_t>(c)] = bit ? 1 : 0;
    }
    if (ledger_) ledger_->add_gates(static_cast<std::uint64_t>(n));
    return out;
}

void CimBlock::rebuild_packed() const {
    const int n = data_cols();
    const int words = (rows_ + 63) / 64;
    packed_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(words), 0);
    for (int c = 0; c < n; ++c) {
        for (int r = 0; r < rows_; ++r) {
            const Coord phys = resolve({r, c});
            const RramCell& cell = cells_[index(phys.row, phys.col)];
            if (cell.status == CellStatus::Failed || cell.status == CellStatus::Unformed) {
                // Only reachable for reserved cells that never carry
                // payload; data cells are repaired on programming.
                if (!reserved({r, c})) check_readable(cell);
                continue;
            }
            const double mid = 0.5 * (params_.level_resistances.front() +
                                      params_.level_resistances.back());
            if (cell.resistance < mid) {
                packed_[static_cast<std::size_t>(c) * words + static_cast<std::size_t>(r / 64)] |=
                    1ULL << (r % 64);
            }
        }
    }
    packed_dirty_ = false;
}

std::vector<int> CimBlock::ternary_vmm(const std::vector<std::uint8_t>& x_bits,
                                       const std::vector<std::uint8_t>& k_bits,
                                       LogicOp op) const {
    if (x_bits.size() != static_cast<std::size_t>(rows_) ||
        k_bits.size() != static_cast<std::size_t>(rows_)) {
        raise(Errc::ShapeMismatch, "ternary_vmm: input vectors must match the row count");
    }
    if (packed_dirty_) rebuild_packed();

    const int words = (rows_ + 63) / 64;
    std::vector<std::uint64_t> xw(static_cast<std::size_t>(words), 0);
    std::vector<std::uint64_t> kw(static_cast<std::size_t>(words), 0);
    for (int r = 0; r < rows_; ++r) {
        if (x_bits[static_cast<std::size_t>(r)]) xw[static_cast<std::size_t>(r / 64)] |= 1ULL << (r % 64);
        if (k_bits[static_cast<std::size_t>(r)]) kw[static_cast<std::size_t>(r / 64)] |= 1ULL << (r % 64);
    }
    // Reserved backup rows hold repair replacements, not payload; they
    // are masked out of the data result like the spare columns.
    std::vector<std::uint64_t> valid(static_cast<std::size_t>(words), 0);
    for (int r = 0; r < data_rows(); ++r) {
        valid[static_cast<std::size_t>(r / 64)] |= 1ULL << (r % 64);
    }

    const int n = data_cols();
    std::vector<int> result(static_cast<std::size_t>(n), 0);
    for (int c = 0; c < n; ++c) {
        const std::uint64_t* w = &packed_[static_cast<std::size_t>(c) * words];
        int acc = 0;
        for (int i = 0; i < words; ++i) {
            std::uint64_t term;
            switch (op) {
                case LogicOp::AND: term = w[i] & kw[static_cast<std::size_t>(i)]; break;
                case LogicOp::OR: term = w[i] | kw[static_cast<std::size_t>(i)]; break;
                case LogicOp::XOR: term = w[i] ^ kw[static_cast<std::size_t>(i)]; break;
                case LogicOp::NAND: term = ~(w[i] & kw[static_cast<std::size_t>(i)]); break;
                default: term = 0; break;
            }
            term &= valid[static_cast<std::size_t>(i)];
            acc += std::popcount(xw[static_cast<std::size_t>(i)] & term);
        }
        result[static_cast<std::size_t>(c)] = acc;
    }
    if (ledger_) {
        ledger_->add_gates(static_cast<std::uint64_t>(data_rows()) *
                           static_cast<std::uint64_t>(n));
        ledger_->add_accumulations(static_cast<std::uint64_t>(n));
    }
    return result;
}

const std::uint64_t* CimBlock::packed_column(int col) const {
    if (col < 0 || col >= data_cols()) {
        raise(Errc::OutOfRange, "packed_column: not a data column");
    }
    if (packed_dirty_) rebuild_packed();
    return &packed_[static_cast<std::size_t>(col) * static_cast<std::size_t>(packed_words())];
}

void CimBlock::inject_stuck_fault(int row, int col) {
    // Stuck-open: the cell pins at the virgin high resistance, outside
    // every level's tolerance window, and write pulses stop acting.
    cells_[index(row, col)].stuck = true;
    cells_[index(row, col)].resistance = kVirginResistanceKohm;
    packed_dirty_ = true;
}

void CimBlock::save(std::ostream& out) const {
    out.write("CIMB", 4);
    write_u16_le(out, 1);
    write_u16_le(out, static_cast<std::uint16_t>(rows_));
    write_u16_le(out, static_cast<std::uint16_t>(cols_));
    for (const auto& cell : cells_) {
        const char status = static_cast<char>(cell.status);
        out.write(&status, 1);
        write_f64_le(out, cell.resistance);
    }
    if (!out) raise(Errc::IoError, "block image: write failed");
}

void CimBlock::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) raise(Errc::IoError, "cannot open " + path + " for writing");
    save(out);
}

CimBlock CimBlock::load(std::istream& in, DeviceParams params, TimingParams timing,
                        Rng rng) {
    char magic[4];
    in.read(magic, 4);
    if (!in) raise(Errc::TruncatedFile, "block image: missing magic");
    if (std::memcmp(magic, "CIMB", 4) != 0) {
        raise(Errc::BadMagic, "block image: bad magic");
    }
    const std::uint16_t version = read_u16_le(in);
    if (version != 1) raise(Errc::BadMagic, "block image: unsupported version");
    const int rows = read_u16_le(in);
    const int cols = read_u16_le(in);
    CimBlock block(std::move(params), timing, rng, rows, cols);
    for (auto& cell : block.cells_) {
        char status;
        in.read(&status, 1);
        if (!in) raise(Errc::TruncatedFile, "block image: truncated payload");
        cell.status = static_cast<CellStatus>(status);
        cell.resistance = read_f64_le(in);
    }
    block.packed_dirty_ = true;
    return block;
}

CimBlock CimBlock::load_file(const std::string& path, DeviceParams params,
                             TimingParams timing, Rng rng) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(Errc::IoError, "cannot open " + path);
    return load(in, std::move(params), timing, rng);
}

} // namespace cimsim
