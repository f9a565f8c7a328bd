#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "cimsim/bitslice.hpp"
#include "cimsim/block.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/config.hpp"
#include "cimsim/device.hpp"
#include "cimsim/energy.hpp"
#include "cimsim/mnist.hpp"
#include "cimsim/network.hpp"
#include "cimsim/similarity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitMismatch = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed_flag;
};

// One process per output directory; the lock file is removed on exit.
class DirLock {
public:
    explicit DirLock(const std::string& dir) : path_(dir + "/.lock") {
        fs::create_directories(dir);
        if (fs::exists(path_)) {
            throw cimsim::SimError(cimsim::Errc::IoError,
                                   "output directory is locked by another run: " + path_);
        }
        std::ofstream lock(path_);
        lock << "locked\n";
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    std::string path_;
};

cimsim::RunConfig resolve_config(const GlobalOpts& g) {
    cimsim::RunConfig cfg;
    if (!g.config_path.empty()) cfg = cimsim::load_config(g.config_path);
    if (const char* env = std::getenv("CIM_SIM_SEED")) {
        cfg.seed = std::strtoull(env, nullptr, 10);
        cfg.seed_provided = true;
    }
    if (g.seed_flag) {
        cfg.seed = *g.seed_flag;
        cfg.seed_provided = true;
    }
    return cfg;
}

// device-mc and train sample from the RNG; they demand an explicit seed.
bool require_seed(const cimsim::RunConfig& cfg, const char* cmd) {
    if (!cfg.seed_provided) {
        std::cerr << cmd << ": a seed is required (--seed, CIM_SIM_SEED or the config file)\n";
        return false;
    }
    return true;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw cimsim::SimError(cimsim::Errc::IoError, "cannot write " + path);
    out << text;
}

// ---------------------------------------------------------------------------
// device-mc

int cmd_device_mc(const GlobalOpts& g, int cells, int levels) {
    if (cells < 1) {
        std::cerr << "device-mc: --cells must be >= 1\n";
        return kExitConfig;
    }
    if (levels < 2 || levels > 128) {
        std::cerr << "device-mc: --levels must be in [2, 128]\n";
        return kExitConfig;
    }
    cimsim::RunConfig cfg = resolve_config(g);
    if (!require_seed(cfg, "device-mc")) return kExitConfig;
    DirLock lock(g.out_dir);

    cimsim::DeviceParams params = cimsim::DeviceParams::with_levels(levels);
    params.program_sigma = cfg.device.program_sigma;
    params.tolerance = cfg.device.tolerance;
    params.form_mean_v = cfg.device.form_mean_v;
    params.form_sigma_v = cfg.device.form_sigma_v;
    params.max_verify_cycles = cfg.device.max_verify_cycles;
    params.endurance_limit = cfg.device.endurance_limit;
    params.validate();

    cimsim::Rng rng(cfg.seed);
    std::ostringstream csv;
    csv << "cell_row,cell_col,target_level,final_resistance_kohm,cycles,status\n";

    std::vector<std::uint64_t> hist(static_cast<std::size_t>(params.max_verify_cycles) + 1, 0);
    std::uint64_t ok = 0;
    double form_sum = 0.0, form_sq = 0.0;
    double resid_sum = 0.0, resid_sq = 0.0;
    double first_sum = 0.0, first_sq = 0.0;
    std::uint64_t resid_n = 0;
    cimsim::DeviceParams one_shot = params;
    one_shot.max_verify_cycles = 1;
    char buf[64];
    for (int i = 0; i < cells; ++i) {
        cimsim::RramCell cell;
        cimsim::Rng sub = rng.substream(static_cast<std::uint64_t>(i));
        const double volts = cimsim::form(cell, params, sub);
        form_sum += volts;
        form_sq += volts * volts;
        const int target = i % levels;
        const double nominal = params.level_resistances[static_cast<std::size_t>(target)];

        // First-write residual, acceptance-unconditioned: replay the first
        // cycle on a copy (the substream copy sees the same draw).
        {
            cimsim::RramCell probe = cell;
            cimsim::Rng sub_copy = sub;
            cimsim::program_verify(probe, target, one_shot, sub_copy);
            const double r = probe.resistance - nominal;
            first_sum += r;
            first_sq += r * r;
        }

        const cimsim::ProgramResult res = cimsim::program_verify(cell, target, params, sub);
        hist[static_cast<std::size_t>(res.cycles_used)] += 1;
        if (res.ok()) {
            ++ok;
            const double resid = cell.resistance - nominal;
            resid_sum += resid;
            resid_sq += resid * resid;
            ++resid_n;
        }
        std::snprintf(buf, sizeof(buf), "%.6f", cell.resistance);
        csv << (i / 32) << ',' << (i % 32) << ',' << target << ',' << buf << ','
            << res.cycles_used << ','
            << (res.outcome == cimsim::ProgramOutcome::Ok ? "ok" : "failed") << '\n';
    }
    write_text(g.out_dir + "/device_mc.csv", csv.str());

    const double n = static_cast<double>(cells);
    const double form_mean = form_sum / n;
    const double form_std = std::sqrt(std::max(0.0, form_sq / n - form_mean * form_mean));
    const double resid_mean = resid_n ? resid_sum / static_cast<double>(resid_n) : 0.0;
    const double sigma_est =
        resid_n ? std::sqrt(std::max(0.0, resid_sq / static_cast<double>(resid_n) -
                                              resid_mean * resid_mean))
                : 0.0;
    const double first_mean = first_sum / n;
    const double sigma_first =
        std::sqrt(std::max(0.0, first_sq / n - first_mean * first_mean));

    json summary;
    summary["schema"] = "cimsim/device_mc/v1";
    summary["seed"] = cfg.seed;
    summary["cells"] = cells;
    summary["levels"] = levels;
    summary["yield"] = static_cast<double>(ok) / n;
    summary["single_cycle_fraction"] = static_cast<double>(hist[1]) / n;
    summary["sigma_estimate_kohm"] = sigma_first;
    summary["sigma_in_tolerance_kohm"] = sigma_est;
    summary["forming_mean_v"] = form_mean;
    summary["forming_std_v"] = form_std;
    summary["cycle_histogram"] = hist;
    write_text(g.out_dir + "/device_mc_summary.json", summary.dump(2) + "\n");

    std::cout << "device-mc: cells=" << cells << " levels=" << levels
              << " yield=" << summary["yield"] << " sigma_est=" << sigma_first
              << " kohm, forming " << form_mean << " +/- " << form_std << " V\n";
    return 0;
}

// ---------------------------------------------------------------------------
// verify-logic

int cmd_verify_logic(const GlobalOpts& g, double delay_us, long long samples,
                     bool inject_bug) {
    cimsim::RunConfig cfg = resolve_config(g);
    DirLock lock(g.out_dir);

    using cimsim::LogicOp;
    const LogicOp ops[4] = {LogicOp::NAND, LogicOp::AND, LogicOp::XOR, LogicOp::OR};

    // Exhaustive truth table: 4 ops x 8 input triples.
    int mismatches = 0;
    for (LogicOp op : ops) {
        for (int x = 0; x < 2; ++x) {
            for (int w = 0; w < 2; ++w) {
                for (int k = 0; k < 2; ++k) {
                    bool got = cimsim::compute_gate(x, w, k, op);
                    if (inject_bug && op == LogicOp::XOR && x && w && !k) got = !got;
                    const bool want = x && cimsim::logic_op(op, w, k);
                    if (got != want) {
                        ++mismatches;
                        std::cout << "MISMATCH op=" << cimsim::to_string(op) << " x=" << x
                                  << " w=" << w << " k=" << k << " got=" << got
                                  << " want=" << want << '\n';
                    }
                }
            }
        }
    }

    // Leakage sweep: random gate evaluations at the requested delay on a
    // binary block, scored against the boolean oracle.
    cimsim::DeviceParams dev = cimsim::DeviceParams::with_levels(2);
    cimsim::TimingParams timing = cfg.timing;
    cimsim::Rng rng(cfg.seed);
    cimsim::CimBlock block(dev, timing, rng.substream(1));
    block.form_all();
    std::vector<std::vector<int>> levels(static_cast<std::size_t>(block.rows()),
                                         std::vector<int>(static_cast<std::size_t>(block.cols()), 0));
    cimsim::Rng wrng = rng.substream(2);
    for (auto& row : levels) {
        for (auto& v : row) v = wrng.uniform_int(2);
    }
    block.program_block(levels);

    cimsim::Rng srng = rng.substream(3);
    long long flips = 0, evaluated = 0;
    while (evaluated < samples) {
        const int row = srng.uniform_int(block.data_rows());
        const bool x = srng.uniform_int(2) != 0;
        const bool k = srng.uniform_int(2) != 0;
        const LogicOp op = ops[srng.uniform_int(4)];
        const auto out = block.compute_row_parallel(row, x, k, op, delay_us, srng);
        for (int c = 0; c < block.data_cols() && evaluated < samples; ++c) {
            const bool want =
                x && cimsim::logic_op(op, block.read_bit_binary(row, c), k);
            if ((out[static_cast<std::size_t>(c)] != 0) != want) ++flips;
            ++evaluated;
        }
    }
    const double empirical = static_cast<double>(flips) / static_cast<double>(evaluated);
    const double expected = timing.ber(delay_us);

    json report;
    report["schema"] = "cimsim/verify_logic/v1";
    report["seed"] = cfg.seed;
    report["truth_table_mismatches"] = mismatches;
    report["delay_us"] = delay_us;
    report["samples"] = evaluated;
    report["empirical_ber"] = empirical;
    report["expected_ber"] = expected;
    write_text(g.out_dir + "/verify_logic.json", report.dump(2) + "\n");

    const bool nominal = delay_us <= timing.leak_critical_us;
    std::cout << "verify-logic: truth table " << (mismatches == 0 ? "PASS" : "FAIL")
              << " (" << mismatches << " mismatches), delay " << delay_us
              << " us: empirical BER " << empirical << " (expected " << expected << ")\n";
    if (mismatches > 0) return kExitMismatch;
    if (nominal && flips > 0) {
        std::cout << "FAIL: bit errors in the zero-BER regime\n";
        return kExitMismatch;
    }
    if (!nominal) {
        std::cout << "warning: delay beyond the leakage threshold, nonzero BER expected\n";
    }
    std::cout << "PASS\n";
    return 0;
}

// ---------------------------------------------------------------------------
// mac-oracle

int cmd_mac_oracle(const GlobalOpts& g, bool exhaustive) {
    cimsim::RunConfig cfg = resolve_config(g);
    DirLock lock(g.out_dir);
    cimsim::Rng rng(cfg.seed);

    cimsim::DeviceParams dev4 = cimsim::DeviceParams::with_levels(4);
    cimsim::CimBlock block(dev4, cfg.timing, rng.substream(1));
    block.form_all();
    cimsim::CimBlock scratch(cimsim::DeviceParams::with_levels(2), cfg.timing,
                             rng.substream(2));
    scratch.form_all();

    long long mul_cases = 0, mul_bad = 0;
    const int step = exhaustive ? 1 : 16;
    for (int w = -127; w <= 127; w += step) {
        cimsim::store_weight(block, 0, 0, cimsim::SlicedWeight::encode(w));
        for (int x = -127; x <= 127; x += step) {
            const auto r = cimsim::cim_multiply(x, block, 0, 0);
            if (r.value() != static_cast<std::int64_t>(x) * w) ++mul_bad;
            ++mul_cases;
        }
    }

    long long eu_cases = 0, eu_bad = 0;
    for (int x = -127; x <= 127; x += step) {
        for (int y = -127; y <= 127; y += step) {
            const std::int64_t want =
                static_cast<std::int64_t>(x - y) * static_cast<std::int64_t>(x - y);
            if (cimsim::euclid_sq_int8_cim(x, y, scratch) != want) ++eu_bad;
            ++eu_cases;
        }
    }

    // Randomized dot products on stored columns.
    long long dot_cases = 0, dot_bad = 0;
    cimsim::Rng drng = rng.substream(3);
    for (int trial = 0; trial < 200; ++trial) {
        const int len = 64;
        std::vector<int> x(static_cast<std::size_t>(len));
        std::int64_t want = 0;
        for (int i = 0; i < len; ++i) {
            const int wv = drng.uniform_int(255) - 127;
            const int xv = drng.uniform_int(255) - 127;
            cimsim::store_weight(block, i, 4, cimsim::SlicedWeight::encode(wv));
            x[static_cast<std::size_t>(i)] = xv;
            want += static_cast<std::int64_t>(wv) * xv;
        }
        if (cimsim::cim_dot(x, block, 4).value() != want) ++dot_bad;
        ++dot_cases;
    }

    const auto spot_mul = [&] {
        cimsim::store_weight(block, 0, 0, cimsim::SlicedWeight::encode(-27));
        return cimsim::cim_multiply(7, block, 0, 0).value();
    }();
    const auto spot_eu = cimsim::euclid_sq_int8_cim(7, -27, scratch);

    json report;
    report["schema"] = "cimsim/mac_oracle/v1";
    report["multiply_cases"] = mul_cases;
    report["multiply_mismatches"] = mul_bad;
    report["euclid_cases"] = eu_cases;
    report["euclid_mismatches"] = eu_bad;
    report["dot_cases"] = dot_cases;
    report["dot_mismatches"] = dot_bad;
    report["spot_multiply_7_m27"] = spot_mul;
    report["spot_euclid_7_m27"] = spot_eu;
    write_text(g.out_dir + "/mac_oracle.json", report.dump(2) + "\n");

    std::cout << "mac-oracle: multiply " << mul_cases << " cases (" << mul_bad
              << " bad), euclid " << eu_cases << " cases (" << eu_bad << " bad), dot "
              << dot_cases << " trials (" << dot_bad << " bad)\n";
    std::cout << "spot: 7 * -27 = " << spot_mul << ", (7 - -27)^2 = " << spot_eu << '\n';
    if (mul_bad || eu_bad || dot_bad) {
        std::cout << "FAIL\n";
        return kExitMismatch;
    }
    std::cout << "PASS\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const GlobalOpts& g, bool no_prune, const std::string& data_override) {
    cimsim::RunConfig cfg = resolve_config(g);
    if (!require_seed(cfg, "train")) return kExitConfig;
    if (no_prune) cfg.train.prune_enabled = false;
    if (!data_override.empty()) cfg.train.dataset_dir = data_override;

    if (!cimsim::idx_dir_present(cfg.train.dataset_dir)) {
        std::cerr << "train: dataset not found under '" << cfg.train.dataset_dir
                  << "' (expected train/t10k IDX files; see the dataset-gen command)\n";
        return kExitDataset;
    }
    DirLock lock(g.out_dir);

    const cimsim::Dataset train_full = cimsim::load_idx_dir(cfg.train.dataset_dir, true);
    const cimsim::Dataset test_full = cimsim::load_idx_dir(cfg.train.dataset_dir, false);
    cimsim::Rng rng(cfg.seed);
    const cimsim::Dataset train_set =
        cimsim::subset(train_full, static_cast<std::size_t>(cfg.train.train_subset),
                       rng.substream(0x545241));
    const cimsim::Dataset test_set =
        cimsim::subset(test_full, static_cast<std::size_t>(cfg.train.test_subset),
                       rng.substream(0x544553));

    cimsim::EnergyLedger ledger;
    cimsim::Trainer trainer(cimsim::NetworkSpec::mnist_cnn(), cfg);
    const cimsim::TrainResult result = trainer.train(train_set, test_set, &ledger);

    write_text(g.out_dir + "/history.json", result.history_json(cfg.seed) + "\n");
    write_text(g.out_dir + "/features.csv", result.features_csv());
    write_text(g.out_dir + "/prune_history.csv", result.prune_history_csv());
    const cimsim::EnergyReport energy =
        cimsim::inference_energy_report(trainer.layer_ops(), cfg.energy);
    write_text(g.out_dir + "/energy.json", energy.to_json() + "\n");
    trainer.save_checkpoint(g.out_dir);

    json ledger_json;
    ledger_json["schema"] = "cimsim/ledger/v1";
    ledger_json["gate_evals"] = ledger.gate_evals.load();
    ledger_json["lane64_ops"] = ledger.lane64_ops.load();
    ledger_json["shift_add_passes"] = ledger.shift_add_passes.load();
    ledger_json["accumulations"] = ledger.accumulations.load();
    ledger_json["cell_writes"] = ledger.cell_writes.load();
    ledger_json["search_passes"] = ledger.search_passes.load();
    write_text(g.out_dir + "/ledger.json", ledger_json.dump(2) + "\n");

    std::cout << "train: final accuracy " << result.final_accuracy << ", prune fraction "
              << result.final_prune_fraction << ", conv training ops reduction "
              << result.ops_reduction_pct << "%\n";
    return 0;
}

// ---------------------------------------------------------------------------
// energy

int cmd_energy(const GlobalOpts& g, const std::string& manifest_path) {
    cimsim::RunConfig cfg = resolve_config(g);

    std::ifstream in(manifest_path);
    if (!in) {
        std::cerr << "energy: cannot open manifest " << manifest_path << '\n';
        return kExitConfig;
    }
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        std::cerr << "energy: bad manifest: " << e.what() << '\n';
        return kExitConfig;
    }

    std::vector<cimsim::LayerOps> layers;
    try {
        for (const auto& jl : manifest.at("layers")) {
            cimsim::LayerOps ops;
            ops.name = jl.at("name").get<std::string>();
            const std::string type = jl.at("type").get<std::string>();
            if (type == "conv") {
                ops.is_conv = true;
                ops.c_in = jl.at("c_in").get<std::uint64_t>();
                ops.c_out = jl.at("c_out").get<std::uint64_t>();
                ops.kh = jl.at("kh").get<std::uint64_t>();
                ops.kw = jl.at("kw").get<std::uint64_t>();
                ops.h_out = jl.at("h_out").get<std::uint64_t>();
                ops.w_out = jl.at("w_out").get<std::uint64_t>();
                ops.active_c_in = jl.value("active_c_in", ops.c_in);
                ops.active_c_out = jl.value("active_c_out", ops.c_out);
            } else if (type == "fc") {
                ops.is_conv = false;
                ops.w_h = jl.at("w_h").get<std::uint64_t>();
                ops.w_w = jl.at("w_w").get<std::uint64_t>();
            } else {
                std::cerr << "energy: unknown layer type '" << type << "'\n";
                return kExitConfig;
            }
            layers.push_back(std::move(ops));
        }
    } catch (const json::exception& e) {
        std::cerr << "energy: bad manifest: " << e.what() << '\n';
        return kExitConfig;
    }

    DirLock lock(g.out_dir);
    const cimsim::EnergyReport report = cimsim::inference_energy_report(layers, cfg.energy);
    write_text(g.out_dir + "/energy.json", report.to_json() + "\n");
    write_text(g.out_dir + "/energy.csv", report.to_csv());
    std::cout << report.to_json() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// dataset-gen

int cmd_dataset_gen(const GlobalOpts& g, const std::string& dir, int n_train, int n_test) {
    if (n_train < 1 || n_test < 1) {
        std::cerr << "dataset-gen: sample counts must be >= 1\n";
        return kExitConfig;
    }
    cimsim::RunConfig cfg = resolve_config(g);
    fs::create_directories(dir);
    cimsim::Rng rng(cfg.seed);
    const cimsim::Dataset train =
        cimsim::synth_digits(static_cast<std::size_t>(n_train), rng.substream(1));
    const cimsim::Dataset test =
        cimsim::synth_digits(static_cast<std::size_t>(n_test), rng.substream(2));
    cimsim::save_idx(train, dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
    cimsim::save_idx(test, dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
    std::cout << "dataset-gen: wrote " << n_train << " train / " << n_test
              << " test samples under " << dir << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cimsim: functional simulator of a digital RRAM compute-in-memory chip"};
    app.require_subcommand(1);

    GlobalOpts g;
    std::uint64_t seed_value = 0;
    app.add_option("--config", g.config_path, "TOML run configuration");
    app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed_value, "override the run seed");

    auto* mc = app.add_subcommand("device-mc", "program-and-verify Monte Carlo");
    int cells = 16384, levels = 4;
    mc->add_option("--cells", cells, "number of cells")->capture_default_str();
    mc->add_option("--levels", levels, "resistance levels per cell")->capture_default_str();

    auto* vl = app.add_subcommand("verify-logic", "exhaustive truth table + BER check");
    double delay_us = 1.0;
    long long samples = 1'000'000;
    bool inject_bug = false;
    vl->add_option("--delay-us", delay_us, "compute delay")->capture_default_str();
    vl->add_option("--samples", samples, "gate evaluations")->capture_default_str();
    vl->add_flag("--inject-gate-bug", inject_bug)->group(""); // negative-control fixture

    auto* mo = app.add_subcommand("mac-oracle", "arithmetic equivalence suites");
    bool exhaustive = true;
    mo->add_flag("--exhaustive,!--quick", exhaustive, "full 255x255 domains")
        ->capture_default_str();

    auto* tr = app.add_subcommand("train", "alternating train/prune run on the simulated chip");
    bool no_prune = false;
    std::string data_override;
    tr->add_flag("--no-prune", no_prune, "disable the prune sweeps");
    tr->add_option("--data", data_override, "dataset directory override");

    auto* en = app.add_subcommand("energy", "inference energy comparison from a manifest");
    std::string manifest_path;
    en->add_option("--network", manifest_path, "network ops manifest")->required();

    auto* dg = app.add_subcommand("dataset-gen", "write a synthetic digit dataset (IDX)");
    std::string ds_dir = "data";
    int ds_train = 4000, ds_test = 1000;
    dg->add_option("--dir", ds_dir, "target directory")->capture_default_str();
    dg->add_option("--train", ds_train, "training samples")->capture_default_str();
    dg->add_option("--test", ds_test, "test samples")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : kExitConfig;
    }
    if (seed_opt->count() > 0) g.seed_flag = seed_value;

    try {
        if (mc->parsed()) return cmd_device_mc(g, cells, levels);
        if (vl->parsed()) return cmd_verify_logic(g, delay_us, samples, inject_bug);
        if (mo->parsed()) return cmd_mac_oracle(g, exhaustive);
        if (tr->parsed()) return cmd_train(g, no_prune, data_override);
        if (en->parsed()) return cmd_energy(g, manifest_path);
        if (dg->parsed()) return cmd_dataset_gen(g, ds_dir, ds_train, ds_test);
    } catch (const cimsim::SimError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
