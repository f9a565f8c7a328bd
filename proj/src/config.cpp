#include "cimsim/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "cimsim/errors.hpp"

namespace cimsim {

void TrainConfig::validate() const {
    if (epochs < 1) raise(Errc::BadConfig, "train.epochs must be >= 1");
    if (batch_size < 1) raise(Errc::BadConfig, "train.batch_size must be >= 1");
    if (learning_rate <= 0.0) raise(Errc::BadConfig, "train.learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) raise(Errc::BadConfig, "train.momentum must be in [0, 1)");
    if (train_subset < 1 || test_subset < 1) {
        raise(Errc::BadConfig, "train subset sizes must be >= 1");
    }
    if (activation_bits < 1 || activation_bits > 8) {
        raise(Errc::BadConfig, "train.activation_bits must be in [1, 8]");
    }
}

void RunConfig::validate() const {
    device.validate();
    timing.validate();
    prune.validate();
    train.validate();
}

namespace {

struct RawValue {
    std::string text;
    int line = 0;
    bool consumed = false;
};

using Section = std::map<std::string, RawValue>;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

class ConfigReader {
public:
    explicit ConfigReader(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            line = trim(strip_comment(line));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') bad(lineno, "unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty()) bad(lineno, "empty section name");
                sections_.try_emplace(section);
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) bad(lineno, "expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty() || value.empty()) bad(lineno, "expected key = value");
            auto [it, inserted] = sections_[section].try_emplace(key, RawValue{value, lineno});
            if (!inserted) bad(lineno, "duplicate key '" + key + "'");
        }
    }

    bool has_section(const std::string& name) const { return sections_.count(name) != 0; }

    bool has(const std::string& section, const std::string& key) const {
        auto sit = sections_.find(section);
        return sit != sections_.end() && sit->second.count(key) != 0;
    }

    template <typename T, typename Parse>
    void get(const std::string& section, const std::string& key, T& out, Parse parse) {
        auto sit = sections_.find(section);
        if (sit == sections_.end()) return;
        auto it = sit->second.find(key);
        if (it == sit->second.end()) return;
        it->second.consumed = true;
        out = parse(it->second.text, it->second.line);
    }

    void get_double(const std::string& s, const std::string& k, double& out) {
        get(s, k, out, [this](const std::string& v, int line) { return parse_double(v, line); });
    }
    void get_int(const std::string& s, const std::string& k, int& out) {
        get(s, k, out, [this](const std::string& v, int line) {
            return static_cast<int>(parse_int(v, line));
        });
    }
    void get_u64(const std::string& s, const std::string& k, std::uint64_t& out) {
        get(s, k, out, [this](const std::string& v, int line) {
            const long long x = parse_int(v, line);
            if (x < 0) bad(line, "expected a non-negative integer");
            return static_cast<std::uint64_t>(x);
        });
    }
    void get_bool(const std::string& s, const std::string& k, bool& out) {
        get(s, k, out, [this](const std::string& v, int line) {
            if (v == "true") return true;
            if (v == "false") return false;
            bad(line, "expected true or false");
            return false;
        });
    }
    void get_string(const std::string& s, const std::string& k, std::string& out) {
        get(s, k, out, [this](const std::string& v, int line) {
            if (v.size() < 2 || v.front() != '"' || v.back() != '"') {
                bad(line, "expected a quoted string");
            }
            return v.substr(1, v.size() - 2);
        });
    }
    void get_double_array(const std::string& s, const std::string& k,
                          std::vector<double>& out) {
        get(s, k, out, [this](const std::string& v, int line) {
            if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
                bad(line, "expected [a, b, ...]");
            }
            std::vector<double> values;
            std::string body = v.substr(1, v.size() - 2);
            std::istringstream items(body);
            std::string item;
            while (std::getline(items, item, ',')) {
                item = trim(item);
                if (item.empty()) bad(line, "empty array element");
                values.push_back(parse_double(item, line));
            }
            return values;
        });
    }

    // Every key must have been consumed by a get_* call.
    void reject_unknown(const std::vector<std::string>& known_sections) const {
        for (const auto& [name, section] : sections_) {
            bool known = name.empty();
            for (const auto& k : known_sections) known = known || k == name;
            if (!known) {
                raise(Errc::BadConfig, "config: unknown section [" + name + "]");
            }
            for (const auto& [key, value] : section) {
                if (!value.consumed) {
                    raise(Errc::BadConfig, "config: unknown key '" +
                                               (name.empty() ? key : name + "." + key) +
                                               "' (line " + std::to_string(value.line) + ")");
                }
            }
        }
    }

private:
    [[noreturn]] static void bad(int line, const std::string& msg) {
        raise(Errc::BadConfig, "config line " + std::to_string(line) + ": " + msg);
    }
    double parse_double(const std::string& v, int line) {
        double out = 0.0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
            bad(line, "expected a number, got '" + v + "'");
        }
        return out;
    }
    long long parse_int(const std::string& v, int line) {
        long long out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
            bad(line, "expected an integer, got '" + v + "'");
        }
        return out;
    }

    std::map<std::string, Section> sections_;
};

} // namespace

RunConfig parse_config_text(const std::string& text) {
    ConfigReader reader(text);
    RunConfig cfg;

    cfg.seed_provided = reader.has("", "seed");
    reader.get_u64("", "seed", cfg.seed);
    reader.get_string("", "out_dir", cfg.out_dir);

    int n_levels = cfg.device.n_levels;
    reader.get_int("device", "n_levels", n_levels);
    if (n_levels != cfg.device.n_levels) cfg.device = DeviceParams::with_levels(n_levels);
    reader.get_double("device", "program_sigma", cfg.device.program_sigma);
    reader.get_double("device", "tolerance", cfg.device.tolerance);
    reader.get_double("device", "form_mean_v", cfg.device.form_mean_v);
    reader.get_double("device", "form_sigma_v", cfg.device.form_sigma_v);
    reader.get_int("device", "max_verify_cycles", cfg.device.max_verify_cycles);
    reader.get_u64("device", "endurance_limit", cfg.device.endurance_limit);
    reader.get_double_array("device", "level_resistances", cfg.device.level_resistances);

    reader.get_double("timing", "cycle_ns", cfg.timing.cycle_ns);
    reader.get_double("timing", "leak_critical_us", cfg.timing.leak_critical_us);
    reader.get_double("timing", "leak_slope_per_us", cfg.timing.leak_slope_per_us);

    reader.get_double("prune", "distance_threshold", cfg.prune.distance_threshold);
    reader.get_bool("prune", "normalized", cfg.prune.normalized);
    reader.get_int("prune", "frequency_threshold", cfg.prune.frequency_threshold);
    reader.get_int("prune", "cadence_epochs", cfg.prune.cadence_epochs);
    reader.get_int("prune", "min_kernels_per_layer", cfg.prune.min_kernels_per_layer);
    reader.get_double("prune", "max_prune_fraction", cfg.prune.max_prune_fraction);
    std::string comparator = "at_most";
    reader.get_string("prune", "comparator", comparator);
    if (comparator == "at_most") {
        cfg.prune.comparator = SimilarityComparator::SimilarIfAtMost;
    } else if (comparator == "at_least") {
        cfg.prune.comparator = SimilarityComparator::SimilarIfAtLeast;
    } else {
        raise(Errc::BadConfig, "prune.comparator must be \"at_most\" or \"at_least\"");
    }

    reader.get_int("train", "epochs", cfg.train.epochs);
    reader.get_int("train", "batch_size", cfg.train.batch_size);
    reader.get_double("train", "learning_rate", cfg.train.learning_rate);
    reader.get_double("train", "momentum", cfg.train.momentum);
    reader.get_int("train", "train_subset", cfg.train.train_subset);
    reader.get_int("train", "test_subset", cfg.train.test_subset);
    reader.get_string("train", "dataset_dir", cfg.train.dataset_dir);
    reader.get_bool("train", "prune_enabled", cfg.train.prune_enabled);
    std::string mode = "simulated";
    reader.get_string("train", "hardware_mode", mode);
    if (mode == "simulated") {
        cfg.train.hardware_mode = HardwareMode::Simulated;
    } else if (mode == "software") {
        cfg.train.hardware_mode = HardwareMode::SoftwareOracle;
    } else {
        raise(Errc::BadConfig, "train.hardware_mode must be \"simulated\" or \"software\"");
    }
    reader.get_int("train", "activation_bits", cfg.train.activation_bits);

    reader.get_double("energy", "scaled_v", cfg.energy.scaled_v);
    reader.get_double("energy", "scaled_f_hz", cfg.energy.scaled_f_hz);
    reader.get_double("energy", "v0", cfg.energy.v0);
    reader.get_double("energy", "f0_hz", cfg.energy.f0_hz);
    reader.get_int("energy", "lanes", cfg.energy.lanes);
    reader.get_double("energy", "gpu_power_w", cfg.energy.gpu.power_w);
    reader.get_double("energy", "gpu_tops", cfg.energy.gpu.peak_int8_tops);

    reader.reject_unknown({"device", "timing", "prune", "train", "energy"});

    cfg.energy.cycle_ns = cfg.timing.cycle_ns;
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(Errc::BadConfig, "cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

} // namespace cimsim
