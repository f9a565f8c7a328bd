#pragma once

#include <cstdint>
#include <string>

#include "cimsim/block.hpp"
#include "cimsim/device.hpp"
#include "cimsim/energy.hpp"
#include "cimsim/pruning.hpp"

namespace cimsim {

enum class HardwareMode : std::uint8_t { Simulated, SoftwareOracle };

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 0.04;
    double momentum = 0.9;
    int train_subset = 2000;
    int test_subset = 500;
    std::string dataset_dir = "data";
    bool prune_enabled = true;
    HardwareMode hardware_mode = HardwareMode::Simulated;
    int activation_bits = 8;

    void validate() const;
};

// The whole run configuration; loadable from a TOML file with sections
// [device], [timing], [prune], [train], [energy]. Unknown keys are
// rejected; missing keys keep the defaults below.
struct RunConfig {
    std::uint64_t seed = 1;
    bool seed_provided = false; // set by config file, env var or flag
    std::string out_dir = "out";
    DeviceParams device;
    TimingParams timing;
    PruneConfig prune;
    TrainConfig train;
    EnergyModelConfig energy;

    void validate() const;
};

// Parses the TOML subset the config uses: [section] headers, scalar
// key = value pairs (integer, float, bool, string, number array) and #
// comments. Throws SimError(BadConfig) on syntax errors or unknown keys.
RunConfig load_config(const std::string& path);

RunConfig parse_config_text(const std::string& text);

} // namespace cimsim
