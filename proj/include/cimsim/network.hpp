#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cimsim/chip.hpp"
#include "cimsim/config.hpp"
#include "cimsim/mnist.hpp"
#include "cimsim/pruning.hpp"

namespace cimsim {

struct ConvLayerSpec {
    int c_in = 0;
    int c_out = 0;
    int k = 3;
    int pad = 1;
    bool pool = false; // 2x2 max pool after ReLU
};

struct NetworkSpec {
    int input_h = 28;
    int input_w = 28;
    std::vector<ConvLayerSpec> convs;
    int fc_in = 0;
    int fc_out = 10;

    // Binarized 3-conv + FC digit classifier:
    // conv 1->32 (pool), conv 32->64 (pool), conv 64->32, fc 1568->10.
    static NetworkSpec mnist_cnn();

    void validate() const; // shapes chain; flatten size matches fc_in
};

struct ForwardOutput {
    std::vector<double> logits;
    int predicted = 0;
    std::vector<double> features; // post-flatten true values
};

struct EpochRecord {
    int epoch = 0;
    double test_accuracy = 0.0;
    std::vector<int> active_kernels;
    std::vector<std::vector<int>> pruned_ids; // per conv layer, this epoch
    std::uint64_t conv_ops_per_image = 0;
    std::uint64_t fc_ops_per_image = 0;
    std::uint64_t train_conv_ops = 0;
    std::int64_t total_weights = 0;
    bool modes_match = true;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    double final_accuracy = 0.0;
    std::uint64_t train_conv_ops_total = 0;
    std::uint64_t train_conv_ops_unpruned = 0;
    double ops_reduction_pct = 0.0;
    double final_prune_fraction = 0.0;
    PruneState prune;
    std::vector<std::vector<double>> features;
    std::vector<int> feature_labels;

    std::string history_json(std::uint64_t seed) const;
    std::string features_csv() const;
    std::string prune_history_csv() const;
};

// Sign binarization of latent weights to {+1, -1} stored as bits {1, 0};
// zero maps to +1.
std::uint8_t binarize_weight(double latent);

// Binarized CNN on the simulated arrays: integer forward pass (bit-serial
// AND lowering of the +-1 convolutions), software backward pass with the
// straight-through estimator, and the per-cadence similarity-driven prune
// sweep on the resident weights.
class Trainer {
public:
    Trainer(NetworkSpec spec, RunConfig cfg);

    TrainResult train(const Dataset& train_data, const Dataset& test_data,
                      EnergyLedger* ledger = nullptr);

    // Forward pass of one image through the chosen engine. Simulated and
    // SoftwareOracle agree bit-for-bit at nominal delay.
    ForwardOutput forward(const std::uint8_t* image, HardwareMode mode) const;

    double evaluate(const Dataset& data, HardwareMode mode) const;

    // True when the two engines produce identical logits on every sample.
    bool modes_agree(const Dataset& data) const;

    // Similarity sweep over the resident binarized kernels; prunes by
    // candidate-pair frequency. Returns per-layer pruned ids.
    std::vector<std::vector<int>> prune_sweep(int epoch, EnergyLedger* ledger = nullptr);

    // Reprograms every layer's active kernels from the current weights.
    void program_chips();

    // Weight manifest (JSON) plus one CIMB image per block under dir/blocks.
    void save_checkpoint(const std::string& dir) const;

    std::uint64_t conv_ops_per_image(bool pruned_mask) const;
    std::uint64_t fc_ops_per_image() const;
    std::vector<LayerOps> layer_ops() const;

    const NetworkSpec& spec() const { return spec_; }
    const PruneState& prune_state() const { return prune_; }
    PruneState& prune_state() { return prune_; }
    LayerChip& chip(int layer) { return chips_[static_cast<std::size_t>(layer)]; }
    const std::vector<std::uint8_t>& layer_bits(int layer) const {
        return convs_[static_cast<std::size_t>(layer)].bits;
    }
    void set_latent(int layer, int kernel, int index, double value);
    double latent(int layer, int kernel, int index) const;
    void refresh_bits();

    double& fc_weight(int out, int in) {
        return fc_w_[static_cast<std::size_t>(out) * spec_.fc_in + in];
    }
    double& fc_bias(int out) { return fc_b_[static_cast<std::size_t>(out)]; }
    const std::vector<double>& fc_weight_grads() const { return fc_gw_; }
    const std::vector<double>& fc_bias_grads() const { return fc_gb_; }

    // Cross-entropy loss of one sample; the quantity the accumulated
    // gradients differentiate.
    double sample_loss(const std::uint8_t* image, int label, HardwareMode mode) const;

    // One forward/backward pass accumulating gradients (no update).
    void accumulate_sample(const std::uint8_t* image, int label, HardwareMode mode);

    // Applies the accumulated gradients as one batch of the given size.
    void apply_batch(int batch_count) { apply_updates(batch_count); }

private:
    struct ConvLayer {
        ConvLayerSpec spec;
        int h_in = 0, w_in = 0;   // conv input dims
        int h_out = 0, w_out = 0; // conv output dims
        int ph = 0, pw = 0;       // post-pool dims
        int len = 0;              // c_in * k * k
        std::vector<double> latent; // c_out x len
        std::vector<double> vel;
        std::vector<std::uint8_t> bits;
        std::vector<double> signs; // +-1 view of bits for the backward pass
        std::vector<std::int32_t> patch_index; // (h_out*w_out) x len, -1 = padding
    };

    struct LayerTrace {
        std::vector<std::int32_t> in_q;     // quantized input, [0, 255]
        std::vector<std::int32_t> conv_out; // pre-ReLU
        std::vector<std::int32_t> pooled;   // ReLU (+pool)
        std::vector<std::int32_t> argmax;   // pooled cell -> conv-out index
        // d(next normalized input)/d(this layer's pooled true value);
        // max-abs calibration factor of the re-quantization step.
        double quant_factor = 1.0;
    };

    struct SampleTrace {
        std::vector<LayerTrace> layers;
        std::vector<double> features;
        std::vector<double> logits;
        std::vector<double> probs;
    };

    void forward_trace(const std::uint8_t* image, HardwareMode mode,
                       SampleTrace& trace, EnergyLedger* ledger) const;
    void backward_accumulate(const SampleTrace& trace, int label);
    void apply_updates(int batch_count);
    void build_patch(const ConvLayer& layer, const std::vector<std::int32_t>& in_q,
                     int pix, std::vector<std::int32_t>& patch) const;

    NetworkSpec spec_;
    RunConfig cfg_;
    Rng rng_;
    std::vector<ConvLayer> convs_;
    std::vector<double> fc_w_, fc_b_, fc_wv_, fc_bv_;
    std::vector<double> fc_gw_, fc_gb_;
    std::vector<std::vector<double>> conv_grads_;
    PruneState prune_;
    std::vector<LayerChip> chips_;
    int global_prune_budget_ = 0;
};

} // namespace cimsim
