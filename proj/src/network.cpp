#include "cimsim/network.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cimsim/errors.hpp"

namespace cimsim {

NetworkSpec NetworkSpec::mnist_cnn() {
    NetworkSpec s;
    s.convs = {{1, 32, 3, 1, true}, {32, 64, 3, 1, true}, {64, 32, 3, 1, false}};
    s.fc_in = 32 * 7 * 7;
    s.fc_out = 10;
    return s;
}

void NetworkSpec::validate() const {
    if (convs.empty()) raise(Errc::BadConfig, "network needs at least one conv layer");
    int c = convs.front().c_in;
    int h = input_h, w = input_w;
    for (const auto& l : convs) {
        if (l.c_in != c) raise(Errc::ShapeMismatch, "conv layer input channels do not chain");
        if (l.k % 2 == 0 || l.pad < 0) raise(Errc::BadConfig, "odd kernel sizes only");
        h = h + 2 * l.pad - l.k + 1;
        w = w + 2 * l.pad - l.k + 1;
        if (l.pool) {
            h /= 2;
            w /= 2;
        }
        c = l.c_out;
    }
    if (c * h * w != fc_in) {
        raise(Errc::ShapeMismatch, "flatten size does not match the fc input width");
    }
    if (fc_out < 2) raise(Errc::BadConfig, "fc_out must be >= 2");
}

std::uint8_t binarize_weight(double latent) { return latent >= 0.0 ? 1 : 0; }

namespace {

double csv_num(double v) { return v == 0.0 ? 0.0 : v; } // normalize -0

} // namespace

std::string TrainResult::history_json(std::uint64_t seed) const {
    nlohmann::json j;
    j["schema"] = "cimsim/history/v1";
    j["seed"] = seed;
    j["final_accuracy"] = final_accuracy;
    j["final_prune_fraction"] = final_prune_fraction;
    j["train_conv_ops_total"] = train_conv_ops_total;
    j["train_conv_ops_unpruned"] = train_conv_ops_unpruned;
    j["ops_reduction_pct"] = ops_reduction_pct;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : epochs) {
        nlohmann::json je;
        je["epoch"] = e.epoch;
        je["test_accuracy"] = e.test_accuracy;
        je["active_kernels"] = e.active_kernels;
        je["pruned_ids"] = e.pruned_ids;
        je["conv_ops_per_image"] = e.conv_ops_per_image;
        je["fc_ops_per_image"] = e.fc_ops_per_image;
        je["train_conv_ops"] = e.train_conv_ops;
        je["total_weights"] = e.total_weights;
        je["modes_match"] = e.modes_match;
        j["epochs"].push_back(std::move(je));
    }
    return j.dump(2);
}

std::string TrainResult::features_csv() const {
    std::ostringstream out;
    const std::size_t width = features.empty() ? 0 : features.front().size();
    for (std::size_t i = 0; i < width; ++i) out << 'f' << i << ',';
    out << "label\n";
    char buf[64];
    for (std::size_t r = 0; r < features.size(); ++r) {
        for (double v : features[r]) {
            std::snprintf(buf, sizeof(buf), "%.9g", csv_num(v));
            out << buf << ',';
        }
        out << feature_labels[r] << '\n';
    }
    return out.str();
}

std::string TrainResult::prune_history_csv() const { return prune.history_csv(); }

Trainer::Trainer(NetworkSpec spec, RunConfig cfg)
    : spec_(std::move(spec)), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    spec_.validate();
    cfg_.validate();

    int h = spec_.input_h, w = spec_.input_w;
    std::vector<int> kernels_per_layer;
    for (const auto& ls : spec_.convs) {
        ConvLayer layer;
        layer.spec = ls;
        layer.h_in = h;
        layer.w_in = w;
        layer.h_out = h + 2 * ls.pad - ls.k + 1;
        layer.w_out = w + 2 * ls.pad - ls.k + 1;
        layer.ph = ls.pool ? layer.h_out / 2 : layer.h_out;
        layer.pw = ls.pool ? layer.w_out / 2 : layer.w_out;
        layer.len = ls.c_in * ls.k * ls.k;
        layer.latent.resize(static_cast<std::size_t>(ls.c_out) * layer.len);
        layer.vel.assign(layer.latent.size(), 0.0);
        layer.bits.resize(layer.latent.size());
        layer.signs.resize(layer.latent.size());
        // Patch gather table shared by every sample.
        layer.patch_index.assign(
            static_cast<std::size_t>(layer.h_out) * layer.w_out * layer.len, -1);
        for (int y = 0; y < layer.h_out; ++y) {
            for (int x = 0; x < layer.w_out; ++x) {
                const std::size_t base =
                    (static_cast<std::size_t>(y) * layer.w_out + x) * layer.len;
                int idx = 0;
                for (int ci = 0; ci < ls.c_in; ++ci) {
                    for (int dy = 0; dy < ls.k; ++dy) {
                        for (int dx = 0; dx < ls.k; ++dx) {
                            const int sy = y + dy - ls.pad;
                            const int sx = x + dx - ls.pad;
                            layer.patch_index[base + static_cast<std::size_t>(idx++)] =
                                (sy < 0 || sy >= layer.h_in || sx < 0 || sx >= layer.w_in)
                                    ? -1
                                    : (ci * layer.h_in + sy) * layer.w_in + sx;
                        }
                    }
                }
            }
        }
        h = layer.ph;
        w = layer.pw;
        kernels_per_layer.push_back(ls.c_out);
        convs_.push_back(std::move(layer));
    }

    // Latent init: scaled uniform, then binarized onto the arrays.
    Rng init = rng_.substream(0x494E4954);
    for (auto& layer : convs_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.len));
        for (auto& v : layer.latent) v = (init.uniform() * 2.0 - 1.0) * bound;
    }
    fc_w_.resize(static_cast<std::size_t>(spec_.fc_out) * spec_.fc_in);
    fc_b_.assign(static_cast<std::size_t>(spec_.fc_out), 0.0);
    const double fc_bound = 1.0 / std::sqrt(static_cast<double>(spec_.fc_in));
    for (auto& v : fc_w_) v = (init.uniform() * 2.0 - 1.0) * fc_bound;
    fc_wv_.assign(fc_w_.size(), 0.0);
    fc_bv_.assign(fc_b_.size(), 0.0);
    fc_gw_.assign(fc_w_.size(), 0.0);
    fc_gb_.assign(fc_b_.size(), 0.0);
    conv_grads_.resize(convs_.size());
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        conv_grads_[l].assign(convs_[l].latent.size(), 0.0);
    }

    prune_ = PruneState::init(kernels_per_layer);
    global_prune_budget_ = static_cast<int>(cfg_.prune.max_prune_fraction *
                                            prune_.total_kernels());

    refresh_bits();
    if (cfg_.train.hardware_mode == HardwareMode::Simulated) {
        DeviceParams binary_dev = DeviceParams::with_levels(2);
        binary_dev.program_sigma = cfg_.device.program_sigma;
        binary_dev.tolerance = cfg_.device.tolerance;
        binary_dev.form_mean_v = cfg_.device.form_mean_v;
        binary_dev.form_sigma_v = cfg_.device.form_sigma_v;
        binary_dev.max_verify_cycles = cfg_.device.max_verify_cycles;
        binary_dev.endurance_limit = cfg_.device.endurance_limit;
        Rng chip_rng = rng_.substream(0x43484950);
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            chips_.emplace_back(convs_[l].spec.c_out, convs_[l].len, binary_dev,
                                cfg_.timing, chip_rng.substream(l));
        }
        program_chips();
    }
}

void Trainer::refresh_bits() {
    for (auto& layer : convs_) {
        for (std::size_t i = 0; i < layer.latent.size(); ++i) {
            layer.bits[i] = binarize_weight(layer.latent[i]);
            layer.signs[i] = layer.bits[i] ? 1.0 : -1.0;
        }
    }
}

void Trainer::program_chips() {
    for (std::size_t l = 0; l < chips_.size(); ++l) {
        chips_[l].program(convs_[l].bits, prune_.active_mask[l]);
    }
}

void Trainer::set_latent(int layer, int kernel, int index, double value) {
    auto& conv = convs_[static_cast<std::size_t>(layer)];
    conv.latent[static_cast<std::size_t>(kernel) * conv.len + index] = value;
}

double Trainer::latent(int layer, int kernel, int index) const {
    const auto& conv = convs_[static_cast<std::size_t>(layer)];
    return conv.latent[static_cast<std::size_t>(kernel) * conv.len + index];
}

void Trainer::build_patch(const ConvLayer& layer, const std::vector<std::int32_t>& in_q,
                          int pix, std::vector<std::int32_t>& patch) const {
    const std::int32_t* idx =
        layer.patch_index.data() + static_cast<std::size_t>(pix) * layer.len;
    for (int i = 0; i < layer.len; ++i) {
        patch[static_cast<std::size_t>(i)] = idx[i] < 0 ? 0 : in_q[static_cast<std::size_t>(idx[i])];
    }
}

void Trainer::forward_trace(const std::uint8_t* image, HardwareMode mode,
                            SampleTrace& trace, EnergyLedger* ledger) const {
    const int maxq = (1 << cfg_.train.activation_bits) - 1;
    trace.layers.resize(convs_.size());

    // Input pixels are the first layer's quantized activations.
    {
        auto& t0 = trace.layers[0];
        const std::size_t n = static_cast<std::size_t>(spec_.input_h) * spec_.input_w;
        t0.in_q.resize(n);
        for (std::size_t i = 0; i < n; ++i) t0.in_q[i] = image[i];
    }

    std::vector<std::int32_t> patch;
    std::vector<std::int64_t> acc;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        const ConvLayer& layer = convs_[l];
        LayerTrace& t = trace.layers[l];
        const auto& active = prune_.active_mask[l];
        const int n_pix = layer.h_out * layer.w_out;
        t.conv_out.assign(static_cast<std::size_t>(layer.spec.c_out) * n_pix, 0);

        patch.resize(static_cast<std::size_t>(layer.len));
        for (int pix = 0; pix < n_pix; ++pix) {
            build_patch(layer, t.in_q, pix, patch);
            std::int64_t patch_sum = 0;
            for (int i = 0; i < layer.len; ++i) patch_sum += patch[static_cast<std::size_t>(i)];

            if (mode == HardwareMode::Simulated) {
                chips_[l].conv_counts(patch, active, cfg_.train.activation_bits, acc,
                                      ledger);
            } else {
                acc.assign(static_cast<std::size_t>(layer.spec.c_out), 0);
                for (int k = 0; k < layer.spec.c_out; ++k) {
                    if (!active[static_cast<std::size_t>(k)]) continue;
                    const std::uint8_t* bits =
                        layer.bits.data() + static_cast<std::size_t>(k) * layer.len;
                    std::int64_t s = 0;
                    for (int i = 0; i < layer.len; ++i) {
                        s += static_cast<std::int64_t>(bits[i]) * patch[static_cast<std::size_t>(i)];
                    }
                    acc[static_cast<std::size_t>(k)] = s;
                }
            }
            for (int k = 0; k < layer.spec.c_out; ++k) {
                if (!active[static_cast<std::size_t>(k)]) continue;
                // +-1 dot product from the AND counts.
                t.conv_out[static_cast<std::size_t>(k) * n_pix + pix] =
                    static_cast<std::int32_t>(2 * acc[static_cast<std::size_t>(k)] - patch_sum);
            }
        }

        // ReLU and pooling, argmax routing recorded for the backward pass.
        const int n_pool = layer.ph * layer.pw;
        t.pooled.assign(static_cast<std::size_t>(layer.spec.c_out) * n_pool, 0);
        t.argmax.assign(t.pooled.size(), 0);
        for (int k = 0; k < layer.spec.c_out; ++k) {
            const std::int32_t* src = t.conv_out.data() + static_cast<std::size_t>(k) * n_pix;
            std::int32_t* dst = t.pooled.data() + static_cast<std::size_t>(k) * n_pool;
            std::int32_t* arg = t.argmax.data() + static_cast<std::size_t>(k) * n_pool;
            if (layer.spec.pool) {
                for (int y = 0; y < layer.ph; ++y) {
                    for (int x = 0; x < layer.pw; ++x) {
                        std::int32_t best = 0;
                        int best_idx = (2 * y) * layer.w_out + 2 * x;
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const int idx = (2 * y + dy) * layer.w_out + (2 * x + dx);
                                const std::int32_t v = std::max(0, src[idx]);
                                if (v > best) {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        dst[y * layer.pw + x] = best;
                        arg[y * layer.pw + x] = best_idx;
                    }
                }
            } else {
                for (int i = 0; i < n_pix; ++i) {
                    dst[i] = std::max(0, src[i]);
                    arg[i] = i;
                }
            }
        }

        // Max-abs re-quantization: the next layer sees ints in [0, maxq]
        // whose true values are normalized to [0, 1].
        std::int32_t m = 0;
        for (auto v : t.pooled) m = std::max(m, v);
        t.quant_factor = m == 0 ? 1.0 : 255.0 / static_cast<double>(m);
        if (l + 1 < convs_.size()) {
            LayerTrace& nt = trace.layers[l + 1];
            nt.in_q.resize(t.pooled.size());
            if (m == 0) {
                std::fill(nt.in_q.begin(), nt.in_q.end(), 0);
            } else {
                for (std::size_t i = 0; i < t.pooled.size(); ++i) {
                    nt.in_q[i] = static_cast<std::int32_t>(
                        static_cast<std::int64_t>(t.pooled[i]) * maxq / m);
                }
            }
        }
    }

    // Flatten (max-abs normalized true values) and run the FC head.
    const LayerTrace& last = trace.layers.back();
    std::int32_t m_last = 0;
    for (auto v : last.pooled) m_last = std::max(m_last, v);
    trace.features.resize(static_cast<std::size_t>(spec_.fc_in));
    for (std::size_t i = 0; i < trace.features.size(); ++i) {
        trace.features[i] = m_last == 0 ? 0.0
                                        : static_cast<double>(last.pooled[i]) /
                                              static_cast<double>(m_last);
    }
    trace.logits.assign(static_cast<std::size_t>(spec_.fc_out), 0.0);
    for (int o = 0; o < spec_.fc_out; ++o) {
        double s = fc_b_[static_cast<std::size_t>(o)];
        const double* w = fc_w_.data() + static_cast<std::size_t>(o) * spec_.fc_in;
        for (int i = 0; i < spec_.fc_in; ++i) s += w[i] * trace.features[static_cast<std::size_t>(i)];
        trace.logits[static_cast<std::size_t>(o)] = s;
    }
    if (ledger) {
        ledger->add_accumulations(static_cast<std::uint64_t>(spec_.fc_out));
    }

    // Softmax for the loss.
    trace.probs.assign(trace.logits.size(), 0.0);
    const double mx = *std::max_element(trace.logits.begin(), trace.logits.end());
    double z = 0.0;
    for (std::size_t o = 0; o < trace.logits.size(); ++o) {
        trace.probs[o] = std::exp(trace.logits[o] - mx);
        z += trace.probs[o];
    }
    for (auto& p : trace.probs) p /= z;
}

double Trainer::sample_loss(const std::uint8_t* image, int label,
                            HardwareMode mode) const {
    SampleTrace trace;
    forward_trace(image, mode, trace, nullptr);
    return -std::log(std::max(trace.probs[static_cast<std::size_t>(label)], 1e-300));
}

void Trainer::accumulate_sample(const std::uint8_t* image, int label,
                                HardwareMode mode) {
    SampleTrace trace;
    forward_trace(image, mode, trace, nullptr);
    backward_accumulate(trace, label);
}

ForwardOutput Trainer::forward(const std::uint8_t* image, HardwareMode mode) const {
    SampleTrace trace;
    forward_trace(image, mode, trace, nullptr);
    ForwardOutput out;
    out.logits = trace.logits;
    out.features = trace.features;
    out.predicted = static_cast<int>(
        std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin());
    return out;
}

double Trainer::evaluate(const Dataset& data, HardwareMode mode) const {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (forward(data.image(i), mode).predicted == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

bool Trainer::modes_agree(const Dataset& data) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ForwardOutput a = forward(data.image(i), HardwareMode::Simulated);
        const ForwardOutput b = forward(data.image(i), HardwareMode::SoftwareOracle);
        if (a.logits != b.logits) return false;
    }
    return true;
}

void Trainer::backward_accumulate(const SampleTrace& trace, int label) {
    // Cross-entropy gradient at the logits.
    std::vector<double> dlogit(trace.probs);
    dlogit[static_cast<std::size_t>(label)] -= 1.0;

    std::vector<double> dfeat(static_cast<std::size_t>(spec_.fc_in), 0.0);
    for (int o = 0; o < spec_.fc_out; ++o) {
        const double g = dlogit[static_cast<std::size_t>(o)];
        fc_gb_[static_cast<std::size_t>(o)] += g;
        double* gw = fc_gw_.data() + static_cast<std::size_t>(o) * spec_.fc_in;
        const double* w = fc_w_.data() + static_cast<std::size_t>(o) * spec_.fc_in;
        for (int i = 0; i < spec_.fc_in; ++i) {
            gw[i] += g * trace.features[static_cast<std::size_t>(i)];
            dfeat[static_cast<std::size_t>(i)] += g * w[i];
        }
    }

    // dfeat is the gradient at the normalized flatten; scale it back onto
    // the last layer's pooled true values through the calibration factor.
    std::vector<double> dnext = std::move(dfeat);
    std::vector<double> dconv;
    std::vector<double> din;
    std::vector<double> patch_true;
    std::vector<double> dpatch;
    for (int l = static_cast<int>(convs_.size()) - 1; l >= 0; --l) {
        const ConvLayer& layer = convs_[static_cast<std::size_t>(l)];
        const LayerTrace& t = trace.layers[static_cast<std::size_t>(l)];
        const auto& active = prune_.active_mask[static_cast<std::size_t>(l)];
        const int n_pix = layer.h_out * layer.w_out;
        const int n_pool = layer.ph * layer.pw;

        // Gradient wrt this layer's pooled true values, then routed back
        // through pool/ReLU onto the conv outputs.
        const double qf = t.quant_factor;
        dconv.assign(static_cast<std::size_t>(layer.spec.c_out) * n_pix, 0.0);
        for (int k = 0; k < layer.spec.c_out; ++k) {
            if (!active[static_cast<std::size_t>(k)]) continue;
            for (int i = 0; i < n_pool; ++i) {
                const std::size_t pi = static_cast<std::size_t>(k) * n_pool + i;
                if (t.pooled[pi] > 0) {
                    dconv[static_cast<std::size_t>(k) * n_pix + t.argmax[pi]] =
                        dnext[pi] * qf;
                }
            }
        }

        din.assign(t.in_q.size(), 0.0);
        double* grads = conv_grads_[static_cast<std::size_t>(l)].data();
        patch_true.resize(static_cast<std::size_t>(layer.len));
        dpatch.resize(static_cast<std::size_t>(layer.len));
        for (int pix = 0; pix < n_pix; ++pix) {
            bool any = false;
            for (int k = 0; k < layer.spec.c_out; ++k) {
                if (dconv[static_cast<std::size_t>(k) * n_pix + pix] != 0.0) {
                    any = true;
                    break;
                }
            }
            if (!any) continue;
            const std::int32_t* idx =
                layer.patch_index.data() + static_cast<std::size_t>(pix) * layer.len;
            for (int i = 0; i < layer.len; ++i) {
                patch_true[static_cast<std::size_t>(i)] =
                    idx[i] < 0 ? 0.0
                               : static_cast<double>(t.in_q[static_cast<std::size_t>(idx[i])]) /
                                     255.0;
            }
            std::fill(dpatch.begin(), dpatch.end(), 0.0);
            for (int k = 0; k < layer.spec.c_out; ++k) {
                const double g = dconv[static_cast<std::size_t>(k) * n_pix + pix];
                if (g == 0.0 || !active[static_cast<std::size_t>(k)]) continue;
                double* gw = grads + static_cast<std::size_t>(k) * layer.len;
                const double* sg = layer.signs.data() + static_cast<std::size_t>(k) * layer.len;
                if (l == 0) {
                    // No gradient needed below the first layer.
                    for (int i = 0; i < layer.len; ++i) {
                        gw[i] += g * patch_true[static_cast<std::size_t>(i)];
                    }
                } else {
                    for (int i = 0; i < layer.len; ++i) {
                        gw[i] += g * patch_true[static_cast<std::size_t>(i)];
                        dpatch[static_cast<std::size_t>(i)] += g * sg[i];
                    }
                }
            }
            if (l > 0) {
                for (int i = 0; i < layer.len; ++i) {
                    if (idx[i] >= 0) din[static_cast<std::size_t>(idx[i])] += dpatch[static_cast<std::size_t>(i)];
                }
            }
        }
        dnext = std::move(din);
    }
}

void Trainer::apply_updates(int batch_count) {
    const double lr = cfg_.train.learning_rate;
    const double mom = cfg_.train.momentum;
    const double inv = 1.0 / static_cast<double>(batch_count);

    for (std::size_t l = 0; l < convs_.size(); ++l) {
        ConvLayer& layer = convs_[l];
        const auto& active = prune_.active_mask[l];
        double* grads = conv_grads_[l].data();
        for (int k = 0; k < layer.spec.c_out; ++k) {
            const std::size_t base = static_cast<std::size_t>(k) * layer.len;
            if (!active[static_cast<std::size_t>(k)]) {
                // Pruned kernels stay frozen.
                std::fill(grads + base, grads + base + layer.len, 0.0);
                continue;
            }
            for (int i = 0; i < layer.len; ++i) {
                const std::size_t idx = base + static_cast<std::size_t>(i);
                const double g = grads[idx] * inv;
                grads[idx] = 0.0;
                layer.vel[idx] = mom * layer.vel[idx] - lr * g;
                // Straight-through estimator: no update outside the clip
                // window; latents live in [-1, 1].
                if (std::abs(layer.latent[idx]) <= 1.0) {
                    layer.latent[idx] =
                        std::clamp(layer.latent[idx] + layer.vel[idx], -1.0, 1.0);
                }
            }
        }
    }
    for (std::size_t i = 0; i < fc_w_.size(); ++i) {
        const double g = fc_gw_[i] * inv;
        fc_gw_[i] = 0.0;
        fc_wv_[i] = mom * fc_wv_[i] - lr * g;
        fc_w_[i] += fc_wv_[i];
    }
    for (std::size_t i = 0; i < fc_b_.size(); ++i) {
        const double g = fc_gb_[i] * inv;
        fc_gb_[i] = 0.0;
        fc_bv_[i] = mom * fc_bv_[i] - lr * g;
        fc_b_[i] += fc_bv_[i];
    }

    refresh_bits();
    if (cfg_.train.hardware_mode == HardwareMode::Simulated) program_chips();
}

std::vector<std::vector<int>> Trainer::prune_sweep(int epoch, EnergyLedger* ledger) {
    std::vector<std::vector<int>> pruned(convs_.size());
    int budget = global_prune_budget_ - (prune_.total_kernels() - prune_.active_kernels());
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        const auto& active = prune_.active_mask[l];
        std::vector<int> ids;
        for (int k = 0; k < static_cast<int>(active.size()); ++k) {
            if (active[static_cast<std::size_t>(k)]) ids.push_back(k);
        }
        if (ids.size() < 2 || budget <= 0) {
            if (budget < 0) budget = 0;
            continue;
        }

        // Pairwise Hamming distances measured on the resident kernels:
        // one XOR pass per reference kernel.
        SimilarityMatrix sm;
        sm.n = static_cast<int>(ids.size());
        sm.metric = Metric::Hamming;
        sm.vector_len = static_cast<std::size_t>(convs_[l].len);
        sm.d.assign(static_cast<std::size_t>(sm.n) * sm.n, 0);
        std::vector<std::int64_t> dist;
        for (int a = 0; a < sm.n; ++a) {
            const int ka = ids[static_cast<std::size_t>(a)];
            std::vector<std::uint8_t> ref(
                convs_[l].bits.begin() + static_cast<std::ptrdiff_t>(ka) * convs_[l].len,
                convs_[l].bits.begin() + static_cast<std::ptrdiff_t>(ka + 1) * convs_[l].len);
            if (cfg_.train.hardware_mode == HardwareMode::Simulated) {
                chips_[l].xor_distances(ref, active, dist, ledger);
            } else {
                dist.assign(active.size(), 0);
                for (int k = 0; k < static_cast<int>(active.size()); ++k) {
                    if (!active[static_cast<std::size_t>(k)]) continue;
                    const std::uint8_t* kb =
                        convs_[l].bits.data() + static_cast<std::size_t>(k) * convs_[l].len;
                    std::int64_t d = 0;
                    for (int i = 0; i < convs_[l].len; ++i) d += (kb[i] != ref[static_cast<std::size_t>(i)]);
                    dist[static_cast<std::size_t>(k)] = d;
                }
            }
            for (int b = a + 1; b < sm.n; ++b) {
                sm.set(a, b, dist[static_cast<std::size_t>(ids[static_cast<std::size_t>(b)])]);
            }
        }
        if (ledger) {
            ledger->add_search_passes(static_cast<std::uint64_t>(sm.n) *
                                      static_cast<std::uint64_t>(sm.n - 1) / 2);
        }

        pruned[l] = sweep_layer(sm, ids, cfg_.prune, prune_, static_cast<int>(l), epoch,
                                convs_[l].len, budget);
        budget -= static_cast<int>(pruned[l].size());
    }
    return pruned;
}

std::uint64_t Trainer::conv_ops_per_image(bool pruned_mask) const {
    std::uint64_t total = 0;
    std::uint64_t c_in = static_cast<std::uint64_t>(spec_.convs.front().c_in);
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        const ConvLayer& layer = convs_[l];
        const std::uint64_t c_out =
            pruned_mask ? static_cast<std::uint64_t>(prune_.active_in_layer(static_cast<int>(l)))
                        : static_cast<std::uint64_t>(layer.spec.c_out);
        total += ops_conv(c_in, c_out, static_cast<std::uint64_t>(layer.spec.k),
                          static_cast<std::uint64_t>(layer.spec.k),
                          static_cast<std::uint64_t>(layer.h_out),
                          static_cast<std::uint64_t>(layer.w_out));
        c_in = c_out;
    }
    return total;
}

std::uint64_t Trainer::fc_ops_per_image() const {
    return ops_fc(static_cast<std::uint64_t>(spec_.fc_in),
                  static_cast<std::uint64_t>(spec_.fc_out));
}

std::vector<LayerOps> Trainer::layer_ops() const {
    std::vector<LayerOps> layers;
    std::uint64_t c_in_full = static_cast<std::uint64_t>(spec_.convs.front().c_in);
    std::uint64_t c_in_act = c_in_full;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        const ConvLayer& layer = convs_[l];
        LayerOps ops;
        ops.name = "conv" + std::to_string(l + 1);
        ops.is_conv = true;
        ops.c_in = c_in_full;
        ops.c_out = static_cast<std::uint64_t>(layer.spec.c_out);
        ops.kh = ops.kw = static_cast<std::uint64_t>(layer.spec.k);
        ops.h_out = static_cast<std::uint64_t>(layer.h_out);
        ops.w_out = static_cast<std::uint64_t>(layer.w_out);
        ops.active_c_in = c_in_act;
        ops.active_c_out = static_cast<std::uint64_t>(prune_.active_in_layer(static_cast<int>(l)));
        layers.push_back(ops);
        c_in_full = ops.c_out;
        c_in_act = ops.active_c_out;
    }
    LayerOps fc;
    fc.name = "fc";
    fc.is_conv = false;
    fc.w_h = static_cast<std::uint64_t>(spec_.fc_in);
    fc.w_w = static_cast<std::uint64_t>(spec_.fc_out);
    layers.push_back(fc);
    return layers;
}

TrainResult Trainer::train(const Dataset& train_data, const Dataset& test_data,
                           EnergyLedger* ledger) {
    TrainResult result;
    const int epochs = cfg_.train.epochs;
    const int batch = cfg_.train.batch_size;
    const std::uint64_t n_train = train_data.size();

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});

    SampleTrace trace;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.conv_ops_per_image = conv_ops_per_image(true);
        rec.fc_ops_per_image = fc_ops_per_image();
        rec.train_conv_ops = rec.conv_ops_per_image * n_train;
        result.train_conv_ops_total += rec.train_conv_ops;
        result.train_conv_ops_unpruned += conv_ops_per_image(false) * n_train;

        // Seeded shuffle per epoch.
        Rng shuffle = rng_.substream(0x53485546, static_cast<std::uint64_t>(epoch));
        for (std::size_t i = n_train; i > 1; --i) {
            std::swap(order[i - 1],
                      order[static_cast<std::size_t>(shuffle.uniform_int(static_cast<int>(i)))]);
        }

        for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(batch)) {
            const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(batch));
            for (std::size_t s = start; s < end; ++s) {
                forward_trace(train_data.image(order[s]), cfg_.train.hardware_mode, trace,
                              ledger);
                backward_accumulate(trace, train_data.labels[order[s]]);
            }
            apply_updates(static_cast<int>(end - start));
        }

        if (cfg_.train.prune_enabled && epoch % cfg_.prune.cadence_epochs == 0) {
            rec.pruned_ids = prune_sweep(epoch, ledger);
        } else {
            rec.pruned_ids.assign(convs_.size(), {});
        }

        // Epoch boundary: arrays reprogrammed from the updated weights,
        // then the test subset is evaluated through both engines.
        if (cfg_.train.hardware_mode == HardwareMode::Simulated) {
            program_chips();
            rec.modes_match = true;
            std::size_t correct = 0;
            for (std::size_t i = 0; i < test_data.size(); ++i) {
                const ForwardOutput a = forward(test_data.image(i), HardwareMode::Simulated);
                const ForwardOutput b =
                    forward(test_data.image(i), HardwareMode::SoftwareOracle);
                if (a.logits != b.logits) rec.modes_match = false;
                if (a.predicted == test_data.labels[i]) ++correct;
            }
            rec.test_accuracy =
                static_cast<double>(correct) / static_cast<double>(test_data.size());
        } else {
            rec.modes_match = true;
            rec.test_accuracy = evaluate(test_data, HardwareMode::SoftwareOracle);
        }

        rec.active_kernels.clear();
        std::int64_t weights = 0;
        for (std::size_t l = 0; l < convs_.size(); ++l) {
            rec.active_kernels.push_back(prune_.active_in_layer(static_cast<int>(l)));
            weights += static_cast<std::int64_t>(prune_.active_in_layer(static_cast<int>(l))) *
                       convs_[l].len;
        }
        rec.total_weights = weights;
        result.epochs.push_back(std::move(rec));
    }

    result.final_accuracy = result.epochs.back().test_accuracy;
    result.final_prune_fraction = prune_.pruned_fraction();
    result.ops_reduction_pct =
        result.train_conv_ops_unpruned == 0
            ? 0.0
            : 100.0 * (1.0 - static_cast<double>(result.train_conv_ops_total) /
                                 static_cast<double>(result.train_conv_ops_unpruned));
    result.prune = prune_;

    // Post-flatten features of the test subset for external projection.
    const HardwareMode mode = cfg_.train.hardware_mode;
    for (std::size_t i = 0; i < test_data.size(); ++i) {
        ForwardOutput out = forward(test_data.image(i), mode);
        result.features.push_back(std::move(out.features));
        result.feature_labels.push_back(test_data.labels[i]);
    }
    return result;
}

void Trainer::save_checkpoint(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir + "/blocks");

    nlohmann::json manifest;
    manifest["schema"] = "cimsim/checkpoint/v1";
    manifest["input_h"] = spec_.input_h;
    manifest["input_w"] = spec_.input_w;
    manifest["fc"] = {{"in", spec_.fc_in}, {"out", spec_.fc_out}, {"weights", "fc.bin"}};
    manifest["layers"] = nlohmann::json::array();
    for (std::size_t l = 0; l < convs_.size(); ++l) {
        const ConvLayer& layer = convs_[l];
        nlohmann::json jl;
        jl["name"] = "conv" + std::to_string(l + 1);
        jl["c_in"] = layer.spec.c_in;
        jl["c_out"] = layer.spec.c_out;
        jl["kernel"] = layer.spec.k;
        jl["pad"] = layer.spec.pad;
        jl["pool"] = layer.spec.pool;
        jl["kernel_len"] = layer.len;
        jl["active_mask"] = prune_.active_mask[l];
        if (l < chips_.size()) {
            const LayerChip& chip = chips_[l];
            jl["placement"] = {{"chunks", chip.chunks()},
                               {"groups", chip.groups()},
                               {"rows_per_chunk", chip.block(0, 0).data_rows()},
                               {"cols_per_group", chip.block(0, 0).data_cols()}};
            auto files = nlohmann::json::array();
            for (int c = 0; c < chip.chunks(); ++c) {
                for (int g = 0; g < chip.groups(); ++g) {
                    const std::string name = "conv" + std::to_string(l + 1) + "_c" +
                                             std::to_string(c) + "_g" + std::to_string(g) +
                                             ".cimb";
                    chip.block(c, g).save_file(dir + "/blocks/" + name);
                    files.push_back(name);
                }
            }
            jl["blocks"] = std::move(files);
        }
        manifest["layers"].push_back(std::move(jl));
    }

    std::ofstream mf(dir + "/manifest.json");
    if (!mf) raise(Errc::IoError, "cannot write checkpoint manifest");
    mf << manifest.dump(2) << '\n';

    std::ofstream fcb(dir + "/fc.bin", std::ios::binary);
    if (!fcb) raise(Errc::IoError, "cannot write fc weights");
    fcb.write(reinterpret_cast<const char*>(fc_w_.data()),
              static_cast<std::streamsize>(fc_w_.size() * sizeof(double)));
    fcb.write(reinterpret_cast<const char*>(fc_b_.data()),
              static_cast<std::streamsize>(fc_b_.size() * sizeof(double)));
}

} // namespace cimsim
