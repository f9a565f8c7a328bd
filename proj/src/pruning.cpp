#include "cimsim/pruning.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "cimsim/errors.hpp"

namespace cimsim {

void PruneConfig::validate() const {
    if (distance_threshold < 0.0) raise(Errc::BadConfig, "distance_threshold must be >= 0");
    if (normalized && distance_threshold > 1.0) {
        raise(Errc::BadConfig, "normalized distance_threshold must be <= 1");
    }
    if (frequency_threshold < 0) raise(Errc::BadConfig, "frequency_threshold must be >= 0");
    if (cadence_epochs < 1) raise(Errc::BadConfig, "cadence_epochs must be >= 1");
    if (min_kernels_per_layer < 1) raise(Errc::BadConfig, "min_kernels_per_layer must be >= 1");
    if (max_prune_fraction <= 0.0 || max_prune_fraction > 1.0) {
        raise(Errc::BadConfig, "max_prune_fraction must be in (0, 1]");
    }
}

PruneState PruneState::init(const std::vector<int>& kernels_per_layer) {
    PruneState s;
    for (int n : kernels_per_layer) {
        s.active_mask.emplace_back(static_cast<std::size_t>(n), 1);
    }
    return s;
}

int PruneState::total_kernels() const {
    int n = 0;
    for (const auto& layer : active_mask) n += static_cast<int>(layer.size());
    return n;
}

int PruneState::active_kernels() const {
    int n = 0;
    for (const auto& layer : active_mask) {
        for (auto a : layer) n += a ? 1 : 0;
    }
    return n;
}

int PruneState::active_in_layer(int layer) const {
    int n = 0;
    for (auto a : active_mask[static_cast<std::size_t>(layer)]) n += a ? 1 : 0;
    return n;
}

double PruneState::pruned_fraction() const {
    const int total = total_kernels();
    return total == 0 ? 0.0
                      : 1.0 - static_cast<double>(active_kernels()) /
                                  static_cast<double>(total);
}

std::string PruneState::history_csv() const {
    std::ostringstream out;
    out << "epoch,layer,pruned_ids,active,weights\n";
    for (const auto& rec : history) {
        out << rec.epoch << ',' << rec.layer << ',';
        for (std::size_t i = 0; i < rec.pruned_ids.size(); ++i) {
            if (i) out << ' ';
            out << rec.pruned_ids[i];
        }
        out << ',' << rec.active << ',' << rec.weights << '\n';
    }
    return out.str();
}

std::vector<CandidatePair> build_candidates(const SimilarityMatrix& sm,
                                            const std::vector<int>& ids,
                                            const PruneConfig& cfg) {
    cfg.validate();
    if (ids.size() != static_cast<std::size_t>(sm.n)) {
        raise(Errc::ShapeMismatch, "build_candidates: id list does not match matrix");
    }
    const double threshold = cfg.normalized
                                 ? cfg.distance_threshold * sm.max_distance()
                                 : cfg.distance_threshold;
    std::vector<CandidatePair> pairs;
    for (int i = 0; i < sm.n; ++i) {
        for (int j = i + 1; j < sm.n; ++j) {
            const double d = static_cast<double>(sm.at(i, j));
            const bool similar = cfg.comparator == SimilarityComparator::SimilarIfAtMost
                                     ? d <= threshold
                                     : d >= threshold;
            if (similar) {
                pairs.push_back({std::min(ids[static_cast<std::size_t>(i)],
                                          ids[static_cast<std::size_t>(j)]),
                                 std::max(ids[static_cast<std::size_t>(i)],
                                          ids[static_cast<std::size_t>(j)]),
                                 sm.at(i, j)});
            }
        }
    }
    return pairs;
}

std::map<int, int> frequency_count(const std::vector<CandidatePair>& pairs) {
    std::map<int, int> counts;
    for (const auto& p : pairs) {
        counts[p.i] += 1;
        counts[p.j] += 1;
    }
    return counts;
}

std::vector<int> select_prune(const std::map<int, int>& counts,
                              const std::vector<CandidatePair>& pairs,
                              const PruneConfig& cfg, int layer_active,
                              int global_budget) {
    struct Entry {
        int id;
        int count;
    };
    std::vector<Entry> ranked;
    for (const auto& [id, count] : counts) {
        if (count > cfg.frequency_threshold) ranked.push_back({id, count});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Entry& a, const Entry& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.id < b.id;
    });

    std::vector<int> selected;
    std::set<int> protected_ids; // partners of already-selected kernels
    int remaining = layer_active;
    for (const auto& e : ranked) {
        if (remaining <= cfg.min_kernels_per_layer) break;
        if (static_cast<int>(selected.size()) >= global_budget) break;
        if (protected_ids.count(e.id)) continue;
        selected.push_back(e.id);
        --remaining;
        for (const auto& p : pairs) {
            if (p.i == e.id) protected_ids.insert(p.j);
            if (p.j == e.id) protected_ids.insert(p.i);
        }
    }
    return selected;
}

void apply_prune(PruneState& state, int layer, const std::vector<int>& ids,
                 int epoch, std::int64_t weights_per_kernel) {
    auto& mask = state.active_mask[static_cast<std::size_t>(layer)];
    for (int id : ids) {
        if (id < 0 || id >= static_cast<int>(mask.size())) {
            raise(Errc::OutOfRange, "apply_prune: kernel id out of range");
        }
        if (!mask[static_cast<std::size_t>(id)]) {
            raise(Errc::AlreadyPruned, "apply_prune: kernel already pruned");
        }
        mask[static_cast<std::size_t>(id)] = 0;
    }
    PruneRecord rec;
    rec.epoch = epoch;
    rec.layer = layer;
    rec.pruned_ids = ids;
    rec.active = state.active_in_layer(layer);
    rec.weights = rec.active * weights_per_kernel;
    state.history.push_back(std::move(rec));
}

std::vector<int> sweep_layer(const SimilarityMatrix& sm,
                             const std::vector<int>& active_ids,
                             const PruneConfig& cfg, PruneState& state, int layer,
                             int epoch, std::int64_t weights_per_kernel,
                             int global_budget) {
    const std::vector<CandidatePair> pairs = build_candidates(sm, active_ids, cfg);
    state.candidate_pairs = pairs;
    const std::map<int, int> counts = frequency_count(pairs);
    const std::vector<int> ids =
        select_prune(counts, pairs, cfg, state.active_in_layer(layer), global_budget);
    apply_prune(state, layer, ids, epoch, weights_per_kernel);
    return ids;
}

} // namespace cimsim
