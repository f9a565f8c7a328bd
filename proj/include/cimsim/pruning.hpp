#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cimsim/similarity.hpp"

namespace cimsim {

enum class SimilarityComparator : std::uint8_t {
    SimilarIfAtMost,  // small distance = similar (default)
    SimilarIfAtLeast, // literal reading: distance above threshold
};

struct PruneConfig {
    double distance_threshold = 0.0;
    // When set, distance_threshold is a fraction of the metric's maximum
    // for the kernel length instead of raw distance units.
    bool normalized = false;
    int frequency_threshold = 0; // prune kernels with count strictly above
    int cadence_epochs = 1;
    int min_kernels_per_layer = 2;
    double max_prune_fraction = 0.5; // cap on the network-wide pruned fraction
    SimilarityComparator comparator = SimilarityComparator::SimilarIfAtMost;

    void validate() const;
};

struct CandidatePair {
    int i = 0;
    int j = 0; // kernel ids, i < j
    std::int64_t distance = 0;
};

struct PruneRecord {
    int epoch = 0;
    int layer = 0;
    std::vector<int> pruned_ids;
    int active = 0;
    std::int64_t weights = 0;
};

struct PruneState {
    // active_mask[layer][kernel]; pruned kernels never reactivate.
    std::vector<std::vector<std::uint8_t>> active_mask;
    std::vector<PruneRecord> history;
    std::vector<CandidatePair> candidate_pairs; // last sweep, last layer

    static PruneState init(const std::vector<int>& kernels_per_layer);

    int total_kernels() const;
    int active_kernels() const;
    int active_in_layer(int layer) const;
    double pruned_fraction() const;

    std::string history_csv() const; // epoch,layer,pruned_ids,active,weights
};

// Kernel pairs (i < j) whose distance passes the comparator. `sm` covers
// only currently active kernels; `ids` maps matrix indices to kernel ids.
std::vector<CandidatePair> build_candidates(const SimilarityMatrix& sm,
                                            const std::vector<int>& ids,
                                            const PruneConfig& cfg);

// Number of candidate pairs each kernel appears in.
std::map<int, int> frequency_count(const std::vector<CandidatePair>& pairs);

// Kernels with count above the frequency threshold, highest count first
// (ascending id on ties), truncated by the per-layer floor and the global
// budget. At most one member of any candidate pair is selected per sweep.
std::vector<int> select_prune(const std::map<int, int>& counts,
                              const std::vector<CandidatePair>& pairs,
                              const PruneConfig& cfg, int layer_active,
                              int global_budget);

// Masks the kernels and appends a history record. Throws AlreadyPruned.
void apply_prune(PruneState& state, int layer, const std::vector<int>& ids,
                 int epoch, std::int64_t weights_per_kernel);

// One layer of the per-cadence sweep: candidates -> frequencies ->
// selection -> mask update. Returns the pruned ids.
std::vector<int> sweep_layer(const SimilarityMatrix& sm,
                             const std::vector<int>& active_ids,
                             const PruneConfig& cfg, PruneState& state, int layer,
                             int epoch, std::int64_t weights_per_kernel,
                             int global_budget);

} // namespace cimsim
