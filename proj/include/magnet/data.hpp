#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "magnet/rng.hpp"

namespace magnet {

using Edge = std::pair<int32_t, int32_t>;  // (user, item), dense ids

// Implicit-feedback interactions over dense contiguous ids. histories is the
// per-user projection of edges: sorted, deduplicated item lists.
struct InteractionSet {
    int32_t num_users = 0;
    int32_t num_items = 0;
    std::vector<Edge> edges;                        // sorted by (user, item)
    std::vector<std::vector<int32_t>> histories;    // one sorted list per user

    void rebuild_histories();
    bool contains(int32_t u, int32_t i) const;
};

struct IdMap {
    std::vector<std::string> external;                       // dense -> external
    std::unordered_map<std::string, int32_t> dense;          // external -> dense

    int32_t intern(const std::string& ext);
};

struct LoadedInteractions {
    InteractionSet data;
    IdMap users;
    IdMap items;
    int64_t raw_edges = 0;       // lines parsed before filtering/dedup
    int64_t dropped_users = 0;   // users removed by the min-interaction filter
};

// Per-modality item features, row i = dense item id i.
struct FeatureMatrix {
    char modality = 'A';
    int32_t rows = 0;
    int32_t dim = 0;
    std::vector<float> values;  // row-major rows*dim

    const float* row(int32_t i) const { return values.data() + size_t(i) * dim; }
    float* row(int32_t i) { return values.data() + size_t(i) * dim; }
};

struct SplitBundle {
    InteractionSet train;
    std::vector<Edge> valid;
    std::vector<Edge> test;
    uint64_t seed = 0;
    int32_t forced_all_train = 0;  // users too small to split
};

struct SyntheticSpec {
    int32_t num_users = 200;
    int32_t num_items = 120;
    int32_t num_blocks = 4;
    int32_t dim_a = 16;
    int32_t dim_s = 12;
    double density = 0.1;   // distinct interactions per user as a fraction of the catalog
    double noise = 0.1;     // feature noise scale and cross-block edge probability
    uint64_t seed = 7;
};

struct SyntheticData {
    InteractionSet interactions;
    FeatureMatrix feat_a;
    FeatureMatrix feat_s;
    std::vector<int32_t> user_block;
    std::vector<int32_t> item_block;
};

// Parses "user<TAB>item" lines, densifies ids in first-appearance order, then
// iteratively drops users with fewer than min_interactions distinct items
// (items keep their ids; an item with no remaining edges simply has degree 0).
LoadedInteractions load_interactions(const std::string& path, int min_interactions);

// Per-user holdout split. Each user's items are shuffled by a seed-derived
// stream; floor(n*ratio) go to valid and test, the remainder (rounding toward
// train) stays in train. Users with fewer than 3 items go entirely to train.
SplitBundle split_interactions(const InteractionSet& all, std::array<double, 3> ratios,
                               uint64_t seed);

// Uniform negatives from the complement of the user's training history,
// sampled by rejection. Errors if the complement is empty.
std::vector<int32_t> sample_negatives(int32_t user, const InteractionSet& train, int count,
                                      Rng& rng);

// Reads an MGF1 feature blob and validates the row count against the catalog.
FeatureMatrix load_features(const std::string& path, char modality, int32_t num_items);
void write_features(const std::string& path, const FeatureMatrix& f);

// Block-structured implicit feedback with two feature modalities whose
// within-block similarity exceeds cross-block similarity. Within a block,
// picks favor items whose planted taste angle is close to the user's; the
// true angle appears in one modality per block (A for even blocks, S for
// odd) while the other modality carries an equal-strength decoy, so the
// within-block ranking is only readable from the right modality per item.
// Fully determined by the spec fields; byte-identical across runs.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

void write_interactions_tsv(const std::string& path, const InteractionSet& s);
void write_id_map(const std::string& path, const IdMap& m);
IdMap read_id_map(const std::string& path);

// Reorders item ids into the first-appearance order a reload of the exported
// edge list will produce, so feature rows written alongside stay aligned with
// the reloaded dense ids. Items with no interactions are dropped.
struct ExportBundle {
    InteractionSet interactions;
    FeatureMatrix feat_a, feat_s;
    std::vector<int32_t> item_remap;  // original id -> exported id, -1 if dropped
};
ExportBundle export_remap(const SyntheticData& sd);

}  // namespace magnet
