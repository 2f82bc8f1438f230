#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "magnet/data.hpp"

namespace magnet {

// Item-item k-nearest-neighbor index under cosine similarity, one per
// modality. Rows are items; each row holds exactly k neighbor ids ordered by
// (similarity desc, id asc), self excluded. Zero-norm rows have similarity 0
// with everything.
struct NeighborIndex {
    char modality = 'A';
    int32_t num_items = 0;
    int32_t k = 0;                 // effective k = min(requested, num_items - 1)
    std::vector<int32_t> ids;      // num_items * k
    std::vector<float> scores;     // num_items * k, computed in double, stored f32

    const int32_t* row_ids(int32_t i) const { return ids.data() + size_t(i) * k; }
    const float* row_scores(int32_t i) const { return scores.data() + size_t(i) * k; }
};

// Content-induced user->item candidates: per user the top-r unseen items by
// accumulated neighbor similarity, ordered (score desc, id asc).
struct InducedEdges {
    int32_t num_users = 0;
    int32_t r = 0;
    std::vector<std::vector<std::pair<int32_t, float>>> candidates;

    std::vector<Edge> edge_list() const;
    size_t total_edges() const;
};

enum class View { UI, UIG };

// Normalized bipartite adjacency in CSR form, both directions, with
// symmetric-normalization coefficients 1/sqrt(deg_u * deg_i) kept in double.
struct ViewGraph {
    View view = View::UI;
    int32_t num_users = 0;
    int32_t num_items = 0;
    std::vector<int32_t> u_off, u_adj;  // user -> items
    std::vector<int32_t> i_off, i_adj;  // item -> users
    std::vector<double> u_coef, i_coef;
    std::vector<int32_t> deg_u, deg_i;
    size_t num_edges = 0;
};

NeighborIndex build_neighbor_index(const FeatureMatrix& features, int k);

InducedEdges expand_candidates(const InteractionSet& train, const NeighborIndex& idx_a,
                               const NeighborIndex& idx_s, int r);

// induced may be null (plain interaction graph). UIG unions the training
// edges with the induced edges; degrees and coefficients use the union.
ViewGraph build_view_graph(const InteractionSet& train, const InducedEdges* induced, View view);

// Cache artifacts: binary payload plus a JSON sidecar carrying the build
// parameters and input fingerprints, so stale caches are detected.
uint64_t fnv1a64(const void* data, size_t n);
uint64_t fingerprint_features(const FeatureMatrix& f);
uint64_t fingerprint_interactions(const InteractionSet& s);

void save_neighbor_index(const std::string& bin_path, const NeighborIndex& idx,
                         uint64_t feature_fingerprint);
NeighborIndex load_neighbor_index(const std::string& bin_path, uint64_t expect_fingerprint);
bool neighbor_index_cache_valid(const std::string& bin_path, int k, uint64_t feature_fingerprint);

void save_induced_edges(const std::string& bin_path, const InducedEdges& e, int k,
                        uint64_t interactions_fp, uint64_t fp_a, uint64_t fp_s);
InducedEdges load_induced_edges(const std::string& bin_path);
bool induced_cache_valid(const std::string& bin_path, int k, int r, uint64_t interactions_fp,
                         uint64_t fp_a, uint64_t fp_s);

}  // namespace magnet
