#pragma once

// Shared fixtures for the test suite: tiny deterministic datasets and a
// fully-wired trainer bundle whose borrowed pointers stay valid because the
// bundle owns every input and is handed out behind a unique_ptr.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "magnet/config.hpp"
#include "magnet/data.hpp"
#include "magnet/graph.hpp"
#include "magnet/train.hpp"

namespace testutil {

inline bool close(double a, double b, double tol = 1e-5) {
    double scale = std::max({std::abs(a), std::abs(b), 1.0});
    return std::abs(a - b) <= tol * scale;
}

inline bool close_abs(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// A small hand-built interaction set: `edges` must be (user, item) pairs.
inline magnet::InteractionSet make_interactions(int32_t users, int32_t items,
                                                std::vector<magnet::Edge> edges) {
    magnet::InteractionSet s;
    s.num_users = users;
    s.num_items = items;
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    s.edges = std::move(edges);
    s.rebuild_histories();
    return s;
}

// Feature matrix from explicit rows.
inline magnet::FeatureMatrix make_features(char modality,
                                           const std::vector<std::vector<float>>& rows) {
    magnet::FeatureMatrix f;
    f.modality = modality;
    f.rows = int32_t(rows.size());
    f.dim = rows.empty() ? 0 : int32_t(rows[0].size());
    f.values.reserve(size_t(f.rows) * f.dim);
    for (const auto& r : rows) f.values.insert(f.values.end(), r.begin(), r.end());
    return f;
}

// A compact run configuration for fast unit-level training tests.
inline magnet::RunConfig small_config() {
    magnet::RunConfig cfg;
    cfg.synth_users = 40;
    cfg.synth_items = 30;
    cfg.synth_blocks = 3;
    cfg.synth_dim_a = 8;
    cfg.synth_dim_s = 6;
    cfg.synth_density = 0.3;
    cfg.synth_noise = 0.1;
    cfg.embed_dim = 16;
    cfg.layers = 2;
    cfg.knn_k = 5;
    cfg.expand_r = 10;
    cfg.batch_size = 64;
    cfg.max_epochs = 3;
    cfg.patience = 5;
    cfg.dropout = 0.0;
    cfg.seed = 7;
    return cfg;
}

// Everything a Trainer borrows, owned in one heap-allocated bundle.
template <class T>
struct Rig {
    magnet::RunConfig cfg;
    magnet::SyntheticData sd;
    magnet::SplitBundle split;
    magnet::NeighborIndex knn_a, knn_s;
    magnet::InducedEdges induced;
    magnet::ViewGraph ui, uig;
    magnet::Trainer<T> tr;
};

template <class T>
std::unique_ptr<Rig<T>> make_rig(const magnet::RunConfig& cfg) {
    auto r = std::make_unique<Rig<T>>();
    r->cfg = cfg;
    magnet::SyntheticSpec spec;
    spec.num_users = cfg.synth_users;
    spec.num_items = cfg.synth_items;
    spec.num_blocks = cfg.synth_blocks;
    spec.dim_a = cfg.synth_dim_a;
    spec.dim_s = cfg.synth_dim_s;
    spec.density = cfg.synth_density;
    spec.noise = cfg.synth_noise;
    spec.seed = cfg.seed;
    r->sd = magnet::generate_synthetic(spec);
    r->split = magnet::split_interactions(
        r->sd.interactions, {cfg.ratio_train, cfg.ratio_valid, cfg.ratio_test}, cfg.seed);
    r->ui = magnet::build_view_graph(r->split.train, nullptr, magnet::View::UI);
    r->tr.cfg = cfg;
    if (cfg.dual_view()) {
        r->knn_a = magnet::build_neighbor_index(r->sd.feat_a, cfg.knn_k);
        r->knn_s = magnet::build_neighbor_index(r->sd.feat_s, cfg.knn_k);
        r->induced = magnet::expand_candidates(r->split.train, r->knn_a, r->knn_s, cfg.expand_r);
        r->uig = magnet::build_view_graph(r->split.train, &r->induced, magnet::View::UIG);
        r->tr.setup(r->split, r->sd.feat_a, r->sd.feat_s, r->ui, &r->uig);
    } else {
        r->tr.setup(r->split, r->sd.feat_a, r->sd.feat_s, r->ui, nullptr);
    }
    return r;
}

// First n training edges, for deterministic batch construction.
template <class T>
std::vector<magnet::Edge> first_edges(const Rig<T>& r, size_t n) {
    const auto& e = r.split.train.edges;
    n = std::min(n, e.size());
    return std::vector<magnet::Edge>(e.begin(), e.begin() + n);
}

}  // namespace testutil
