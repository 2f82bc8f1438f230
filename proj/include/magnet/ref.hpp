#pragma once

// Plain serial reference implementations of the parallel kernels, written
// independently of the optimized paths (dense math, full sorts, no threading)
// so tests can compare the two and the benchmark has a baseline.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "magnet/data.hpp"
#include "magnet/eval.hpp"
#include "magnet/graph.hpp"
#include "magnet/mat.hpp"

namespace magnet::ref {

// Brute-force cosine nearest neighbors: all pairs, full sort.
inline NeighborIndex knn_bruteforce(const FeatureMatrix& f, int k) {
    NeighborIndex out;
    out.modality = f.modality;
    out.num_items = f.rows;
    out.k = std::max(0, std::min(k, f.rows - 1));
    out.ids.assign(size_t(f.rows) * out.k, -1);
    out.scores.assign(size_t(f.rows) * out.k, 0.0f);
    std::vector<double> norms(f.rows, 0.0);
    for (int32_t i = 0; i < f.rows; ++i) {
        const float* x = f.row(i);
        double s = 0;
        for (int32_t c = 0; c < f.dim; ++c) s += double(x[c]) * double(x[c]);
        norms[i] = std::sqrt(s);
    }
    for (int32_t i = 0; i < f.rows; ++i) {
        std::vector<std::pair<double, int32_t>> sims;
        for (int32_t j = 0; j < f.rows; ++j) {
            if (j == i) continue;
            double s = 0;
            const float* a = f.row(i);
            const float* b = f.row(j);
            for (int32_t c = 0; c < f.dim; ++c) s += double(a[c]) * double(b[c]);
            double denom = norms[i] * norms[j];
            sims.push_back({denom > 0 ? s / denom : 0.0, j});
        }
        std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (int t = 0; t < out.k; ++t) {
            out.ids[size_t(i) * out.k + t] = sims[size_t(t)].second;
            out.scores[size_t(i) * out.k + t] = float(sims[size_t(t)].first);
        }
    }
    return out;
}

// Dense-matrix propagation oracle: builds the full normalized bipartite
// adjacency and multiplies layer by layer in double precision.
struct DensePropagation {
    Mat<double> zu, zi;
};

inline DensePropagation propagate_dense(const std::vector<Edge>& edges, int32_t num_users,
                                        int32_t num_items, const Mat<double>& e0_u,
                                        const Mat<double>& e0_i, int layers) {
    const int d = int(e0_u.cols);
    std::vector<int32_t> du(num_users, 0), di(num_items, 0);
    for (const auto& [u, i] : edges) {
        ++du[u];
        ++di[i];
    }
    Mat<double> A(num_users, num_items);
    for (const auto& [u, i] : edges)
        A[u][i] = 1.0 / std::sqrt(double(du[u]) * double(di[i]));

    Mat<double> eu = e0_u, ei = e0_i;
    DensePropagation out;
    out.zu = e0_u;
    out.zi = e0_i;
    for (int l = 0; l < layers; ++l) {
        Mat<double> nu(num_users, d), ni(num_items, d);
        for (int32_t u = 0; u < num_users; ++u)
            for (int32_t i = 0; i < num_items; ++i)
                if (A[u][i] != 0.0)
                    for (int c = 0; c < d; ++c) {
                        nu[u][c] += A[u][i] * ei[i][c];
                        ni[i][c] += A[u][i] * eu[u][c];
                    }
        eu = nu;
        ei = ni;
        for (size_t c = 0; c < out.zu.v.size(); ++c) out.zu.v[c] += eu.v[c];
        for (size_t c = 0; c < out.zi.v.size(); ++c) out.zi.v[c] += ei.v[c];
    }
    double inv = 1.0 / double(layers + 1);
    for (auto& v : out.zu.v) v *= inv;
    for (auto& v : out.zi.v) v *= inv;
    return out;
}

// Serial sparse propagation with the same layout as the optimized kernel
// (used by the benchmark for like-for-like timing).
template <class T>
void spmm_serial(const std::vector<int32_t>& off, const std::vector<int32_t>& adj,
                 const std::vector<double>& coef, const Mat<T>& src, Mat<T>& dst) {
    const int d = int(src.cols);
    for (int32_t r = 0; r < dst.rows; ++r) {
        std::vector<double> acc(size_t(d), 0.0);
        for (int32_t e = off[r]; e < off[r + 1]; ++e) {
            const T* s = src[adj[e]];
            double w = coef[e];
            for (int c = 0; c < d; ++c) acc[size_t(c)] += w * double(s[c]);
        }
        T* out = dst[r];
        for (int c = 0; c < d; ++c) out[c] = T(acc[size_t(c)]);
    }
}

// Serial top-N metric oracle over an arbitrary scorer.
struct RefMetrics {
    std::vector<double> recall, ndcg;  // aligned with cutoffs
    int users_evaluated = 0;
};

inline RefMetrics metrics_bruteforce(const InteractionSet& train, const std::vector<Edge>& eval_pairs,
                                     int32_t num_items, const std::vector<int>& cutoffs,
                                     const std::function<double(int32_t, int32_t)>& score) {
    std::vector<std::vector<int32_t>> pos(train.num_users);
    for (const auto& [u, i] : eval_pairs) pos[u].push_back(i);

    RefMetrics out;
    out.recall.assign(cutoffs.size(), 0.0);
    out.ndcg.assign(cutoffs.size(), 0.0);
    for (int32_t u = 0; u < train.num_users; ++u) {
        if (pos[u].empty() || train.histories[u].empty()) continue;
        std::vector<std::pair<double, int32_t>> ranked;
        for (int32_t i = 0; i < num_items; ++i) {
            if (train.contains(u, i)) continue;
            ranked.push_back({score(u, i), i});
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (size_t ci = 0; ci < cutoffs.size(); ++ci) {
            int n = cutoffs[ci];
            int hits = 0;
            double dcg = 0;
            for (int r = 0; r < n && r < int(ranked.size()); ++r) {
                bool hit = std::find(pos[u].begin(), pos[u].end(), ranked[size_t(r)].second) !=
                           pos[u].end();
                if (hit) {
                    ++hits;
                    dcg += 1.0 / std::log2(double(r) + 2.0);
                }
            }
            double idcg = 0;
            int ideal = std::min<int>(n, int(pos[u].size()));
            for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(double(r) + 2.0);
            out.recall[ci] += double(hits) / double(pos[u].size());
            out.ndcg[ci] += idcg > 0 ? dcg / idcg : 0.0;
        }
        ++out.users_evaluated;
    }
    if (out.users_evaluated > 0)
        for (size_t ci = 0; ci < cutoffs.size(); ++ci) {
            out.recall[ci] /= out.users_evaluated;
            out.ndcg[ci] /= out.users_evaluated;
        }
    return out;
}

// Most-popular baseline: rank items by training interaction count
// (ties to the smaller id), mask each user's training history.
inline RefMetrics popularity_metrics(const InteractionSet& train,
                                     const std::vector<Edge>& eval_pairs,
                                     const std::vector<int>& cutoffs) {
    std::vector<int64_t> count(train.num_items, 0);
    for (const auto& e : train.edges) ++count[e.second];
    return metrics_bruteforce(train, eval_pairs, train.num_items, cutoffs,
                              [&](int32_t, int32_t i) { return double(count[i]); });
}

}  // namespace magnet::ref
