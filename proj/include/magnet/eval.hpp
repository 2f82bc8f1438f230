#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "magnet/model.hpp"

namespace magnet {

// Scores for every catalog item for one user, training items masked out,
// returning the top-n item ids ordered by (score desc, id asc).
template <class T>
std::vector<int32_t> rank_items(const MagnetModel<T>& m, const ScoringContext<T>& ctx, int32_t u,
                                int topn) {
    const int32_t I = m.train->num_items;
    std::vector<T> score(I);
    for (int32_t i = 0; i < I; ++i) {
        TokenForward<T> tok;
        token_forward(m, ctx, u, i, 0, tok);
        score[i] = tok.route.yhat;
    }
    const auto& hist = m.train->histories[u];
    std::vector<int32_t> order;
    order.reserve(I - hist.size());
    for (int32_t i = 0; i < I; ++i)
        if (!std::binary_search(hist.begin(), hist.end(), i)) order.push_back(i);
    int n = std::min<int>(topn, int(order.size()));
    std::partial_sort(order.begin(), order.begin() + n, order.end(), [&](int32_t a, int32_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return a < b;
    });
    order.resize(n);
    return order;
}

struct PerUserMetrics {
    int32_t user = 0;
    std::vector<double> recall;  // one per cutoff
    std::vector<double> ndcg;
};

struct MetricReport {
    std::vector<int> cutoffs;
    std::vector<double> recall;  // aggregate means, aligned with cutoffs
    std::vector<double> ndcg;
    int users_evaluated = 0;
    int users_skipped = 0;  // held-out positives but empty training history
    std::vector<PerUserMetrics> per_user;
};

// Full-catalog ranking metrics. Only the user's training items are masked;
// positives are the user's pairs in `positives`. Gains are binary, the
// discount is 1/log2(rank+1), and the ideal DCG truncates at
// min(cutoff, #positives). Aggregates are plain means over evaluated users.
template <class T>
MetricReport compute_metrics(const MagnetModel<T>& m, const ScoringContext<T>& ctx,
                             const std::vector<Edge>& positives, std::vector<int> cutoffs,
                             bool keep_per_user = false) {
    std::sort(cutoffs.begin(), cutoffs.end());
    MetricReport rep;
    rep.cutoffs = cutoffs;
    const int nc = int(cutoffs.size());
    rep.recall.assign(nc, 0.0);
    rep.ndcg.assign(nc, 0.0);
    if (cutoffs.empty()) return rep;
    const int topn = cutoffs.back();

    // group positives by user
    std::vector<std::vector<int32_t>> pos(m.train->num_users);
    for (const auto& [u, i] : positives) pos[u].push_back(i);
    std::vector<int32_t> users;
    for (int32_t u = 0; u < m.train->num_users; ++u)
        if (!pos[u].empty()) users.push_back(u);

    std::vector<PerUserMetrics> rows(users.size());
    std::vector<uint8_t> skipped(users.size(), 0);
#pragma omp parallel for schedule(static)
    for (size_t t = 0; t < users.size(); ++t) {
        int32_t u = users[t];
        if (m.train->histories[u].empty()) {
            skipped[t] = 1;
            continue;
        }
        auto& ps = pos[u];
        std::sort(ps.begin(), ps.end());
        auto ranked = rank_items(m, ctx, u, topn);
        PerUserMetrics& r = rows[t];
        r.user = u;
        r.recall.assign(nc, 0.0);
        r.ndcg.assign(nc, 0.0);
        for (int c = 0; c < nc; ++c) {
            int N = cutoffs[c];
            int hits = 0;
            double dcg = 0;
            for (int rank = 1; rank <= std::min<int>(N, int(ranked.size())); ++rank) {
                if (std::binary_search(ps.begin(), ps.end(), ranked[rank - 1])) {
                    ++hits;
                    dcg += 1.0 / std::log2(double(rank) + 1.0);
                }
            }
            double idcg = 0;
            for (int rank = 1; rank <= std::min<int>(N, int(ps.size())); ++rank)
                idcg += 1.0 / std::log2(double(rank) + 1.0);
            r.recall[c] = double(hits) / double(ps.size());
            r.ndcg[c] = idcg > 0 ? dcg / idcg : 0.0;
        }
    }
    for (size_t t = 0; t < users.size(); ++t) {
        if (skipped[t]) {
            ++rep.users_skipped;
            continue;
        }
        ++rep.users_evaluated;
        for (int c = 0; c < nc; ++c) {
            rep.recall[c] += rows[t].recall[c];
            rep.ndcg[c] += rows[t].ndcg[c];
        }
        if (keep_per_user) rep.per_user.push_back(rows[t]);
    }
    if (rep.users_evaluated > 0)
        for (int c = 0; c < nc; ++c) {
            rep.recall[c] /= rep.users_evaluated;
            rep.ndcg[c] /= rep.users_evaluated;
        }
    return rep;
}

}  // namespace magnet
