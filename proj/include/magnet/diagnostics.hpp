#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "magnet/losses.hpp"
#include "magnet/model.hpp"
#include "magnet/parallel.hpp"

namespace magnet {

// Mean dense routing distribution over a list of (user, item) pairs,
// evaluated with inference semantics (no dropout, full neighborhoods).
template <class T>
std::vector<double> aggregate_routing(const MagnetModel<T>& m, const ScoringContext<T>& ctx,
                                      const std::vector<Edge>& pairs) {
    if (m.cfg.no_moe)
        throw Error(ErrorKind::config, "routing diagnostics require the expert pool");
    if (pairs.empty()) throw Error(ErrorKind::data, "routing aggregation needs pairs");
    const int E = m.pool.experts;
    std::vector<double> acc(E, 0.0);
    std::vector<std::vector<double>> partial(size_t(thread_slots()), std::vector<double>(E, 0.0));
#pragma omp parallel for schedule(static)
    for (size_t t = 0; t < pairs.size(); ++t) {
        TokenForward<T> tok;
        token_forward(m, ctx, pairs[t].first, pairs[t].second, 0, tok);
        auto& mine = partial[thread_id()];
        for (int e = 0; e < E; ++e) mine[e] += double(tok.route.pi[e]);
    }
    for (const auto& p : partial)
        for (int e = 0; e < E; ++e) acc[e] += p[e];
    for (int e = 0; e < E; ++e) acc[e] /= double(pairs.size());
    return acc;
}

// Interpretation summary of an aggregated routing distribution.
struct RoutingProfile {
    int experts = 0;
    std::vector<double> pi_bar;
    double entropy = 0;        // H(pi_bar), natural log
    double h_norm = 0;         // H / ln E
    double n_eff = 0;          // exp(H)
    double hhi = 0;            // sum pi_bar^2
    double div = 0;            // normalized entropy (same scale as h_norm)
    double winner_share = 0;   // max_e pi_bar
    double concentration = 0;  // (HHI - 1/E) / (1 - 1/E)
    std::array<double, 3> mass_anchor{};   // per anchor group [B, A, S]
    std::array<double, 3> mass_family{};   // per family [Dom, Bal, Com]
    std::array<double, 3> mass_triplet{};  // triplet-weighted: sum_e pi_bar_e * w_e
    double content_mass = 0;               // anchor mass of A plus S
};

inline RoutingProfile routing_diagnostics(const std::vector<double>& pi_bar,
                                          const ResolvedTriplets& triplets) {
    RoutingProfile p;
    p.experts = int(pi_bar.size());
    p.pi_bar = pi_bar;
    p.entropy = instance_entropy(pi_bar);
    p.h_norm = p.experts > 1 ? p.entropy / std::log(double(p.experts)) : 0.0;
    p.div = p.h_norm;
    p.n_eff = std::exp(p.entropy);
    for (int e = 0; e < p.experts; ++e) {
        double w = pi_bar[e];
        p.hhi += w * w;
        p.winner_share = std::max(p.winner_share, w);
        p.mass_anchor[int(ExpertPool::group_of(e))] += w;
        p.mass_family[int(ExpertPool::family_of(e))] += w;
        for (int c = 0; c < 3; ++c) p.mass_triplet[c] += w * triplets.w[e][c];
    }
    double uniform = 1.0 / double(p.experts);
    p.concentration = p.experts > 1 ? (p.hhi - uniform) / (1.0 - uniform) : 1.0;
    p.content_mass = p.mass_anchor[1] + p.mass_anchor[2];
    return p;
}

// One header row plus one data row; columns are stable across runs.
inline std::string routing_profile_csv(const RoutingProfile& p) {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "H,H_norm,N_eff,HHI,Div,mass_B,mass_A,mass_S,mass_Dom,mass_Bal,mass_Com,"
                  "winner_share,concentration\n"
                  "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  p.entropy, p.h_norm, p.n_eff, p.hhi, p.div, p.mass_anchor[0], p.mass_anchor[1],
                  p.mass_anchor[2], p.mass_family[0], p.mass_family[1], p.mass_family[2],
                  p.winner_share, p.concentration);
    return buf;
}

}  // namespace magnet
