#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "magnet/error.hpp"
#include "magnet/mat.hpp"

namespace magnet {

// Triplet-template parameters. epsilon must stay below 1/3 so the
// complementary family keeps the anchor strictly minor.
struct TemplateParams {
    double alpha = 0.6;
    double beta = 0.2;
    double delta = 0.5;
    double epsilon = 0.05;

    void validate() const {
        if (alpha < 0 || alpha > 1) throw Error(ErrorKind::config, "alpha must be in [0,1]");
        if (beta < 0 || beta > 1) throw Error(ErrorKind::config, "beta must be in [0,1]");
        if (delta < 0 || delta > 1) throw Error(ErrorKind::config, "delta must be in [0,1]");
        if (epsilon <= 0 || epsilon >= 1.0 / 3.0)
            throw Error(ErrorKind::config, "epsilon must be in (0, 1/3)");
    }
};

enum class Family : int { Dom = 0, Bal = 1, Com = 2 };
enum class Group : int { B = 0, A = 1, S = 2 };

// Canonical triplet [anchor, aux1, aux2] for one family. All three families
// produce points on the probability simplex for valid parameters.
inline std::array<double, 3> evaluate_template(Family f, const TemplateParams& p) {
    switch (f) {
        case Family::Dom:
            return {(1.0 - p.alpha) * 0.5 + p.alpha, (1.0 - p.alpha) * 0.25,
                    (1.0 - p.alpha) * 0.25};
        case Family::Bal:
            return {1.0 / 3.0 + p.beta / 6.0, 1.0 / 3.0 - p.beta / 12.0,
                    1.0 / 3.0 - p.beta / 12.0};
        case Family::Com:
            return {p.epsilon, (1.0 - p.epsilon) * p.delta, (1.0 - p.epsilon) * (1.0 - p.delta)};
    }
    throw Error(ErrorKind::internal, "bad template family");
}

// Reorder a canonical triplet into the fixed global order [B, A, S]. The two
// auxiliary slots fill the remaining modalities in global order.
inline std::array<double, 3> permute_to_global(Group g, const std::array<double, 3>& w) {
    switch (g) {
        case Group::B: return {w[0], w[1], w[2]};
        case Group::A: return {w[1], w[0], w[2]};
        case Group::S: return {w[1], w[2], w[0]};
    }
    throw Error(ErrorKind::internal, "bad anchor group");
}

// 3x3 pool of (anchor group, family) combinations, replicated `split` times
// for expert splitting. Expert e: replica e/9, group (e%9)/3, family e%3.
struct ExpertPool {
    int experts = 9;
    int split = 1;
    std::vector<std::array<double, 3>> weights;  // global [B,A,S] order per expert

    static Group group_of(int e) { return Group((e % 9) / 3); }
    static Family family_of(int e) { return Family(e % 3); }
};

inline ExpertPool instantiate_pool(const TemplateParams& p, int split) {
    p.validate();
    if (split < 1) throw Error(ErrorKind::config, "expert split factor must be >= 1");
    ExpertPool pool;
    pool.split = split;
    pool.experts = 9 * split;
    pool.weights.resize(pool.experts);
    for (int e = 0; e < pool.experts; ++e) {
        auto canonical = evaluate_template(ExpertPool::family_of(e), p);
        pool.weights[e] = permute_to_global(ExpertPool::group_of(e), canonical);
    }
    return pool;
}

// Euclidean projection onto the probability simplex. Returns the active set
// mask; the projection Jacobian is I_S - (1/|S|) 1_S 1_S^T on the active set.
inline std::array<double, 3> project_to_simplex(const std::array<double, 3>& v,
                                                std::array<bool, 3>& active) {
    std::array<double, 3> u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0;
    double theta = 0;
    for (int j = 0; j < 3; ++j) {
        css += u[j];
        double t = (css - 1.0) / double(j + 1);
        if (u[j] - t > 0) theta = t;
    }
    std::array<double, 3> w;
    for (int j = 0; j < 3; ++j) {
        w[j] = std::max(v[j] - theta, 0.0);
        active[j] = w[j] > 0;
    }
    return w;
}

// Dense routing distribution over experts from the fused pair representation
// q = [z_u; z_i]. Softmax is computed with max subtraction.
template <class T>
void route_dense(std::span<const T> q, const Mat<T>& router_w, std::span<const T> router_b,
                 std::span<T> pi) {
    affine(router_w, router_b, q, pi);
    T mx = pi[0];
    for (size_t e = 1; e < pi.size(); ++e) mx = std::max(mx, pi[e]);
    double z = 0;
    for (size_t e = 0; e < pi.size(); ++e) z += std::exp(double(pi[e] - mx));
    double inv = 1.0 / z;
    for (size_t e = 0; e < pi.size(); ++e) pi[e] = T(std::exp(double(pi[e] - mx)) * inv);
}

// Adjoint of softmax given the probabilities: g_logit = pi * (g_pi - <g_pi, pi>).
template <class T>
void softmax_backward(std::span<const T> pi, std::span<const T> g_pi, std::span<T> g_logit) {
    T acc = T(0);
    for (size_t e = 0; e < pi.size(); ++e) acc += g_pi[e] * pi[e];
    for (size_t e = 0; e < pi.size(); ++e) g_logit[e] = pi[e] * (g_pi[e] - acc);
}

// Top-K selection (ties toward the smaller expert index) and renormalization
// of the selected mass. gamma comes out in ascending expert order.
template <class T>
void topk_renormalize(std::span<const T> pi, int K, std::vector<int>& gamma,
                      std::vector<T>& renorm) {
    const int E = int(pi.size());
    if (K < 1 || K > E) throw Error(ErrorKind::config, "top-k must be in [1, experts]");
    std::vector<int> order(E);
    for (int e = 0; e < E; ++e) order[e] = e;
    std::partial_sort(order.begin(), order.begin() + K, order.end(), [&](int a, int b) {
        if (pi[a] != pi[b]) return pi[a] > pi[b];
        return a < b;
    });
    gamma.assign(order.begin(), order.begin() + K);
    std::sort(gamma.begin(), gamma.end());
    double z = 0;
    for (int e : gamma) z += double(pi[e]);
    renorm.resize(K);
    for (int t = 0; t < K; ++t) renorm[t] = T(double(pi[gamma[t]]) / z);
}

// Adjoint of the renormalization: for f in gamma,
// g_pi[f] += (g_renorm[f] - <g_renorm, renorm>) / Z.
template <class T>
void renorm_backward(std::span<const T> pi, const std::vector<int>& gamma,
                     const std::vector<T>& renorm, std::span<const T> g_renorm,
                     std::span<T> g_pi) {
    double z = 0;
    for (int e : gamma) z += double(pi[e]);
    double mix = 0;
    for (size_t t = 0; t < gamma.size(); ++t) mix += double(g_renorm[t]) * double(renorm[t]);
    for (size_t t = 0; t < gamma.size(); ++t)
        g_pi[gamma[t]] += T((double(g_renorm[t]) - mix) / z);
}

// Routing output for one (user, item) pair. The dense distribution is kept
// for schedule statistics and diagnostics.
template <class T>
struct RoutingResult {
    std::vector<T> pi;         // dense over E experts
    std::vector<int> gamma;    // K active experts, ascending
    std::vector<T> pi_renorm;  // renormalized mass over gamma
    std::vector<T> fused;      // weighted expert mixture (d)
    T yhat = T(0);
};

}  // namespace magnet
