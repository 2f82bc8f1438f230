#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "magnet/data.hpp"
#include "magnet/encoder.hpp"
#include "magnet/error.hpp"
#include "magnet/graph.hpp"
#include "magnet/mat.hpp"
#include "magnet/moe.hpp"
#include "magnet/rng.hpp"

namespace magnet {

template <class T>
struct Tensor {
    std::string name;
    Mat<T> value;
    Mat<T> grad;
    Mat<T> adam_m;
    Mat<T> adam_v;
};

template <class T>
struct ParamStore {
    std::vector<Tensor<T>> tensors;
    std::unordered_map<std::string, int> index;

    Tensor<T>& add(const std::string& name, int rows, int cols) {
        if (index.count(name)) throw Error(ErrorKind::internal, "duplicate tensor " + name);
        index[name] = int(tensors.size());
        tensors.push_back({name, Mat<T>(rows, cols), Mat<T>(rows, cols), Mat<T>(rows, cols),
                           Mat<T>(rows, cols)});
        return tensors.back();
    }
    int id(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw Error(ErrorKind::internal, "unknown tensor " + name);
        return it->second;
    }
    Tensor<T>& at(const std::string& name) { return tensors[id(name)]; }
    const Tensor<T>& at(const std::string& name) const { return tensors[id(name)]; }
    bool has(const std::string& name) const { return index.count(name) != 0; }

    void zero_grads() {
        for (auto& t : tensors) t.grad.fill(T(0));
    }
    size_t total_coords() const {
        size_t n = 0;
        for (const auto& t : tensors) n += t.value.size();
        return n;
    }
    double squared_norm() const {
        double s = 0;
        for (const auto& t : tensors)
            for (T x : t.value.v) s += double(x) * double(x);
        return s;
    }
};

struct ModelConfig {
    int embed_dim = 64;
    int layers = 2;
    int top_k = 4;
    int expert_split = 1;
    TemplateParams tpl;
    double dropout = 0.10;
    int fanout = 0;  // 0 disables neighbor sampling
    bool dual_view = true;
    bool no_moe = false;
    bool free_templates = false;
    bool zero_router_init = false;
    uint64_t seed = 7;
};

// Resolved per-step expert mixing weights in global [B,A,S] order. With
// structured templates these are constants; with free templates they are the
// simplex projections of the trainable rows, and `active` drives the
// projection Jacobian in the backward pass.
struct ResolvedTriplets {
    std::vector<std::array<double, 3>> w;
    std::vector<std::array<bool, 3>> active;
    bool trainable = false;
};

template <class T>
struct MagnetModel {
    ModelConfig cfg;
    ExpertPool pool;
    ParamStore<T> params;

    // Borrowed data (owned by the pipeline driver).
    const InteractionSet* train = nullptr;
    const FeatureMatrix* feat_a = nullptr;
    const FeatureMatrix* feat_s = nullptr;
    const ViewGraph* g_ui = nullptr;
    const ViewGraph* g_uig = nullptr;  // null in single-view mode

    int experts() const { return cfg.no_moe ? 0 : pool.experts; }

    void init() {
        cfg.tpl.validate();
        if (cfg.embed_dim < 1) throw Error(ErrorKind::config, "embed_dim must be >= 1");
        if (cfg.layers < 0) throw Error(ErrorKind::config, "layers must be >= 0");
        if (!train || !feat_a || !feat_s || !g_ui)
            throw Error(ErrorKind::internal, "model data not attached");
        if (cfg.dual_view && !g_uig)
            throw Error(ErrorKind::internal, "dual-view model needs the augmented graph");
        pool = instantiate_pool(cfg.tpl, cfg.expert_split);
        if (!cfg.no_moe && (cfg.top_k < 1 || cfg.top_k > pool.experts))
            throw Error(ErrorKind::config, "top_k must be in [1, experts]");

        const int d = cfg.embed_dim;
        const int U = train->num_users, I = train->num_items;
        // The ID tables are shared across views.
        params.add("user_emb", U, d);
        params.add("item_emb", I, d);
        params.add("proj_a_w", feat_a->dim, d);
        params.add("proj_a_b", 1, d);
        params.add("proj_s_w", feat_s->dim, d);
        params.add("proj_s_b", 1, d);
        if (cfg.no_moe) {
            params.add("fusion_w", 6 * d, d);
            params.add("fusion_b", 1, d);
        } else {
            params.add("router_w", 2 * d, pool.experts);
            params.add("router_b", 1, pool.experts);
            for (int e = 0; e < pool.experts; ++e) {
                params.add("expert_w." + std::to_string(e), 2 * d, d);
                params.add("expert_b." + std::to_string(e), 1, d);
            }
            if (cfg.free_templates) params.add("templates", pool.experts, 3);
        }
        params.add("scorer_w", d, 1);
        params.add("scorer_b", 1, 1);

        for (auto& t : params.tensors) {
            bool bias = t.name.find("_b") != std::string::npos && t.value.rows <= 1;
            if (bias) continue;  // biases start at zero
            Rng r = Rng::derive(cfg.seed, {rng_stream::kInit, fnv1a64(t.name.data(), t.name.size())});
            glorot_fill(t.value, r);
        }
        if (!cfg.no_moe && cfg.zero_router_init) params.at("router_w").value.fill(T(0));
        if (cfg.free_templates && !cfg.no_moe) {
            auto& tpl = params.at("templates").value;
            for (int e = 0; e < pool.experts; ++e)
                for (int c = 0; c < 3; ++c) tpl[e][c] = T(pool.weights[e][c]);
        }
    }

    ResolvedTriplets resolve_triplets() const {
        ResolvedTriplets out;
        out.w.resize(pool.experts);
        out.active.resize(pool.experts);
        if (cfg.free_templates && !cfg.no_moe) {
            out.trainable = true;
            const auto& raw = params.at("templates").value;
            for (int e = 0; e < pool.experts; ++e) {
                std::array<double, 3> v{double(raw[e][0]), double(raw[e][1]), double(raw[e][2])};
                out.w[e] = project_to_simplex(v, out.active[e]);
            }
        } else {
            for (int e = 0; e < pool.experts; ++e) {
                out.w[e] = pool.weights[e];
                out.active[e] = {true, true, true};
            }
        }
        return out;
    }
};

// Everything needed to score pairs under the current parameters: propagated
// view embeddings, the fused representation, and modality cues.
template <class T>
struct ScoringContext {
    PropagationRecord<T> ui;
    PropagationRecord<T> uig;   // empty in single-view mode
    Mat<T> zu, zi;              // fused behavior embeddings
    Mat<T> hu_a, hu_s;          // user cues (means over training history)
    Mat<T> hi_a, hi_s;          // item cues
    ResolvedTriplets triplets;
    bool training = false;
    uint64_t step = 0;
};

// Linear projection cues for every item, then history means for every user.
// Users with empty training history get the zero vector.
template <class T>
void compute_modality_cues(const MagnetModel<T>& m, ScoringContext<T>& ctx) {
    const int d = m.cfg.embed_dim;
    const auto& pa_w = m.params.at("proj_a_w").value;
    const auto& pa_b = m.params.at("proj_a_b").value;
    const auto& ps_w = m.params.at("proj_s_w").value;
    const auto& ps_b = m.params.at("proj_s_b").value;
    const int I = m.train->num_items, U = m.train->num_users;
    ctx.hi_a = Mat<T>(I, d);
    ctx.hi_s = Mat<T>(I, d);
    ctx.hu_a = Mat<T>(U, d);
    ctx.hu_s = Mat<T>(U, d);

#pragma omp parallel for schedule(static)
    for (int32_t i = 0; i < I; ++i) {
        std::vector<T> x(m.feat_a->dim);
        for (int32_t t = 0; t < m.feat_a->dim; ++t) x[t] = T(m.feat_a->row(i)[t]);
        affine<T>(pa_w, pa_b.row(0), x, ctx.hi_a.row(i));
        std::vector<T> y(m.feat_s->dim);
        for (int32_t t = 0; t < m.feat_s->dim; ++t) y[t] = T(m.feat_s->row(i)[t]);
        affine<T>(ps_w, ps_b.row(0), y, ctx.hi_s.row(i));
    }
#pragma omp parallel for schedule(static)
    for (int32_t u = 0; u < U; ++u) {
        const auto& hist = m.train->histories[u];
        if (hist.empty()) continue;  // zero cue
        double inv = 1.0 / double(hist.size());
        for (int c = 0; c < d; ++c) {
            double sa = 0, ss = 0;
            for (int32_t i : hist) {
                sa += double(ctx.hi_a[i][c]);
                ss += double(ctx.hi_s[i][c]);
            }
            ctx.hu_a[u][c] = T(sa * inv);
            ctx.hu_s[u][c] = T(ss * inv);
        }
    }
}

/// Full forward pass of the encoder stack: propagate each view, fuse, project
// cues, resolve templates. `training` enables fanout sampling (when
// configured); dropout is applied per token later.
template <class T>
ScoringContext<T> build_scoring_context(const MagnetModel<T>& m, bool training = false,
                                        uint64_t step = 0) {
    ScoringContext<T> ctx;
    ctx.training = training;
    ctx.step = step;
    int fanout = training ? m.cfg.fanout : 0;
    const auto& eu = m.params.at("user_emb").value;
    const auto& ei = m.params.at("item_emb").value;
    ctx.ui = propagate_view(*m.g_ui, eu, ei, m.cfg.layers, fanout, m.cfg.seed, step);
    if (m.cfg.dual_view) {
        ctx.uig = propagate_view(*m.g_uig, eu, ei, m.cfg.layers, fanout, m.cfg.seed, step + (1ull << 62));
        fuse_views(ctx.ui.emb.zu, &ctx.uig.emb.zu, ctx.zu);
        fuse_views(ctx.ui.emb.zi, &ctx.uig.emb.zi, ctx.zi);
    } else {
        fuse_views(ctx.ui.emb.zu, (const Mat<T>*)nullptr, ctx.zu);
        fuse_views(ctx.ui.emb.zi, (const Mat<T>*)nullptr, ctx.zi);
    }
    compute_modality_cues(m, ctx);
    ctx.triplets = m.resolve_triplets();
    return ctx;
}

// Forward record for one scored (user, item) token; holds what the backward
// pass needs and nothing else.
template <class T>
struct TokenForward {
    int32_t u = 0, i = 0;
    RoutingResult<T> route;
    std::vector<T> chat;        // expert inputs after dropout, K slots x 2d (no_moe: 6d)
    std::vector<T> sexp;        // expert head outputs, K slots x d (no_moe: d)
    std::vector<uint8_t> mask;  // dropout keep mask aligned with chat (empty when off)
};

namespace detail {

// x(w) = w_B z + w_A h_a + w_S h_s for one side of the pair.
template <class T>
inline void mix_side(const std::array<double, 3>& w, const T* z, const T* ha, const T* hs, int d,
                     T* out) {
    for (int c = 0; c < d; ++c)
        out[c] = T(w[0] * double(z[c]) + w[1] * double(ha[c]) + w[2] * double(hs[c]));
}

}  // namespace detail

// Score one (u, i) pair. Training mode applies inverted dropout to each
// active expert's concatenated input, keyed by (step, token, expert) so the
// draw is independent of scheduling.
template <class T>
void token_forward(const MagnetModel<T>& m, const ScoringContext<T>& ctx, int32_t u, int32_t i,
                   uint64_t token_idx, TokenForward<T>& tok) {
    const int d = m.cfg.embed_dim;
    tok.u = u;
    tok.i = i;
    const T* zu = ctx.zu[u];
    const T* zi = ctx.zi[i];
    const bool drop = ctx.training && m.cfg.dropout > 0;
    const double keep = 1.0 - m.cfg.dropout;

    const auto& sc_w = m.params.at("scorer_w").value;
    const T sc_b = m.params.at("scorer_b").value[0][0];

    if (m.cfg.no_moe) {
        const int six = 6 * d;
        std::vector<T> c(six);
        for (int t = 0; t < d; ++t) {
            c[t] = zu[t];
            c[d + t] = ctx.hu_a[u][t];
            c[2 * d + t] = ctx.hu_s[u][t];
            c[3 * d + t] = zi[t];
            c[4 * d + t] = ctx.hi_a[i][t];
            c[5 * d + t] = ctx.hi_s[i][t];
        }
        tok.chat.assign(six, T(0));
        tok.mask.clear();
        if (drop) {
            tok.mask.resize(six);
            Rng r = Rng::derive(m.cfg.seed, {rng_stream::kDropout, ctx.step, token_idx, 0});
            double inv = 1.0 / keep;
            for (int t = 0; t < six; ++t) {
                tok.mask[t] = r.next_double() < keep ? 1 : 0;
                tok.chat[t] = tok.mask[t] ? T(double(c[t]) * inv) : T(0);
            }
        } else {
            tok.chat = c;
        }
        tok.sexp.resize(d);
        affine<T>(m.params.at("fusion_w").value, m.params.at("fusion_b").value.row(0), tok.chat,
                  tok.sexp);
        for (int t = 0; t < d; ++t) tok.sexp[t] = T(std::tanh(double(tok.sexp[t])));
        tok.route.fused.assign(tok.sexp.begin(), tok.sexp.end());
        double y = double(sc_b);
        for (int t = 0; t < d; ++t) y += double(sc_w[t][0]) * double(tok.sexp[t]);
        tok.route.yhat = T(y);
        return;
    }

    const int E = m.pool.experts;
    const int K = m.cfg.top_k;
    auto& rt = tok.route;
    rt.pi.resize(E);
    std::vector<T> q(2 * d);
    for (int t = 0; t < d; ++t) {
        q[t] = zu[t];
        q[d + t] = zi[t];
    }
    route_dense<T>(q, m.params.at("router_w").value, m.params.at("router_b").value.row(0), rt.pi);
    topk_renormalize<T>(rt.pi, K, rt.gamma, rt.pi_renorm);

    tok.chat.assign(size_t(K) * 2 * d, T(0));
    tok.sexp.assign(size_t(K) * d, T(0));
    tok.mask.clear();
    if (drop) tok.mask.assign(size_t(K) * 2 * d, 1);
    rt.fused.assign(d, T(0));

    std::vector<T> c(2 * d);
    for (int slot = 0; slot < K; ++slot) {
        int e = rt.gamma[slot];
        const auto& w = ctx.triplets.w[e];
        detail::mix_side(w, zu, ctx.hu_a[u], ctx.hu_s[u], d, c.data());
        detail::mix_side(w, zi, ctx.hi_a[i], ctx.hi_s[i], d, c.data() + d);
        T* chat = tok.chat.data() + size_t(slot) * 2 * d;
        if (drop) {
            Rng r = Rng::derive(m.cfg.seed,
                                {rng_stream::kDropout, ctx.step, token_idx, uint64_t(e)});
            double inv = 1.0 / keep;
            uint8_t* mk = tok.mask.data() + size_t(slot) * 2 * d;
            for (int t = 0; t < 2 * d; ++t) {
                mk[t] = r.next_double() < keep ? 1 : 0;
                chat[t] = mk[t] ? T(double(c[t]) * inv) : T(0);
            }
        } else {
            std::copy(c.begin(), c.end(), chat);
        }
        T* se = tok.sexp.data() + size_t(slot) * d;
        affine<T>(m.params.at("expert_w." + std::to_string(e)).value,
                  m.params.at("expert_b." + std::to_string(e)).value.row(0),
                  std::span<const T>(chat, size_t(2 * d)), std::span<T>(se, size_t(d)));
        for (int t = 0; t < d; ++t) se[t] = T(std::tanh(double(se[t])));
        for (int t = 0; t < d; ++t)
            rt.fused[t] += T(double(rt.pi_renorm[slot]) * double(se[t]));
    }
    double y = double(sc_b);
    for (int t = 0; t < d; ++t) y += double(sc_w[t][0]) * double(rt.fused[t]);
    rt.yhat = T(y);
}

// Spec-facing convenience: routing result for a pair under eval semantics.
template <class T>
RoutingResult<T> score_pair(const MagnetModel<T>& m, const ScoringContext<T>& ctx, int32_t u,
                            int32_t i) {
    TokenForward<T> tok;
    token_forward(m, ctx, u, i, 0, tok);
    return tok.route;
}

// Gradient accumulation buffers for the token-level backward pass. Tensor
// slots align with the parameter store; row matrices collect gradients on the
// fused embeddings and cues, to be pushed through the encoder afterwards.
template <class T>
struct TokenGrads {
    std::vector<Mat<T>> tensor;
    Mat<T> zu, zi, hu_a, hu_s, hi_a, hi_s;

    void init(const MagnetModel<T>& m) {
        tensor.clear();
        tensor.reserve(m.params.tensors.size());
        for (const auto& t : m.params.tensors) tensor.emplace_back(t.value.rows, t.value.cols);
        const int d = m.cfg.embed_dim;
        zu = Mat<T>(m.train->num_users, d);
        zi = Mat<T>(m.train->num_items, d);
        hu_a = Mat<T>(m.train->num_users, d);
        hu_s = Mat<T>(m.train->num_users, d);
        hi_a = Mat<T>(m.train->num_items, d);
        hi_s = Mat<T>(m.train->num_items, d);
    }
    void add_from(const TokenGrads<T>& o) {
        for (size_t t = 0; t < tensor.size(); ++t)
            for (size_t c = 0; c < tensor[t].v.size(); ++c) tensor[t].v[c] += o.tensor[t].v[c];
        auto acc = [](Mat<T>& a, const Mat<T>& b) {
            for (size_t c = 0; c < a.v.size(); ++c) a.v[c] += b.v[c];
        };
        acc(zu, o.zu);
        acc(zi, o.zi);
        acc(hu_a, o.hu_a);
        acc(hu_s, o.hu_s);
        acc(hi_a, o.hi_a);
        acc(hi_s, o.hi_s);
    }
};

// Adjoint of token_forward. g_yhat is the upstream gradient on the score;
// g_pi_dense (length E, may be empty) carries the regularizer gradients on
// the dense routing distribution (positives only). Routing gradients flow
// through the renormalized weights of the activated experts plus the dense
// softmax; the Top-K selection itself is treated as constant within a step.
template <class T>
void token_backward(const MagnetModel<T>& m, const ScoringContext<T>& ctx,
                    const TokenForward<T>& tok, double g_yhat,
                    std::span<const double> g_pi_dense, TokenGrads<T>& gr) {
    const int d = m.cfg.embed_dim;
    const int32_t u = tok.u, i = tok.i;
    const double keep = 1.0 - m.cfg.dropout;
    const bool drop = !tok.mask.empty();
    const double inv_keep = drop ? 1.0 / keep : 1.0;

    const auto& sc_w = m.params.at("scorer_w").value;
    Mat<T>& g_sc_w = gr.tensor[m.params.id("scorer_w")];
    Mat<T>& g_sc_b = gr.tensor[m.params.id("scorer_b")];

    // Score head: yhat = sc_w . fused + sc_b
    std::vector<T> g_fused(d);
    const std::vector<T>& fused = m.cfg.no_moe ? tok.sexp : tok.route.fused;
    for (int t = 0; t < d; ++t) {
        g_sc_w[t][0] += T(g_yhat * double(fused[t]));
        g_fused[t] = T(g_yhat * double(sc_w[t][0]));
    }
    g_sc_b[0][0] += T(g_yhat);

    if (m.cfg.no_moe) {
        const int six = 6 * d;
        std::vector<T> g_a(d), g_chat(six, T(0));
        for (int t = 0; t < d; ++t) {
            double s = double(tok.sexp[t]);
            g_a[t] = T(double(g_fused[t]) * (1.0 - s * s));
        }
        affine_backward<T>(m.params.at("fusion_w").value, tok.chat, g_a,
                           gr.tensor[m.params.id("fusion_w")],
                           gr.tensor[m.params.id("fusion_b")].row(0), g_chat);
        // undo dropout scaling, then scatter the six segments
        for (int t = 0; t < six; ++t) {
            double g = double(g_chat[t]) * (drop ? (tok.mask[t] ? inv_keep : 0.0) : 1.0);
            int seg = t / d, c = t % d;
            switch (seg) {
                case 0: gr.zu[u][c] += T(g); break;
                case 1: gr.hu_a[u][c] += T(g); break;
                case 2: gr.hu_s[u][c] += T(g); break;
                case 3: gr.zi[i][c] += T(g); break;
                case 4: gr.hi_a[i][c] += T(g); break;
                case 5: gr.hi_s[i][c] += T(g); break;
            }
        }
        return;
    }

    const int E = m.pool.experts;
    const int K = m.cfg.top_k;
    const auto& rt = tok.route;
    const T* zu = ctx.zu[u];
    const T* zi = ctx.zi[i];

    std::vector<double> g_pi(E, 0.0);
    if (!g_pi_dense.empty())
        for (int e = 0; e < E; ++e) g_pi[e] = g_pi_dense[e];

    std::vector<T> g_renorm(K, T(0));
    std::vector<T> g_c(2 * d);
    Mat<T>* g_tpl =
        m.cfg.free_templates ? &gr.tensor[m.params.id("templates")] : nullptr;
    for (int slot = 0; slot < K; ++slot) {
        int e = rt.gamma[slot];
        const T* se = tok.sexp.data() + size_t(slot) * d;
        const T* chat = tok.chat.data() + size_t(slot) * 2 * d;

        // fused = sum renorm[slot] * s_e
        double gr_dot = 0;
        std::vector<T> g_a(d);
        for (int t = 0; t < d; ++t) {
            gr_dot += double(g_fused[t]) * double(se[t]);
            double s = double(se[t]);
            g_a[t] = T(double(g_fused[t]) * double(rt.pi_renorm[slot]) * (1.0 - s * s));
        }
        g_renorm[slot] = T(gr_dot);

        std::fill(g_c.begin(), g_c.end(), T(0));
        affine_backward<T>(m.params.at("expert_w." + std::to_string(e)).value,
                           std::span<const T>(chat, size_t(2 * d)), g_a,
                           gr.tensor[m.params.id("expert_w." + std::to_string(e))],
                           gr.tensor[m.params.id("expert_b." + std::to_string(e))].row(0), g_c);
        if (drop) {
            const uint8_t* mk = tok.mask.data() + size_t(slot) * 2 * d;
            for (int t = 0; t < 2 * d; ++t) g_c[t] = mk[t] ? T(double(g_c[t]) * inv_keep) : T(0);
        }

        // x_u = w_B zu + w_A hu_a + w_S hu_s (items likewise)
        const auto& w = ctx.triplets.w[e];
        for (int t = 0; t < d; ++t) {
            double gu = double(g_c[t]), gi = double(g_c[d + t]);
            gr.zu[u][t] += T(w[0] * gu);
            gr.hu_a[u][t] += T(w[1] * gu);
            gr.hu_s[u][t] += T(w[2] * gu);
            gr.zi[i][t] += T(w[0] * gi);
            gr.hi_a[i][t] += T(w[1] * gi);
            gr.hi_s[i][t] += T(w[2] * gi);
        }
        if (ctx.triplets.trainable && g_tpl) {
            // dL/dw through both sides, then the projection Jacobian
            std::array<double, 3> gw{0, 0, 0};
            for (int t = 0; t < d; ++t) {
                double gu = double(g_c[t]), gi = double(g_c[d + t]);
                gw[0] += gu * double(zu[t]) + gi * double(zi[t]);
                gw[1] += gu * double(ctx.hu_a[u][t]) + gi * double(ctx.hi_a[i][t]);
                gw[2] += gu * double(ctx.hu_s[u][t]) + gi * double(ctx.hi_s[i][t]);
            }
            const auto& act = ctx.triplets.active[e];
            int na = int(act[0]) + int(act[1]) + int(act[2]);
            double mean = 0;
            for (int c = 0; c < 3; ++c)
                if (act[c]) mean += gw[c];
            mean /= double(na);
            for (int c = 0; c < 3; ++c)
                if (act[c]) (*g_tpl)[e][c] += T(gw[c] - mean);
        }
    }

    // renormalized weights -> dense distribution (double-precision buffer)
    {
        double z = 0;
        for (int e : rt.gamma) z += double(rt.pi[e]);
        double mix = 0;
        for (int s = 0; s < K; ++s) mix += double(g_renorm[s]) * double(rt.pi_renorm[s]);
        for (int s = 0; s < K; ++s) g_pi[rt.gamma[s]] += (double(g_renorm[s]) - mix) / z;
    }
    std::vector<double> g_logits(E);
    double acc = 0;
    for (int e = 0; e < E; ++e) acc += g_pi[e] * double(rt.pi[e]);
    for (int e = 0; e < E; ++e) g_logits[e] = double(rt.pi[e]) * (g_pi[e] - acc);

    Mat<T>& g_rw = gr.tensor[m.params.id("router_w")];
    Mat<T>& g_rb = gr.tensor[m.params.id("router_b")];
    const auto& rw = m.params.at("router_w").value;
    for (int e = 0; e < E; ++e) g_rb[0][e] += T(g_logits[e]);
    for (int t = 0; t < d; ++t) {
        double gq_u = 0, gq_i = 0;
        for (int e = 0; e < E; ++e) {
            double gl = g_logits[e];
            g_rw[t][e] += T(double(zu[t]) * gl);
            g_rw[d + t][e] += T(double(zi[t]) * gl);
            gq_u += double(rw[t][e]) * gl;
            gq_i += double(rw[d + t][e]) * gl;
        }
        gr.zu[u][t] += T(gq_u);
        gr.zi[i][t] += T(gq_i);
    }
}

}  // namespace magnet
