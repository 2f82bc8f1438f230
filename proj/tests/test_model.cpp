#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "magnet/error.hpp"
#include "magnet/model.hpp"

using namespace magnet;
using testutil::close_abs;

TEST_CASE("initialization creates the documented tensors with zeroed biases") {
    auto rig = testutil::make_rig<double>(testutil::small_config());
    const auto& m = rig->tr.model;
    const int d = m.cfg.embed_dim;
    const int U = m.train->num_users, I = m.train->num_items;

    CHECK(m.params.at("user_emb").value.rows == U);
    CHECK(m.params.at("user_emb").value.cols == d);
    CHECK(m.params.at("item_emb").value.rows == I);
    CHECK(m.params.at("proj_a_w").value.rows == m.feat_a->dim);
    CHECK(m.params.at("proj_a_w").value.cols == d);
    CHECK(m.params.at("proj_s_w").value.rows == m.feat_s->dim);
    CHECK(m.params.at("router_w").value.rows == 2 * d);
    CHECK(m.params.at("router_w").value.cols == 9);
    CHECK(m.params.at("scorer_w").value.rows == d);
    CHECK(m.params.at("scorer_w").value.cols == 1);
    for (int e = 0; e < 9; ++e) {
        const auto& w = m.params.at("expert_w." + std::to_string(e)).value;
        CHECK(w.rows == 2 * d);
        CHECK(w.cols == d);
    }
    CHECK(!m.params.has("fusion_w"));
    CHECK(!m.params.has("templates"));
    CHECK(m.experts() == 9);

    for (const char* name : {"proj_a_b", "proj_s_b", "router_b", "scorer_b", "expert_b.0"})
        for (double x : m.params.at(name).value.v) CHECK(x == 0.0);

    // weights did get initialized
    double mass = 0;
    for (double x : m.params.at("user_emb").value.v) mass += std::abs(x);
    CHECK(mass > 0.0);
}

TEST_CASE("initialization is a pure function of seed and tensor name") {
    auto cfg = testutil::small_config();
    auto a = testutil::make_rig<double>(cfg);
    auto b = testutil::make_rig<double>(cfg);
    for (size_t t = 0; t < a->tr.model.params.tensors.size(); ++t) {
        const auto& ta = a->tr.model.params.tensors[t];
        const auto& tb = b->tr.model.params.tensors[t];
        CHECK(ta.name == tb.name);
        CHECK(ta.value.v == tb.value.v);
    }
    cfg.seed = 11;
    auto c = testutil::make_rig<double>(cfg);
    CHECK(c->tr.model.params.at("user_emb").value.v != a->tr.model.params.at("user_emb").value.v);

    // different tensor names draw from different streams
    const auto& pa = a->tr.model.params.at("proj_a_w").value;
    const auto& ps = a->tr.model.params.at("proj_s_w").value;
    size_t n = std::min(pa.v.size(), ps.v.size());
    bool all_equal = true;
    for (size_t t = 0; t < n; ++t) all_equal = all_equal && pa.v[t] == ps.v[t];
    CHECK(!all_equal);
}

TEST_CASE("evaluation-mode scoring ignores dropout entirely") {
    auto cfg = testutil::small_config();
    cfg.dropout = 0.5;
    auto rig = testutil::make_rig<double>(cfg);
    const auto& m = rig->tr.model;
    auto ctx = build_scoring_context(m, false, 0);
    auto [u, i] = rig->split.train.edges.front();
    TokenForward<double> t1, t2;
    token_forward(m, ctx, u, i, 0, t1);
    token_forward(m, ctx, u, i, 99, t2);
    CHECK(t1.mask.empty());
    CHECK(t1.route.yhat == t2.route.yhat);
}

TEST_CASE("training dropout is a deterministic keyed mask with inverted scaling") {
    auto cfg = testutil::small_config();
    cfg.dropout = 0.5;
    auto rig = testutil::make_rig<double>(cfg);
    const auto& m = rig->tr.model;
    auto ctx_eval = build_scoring_context(m, false, 3);
    auto ctx_tr = build_scoring_context(m, true, 3);
    auto [u, i] = rig->split.train.edges.front();

    TokenForward<double> clean, a, b, c;
    token_forward(m, ctx_eval, u, i, 5, clean);
    token_forward(m, ctx_tr, u, i, 5, a);
    token_forward(m, ctx_tr, u, i, 5, b);
    token_forward(m, ctx_tr, u, i, 6, c);

    CHECK(a.mask == b.mask);
    CHECK(a.chat == b.chat);
    CHECK(a.route.yhat == b.route.yhat);
    CHECK(a.mask != c.mask);

    // kept coordinates carry the clean value divided by the keep rate
    REQUIRE(a.route.gamma == clean.route.gamma);
    const double inv = 1.0 / (1.0 - cfg.dropout);
    REQUIRE(a.chat.size() == clean.chat.size());
    for (size_t t = 0; t < a.chat.size(); ++t) {
        if (a.mask[t])
            CHECK(a.chat[t] == clean.chat[t] * inv);
        else
            CHECK(a.chat[t] == 0.0);
    }
}

TEST_CASE("the expert-free variant scores through a single fusion head") {
    auto cfg = testutil::small_config();
    cfg.no_moe = true;
    auto rig = testutil::make_rig<double>(cfg);
    const auto& m = rig->tr.model;
    CHECK(m.params.has("fusion_w"));
    CHECK(!m.params.has("router_w"));
    CHECK(m.experts() == 0);

    auto ctx = build_scoring_context(m);
    auto [u, i] = rig->split.train.edges.front();
    TokenForward<double> tok;
    token_forward(m, ctx, u, i, 0, tok);
    CHECK(tok.route.pi.empty());
    CHECK(tok.route.gamma.empty());

    // independent recomputation: concat -> affine -> tanh -> linear score
    const int d = m.cfg.embed_dim;
    std::vector<double> c(6 * d);
    for (int t = 0; t < d; ++t) {
        c[t] = ctx.zu[u][t];
        c[d + t] = ctx.hu_a[u][t];
        c[2 * d + t] = ctx.hu_s[u][t];
        c[3 * d + t] = ctx.zi[i][t];
        c[4 * d + t] = ctx.hi_a[i][t];
        c[5 * d + t] = ctx.hi_s[i][t];
    }
    const auto& fw = m.params.at("fusion_w").value;
    const auto& fb = m.params.at("fusion_b").value;
    double want = m.params.at("scorer_b").value[0][0];
    const auto& sw = m.params.at("scorer_w").value;
    for (int o = 0; o < d; ++o) {
        double acc = fb[0][o];
        for (int t = 0; t < 6 * d; ++t) acc += c[t] * fw[t][o];
        want += sw[o][0] * std::tanh(acc);
    }
    CHECK(close_abs(tok.route.yhat, want, 1e-12));
}

TEST_CASE("free templates start at the structured triplets and score identically") {
    auto cfg = testutil::small_config();
    auto fixed = testutil::make_rig<double>(cfg);
    cfg.free_templates = true;
    auto free = testutil::make_rig<double>(cfg);

    const auto& raw = free->tr.model.params.at("templates").value;
    for (int e = 0; e < 9; ++e)
        for (int c = 0; c < 3; ++c) CHECK(raw[e][c] == fixed->tr.model.pool.weights[e][c]);

    auto rt_fixed = free->tr.model.resolve_triplets();
    CHECK(rt_fixed.trainable);
    for (int e = 0; e < 9; ++e)
        for (int c = 0; c < 3; ++c)
            CHECK(close_abs(rt_fixed.w[e][c], fixed->tr.model.pool.weights[e][c], 1e-15));

    auto ctx_a = build_scoring_context(fixed->tr.model);
    auto ctx_b = build_scoring_context(free->tr.model);
    for (auto [u, i] : testutil::first_edges(*fixed, 8)) {
        auto ra = score_pair(fixed->tr.model, ctx_a, u, i);
        auto rb = score_pair(free->tr.model, ctx_b, u, i);
        CHECK(ra.yhat == rb.yhat);
    }
}

TEST_CASE("free template rows are projected onto the simplex when resolved") {
    auto cfg = testutil::small_config();
    cfg.free_templates = true;
    auto rig = testutil::make_rig<double>(cfg);
    auto& raw = rig->tr.model.params.at("templates").value;
    raw[0][0] = 2.0;
    raw[0][1] = 0.0;
    raw[0][2] = 0.0;
    raw[1][0] = 0.4;
    raw[1][1] = 0.4;
    raw[1][2] = 0.2;
    auto rt = rig->tr.model.resolve_triplets();
    CHECK(close_abs(rt.w[0][0], 1.0, 1e-12));
    CHECK(close_abs(rt.w[0][1], 0.0, 1e-12));
    CHECK(rt.active[0] == std::array<bool, 3>{true, false, false});
    // interior points are fixed points of the projection
    CHECK(close_abs(rt.w[1][0], 0.4, 1e-12));
    CHECK(close_abs(rt.w[1][2], 0.2, 1e-12));
    CHECK(rt.active[1] == std::array<bool, 3>{true, true, true});
}

TEST_CASE("structured triplets resolve to the pool constants") {
    auto rig = testutil::make_rig<double>(testutil::small_config());
    auto rt = rig->tr.model.resolve_triplets();
    CHECK(!rt.trainable);
    for (int e = 0; e < 9; ++e) {
        CHECK(rt.w[e] == rig->tr.model.pool.weights[e]);
        CHECK(rt.active[e] == std::array<bool, 3>{true, true, true});
    }
}

TEST_CASE("the parameter store rejects duplicates and unknown names") {
    ParamStore<double> ps;
    ps.add("a", 2, 3);
    CHECK_THROWS_AS(ps.add("a", 1, 1), Error);
    CHECK_THROWS_AS(ps.id("missing"), Error);
    CHECK(ps.has("a"));
    CHECK(!ps.has("b"));
    ps.add("b", 1, 2);
    CHECK(ps.total_coords() == 8);
    ps.at("a").value.fill(2.0);
    ps.at("b").value.fill(-1.0);
    CHECK(close_abs(ps.squared_norm(), 6 * 4.0 + 2 * 1.0, 1e-12));
    ps.at("a").grad.fill(5.0);
    ps.zero_grads();
    for (double x : ps.at("a").grad.v) CHECK(x == 0.0);
}

TEST_CASE("model initialization validates its configuration") {
    auto rig = testutil::make_rig<double>(testutil::small_config());
    MagnetModel<double> m;
    m.cfg = rig->tr.model.cfg;
    m.train = &rig->split.train;
    m.feat_a = &rig->sd.feat_a;
    m.feat_s = &rig->sd.feat_s;
    m.g_ui = &rig->ui;
    m.g_uig = &rig->uig;

    auto bad = m;
    bad.cfg.top_k = 10;  // only nine experts exist
    CHECK_THROWS_AS(bad.init(), Error);
    bad = m;
    bad.cfg.embed_dim = 0;
    CHECK_THROWS_AS(bad.init(), Error);
    MagnetModel<double> unattached;
    unattached.cfg = m.cfg;
    CHECK_THROWS_AS(unattached.init(), Error);
}

TEST_CASE("the scored routing matches an independent recomputation") {
    auto rig = testutil::make_rig<double>(testutil::small_config());
    const auto& m = rig->tr.model;
    auto ctx = build_scoring_context(m);
    const int d = m.cfg.embed_dim, E = 9, K = m.cfg.top_k;

    for (auto [u, i] : testutil::first_edges(*rig, 6)) {
        auto rt = score_pair(m, ctx, u, i);

        // dense routing: affine on [z_u; z_i] then softmax
        std::vector<double> logits(E);
        const auto& rw = m.params.at("router_w").value;
        const auto& rb = m.params.at("router_b").value;
        for (int e = 0; e < E; ++e) {
            double acc = rb[0][e];
            for (int t = 0; t < d; ++t)
                acc += ctx.zu[u][t] * rw[t][e] + ctx.zi[i][t] * rw[d + t][e];
            logits[e] = acc;
        }
        double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0;
        for (double l : logits) z += std::exp(l - mx);
        std::vector<double> pi(E);
        for (int e = 0; e < E; ++e) pi[e] = std::exp(logits[e] - mx) / z;
        for (int e = 0; e < E; ++e) CHECK(close_abs(rt.pi[e], pi[e], 1e-12));

        // selection: K largest, ties to the smaller index, ascending output
        std::vector<int> order(E);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return pi[a] > pi[b]; });
        std::vector<int> gamma(order.begin(), order.begin() + K);
        std::sort(gamma.begin(), gamma.end());
        CHECK(rt.gamma == gamma);

        double zsum = 0;
        for (int e : gamma) zsum += pi[e];

        // expert heads: affine(2d -> d) + tanh on the triplet-mixed input
        double yhat = m.params.at("scorer_b").value[0][0];
        const auto& sw = m.params.at("scorer_w").value;
        std::vector<double> fused(d, 0.0);
        for (int slot = 0; slot < K; ++slot) {
            int e = gamma[slot];
            const auto& w = ctx.triplets.w[e];
            std::vector<double> cin(2 * d);
            for (int t = 0; t < d; ++t) {
                cin[t] = w[0] * ctx.zu[u][t] + w[1] * ctx.hu_a[u][t] + w[2] * ctx.hu_s[u][t];
                cin[d + t] = w[0] * ctx.zi[i][t] + w[1] * ctx.hi_a[i][t] + w[2] * ctx.hi_s[i][t];
            }
            const auto& ew = m.params.at("expert_w." + std::to_string(e)).value;
            const auto& eb = m.params.at("expert_b." + std::to_string(e)).value;
            for (int o = 0; o < d; ++o) {
                double acc = eb[0][o];
                for (int t = 0; t < 2 * d; ++t) acc += cin[t] * ew[t][o];
                fused[o] += (pi[e] / zsum) * std::tanh(acc);
            }
        }
        for (int o = 0; o < d; ++o) yhat += sw[o][0] * fused[o];
        CHECK(close_abs(rt.yhat, yhat, 1e-10));
    }
}
