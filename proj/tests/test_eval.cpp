#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "magnet/eval.hpp"
#include "magnet/ref.hpp"
#include "magnet/train.hpp"

using namespace magnet;
using testutil::close;
using testutil::close_abs;

TEST_CASE("a single positive ranked second scores 1/log2(3)") {
    auto train = testutil::make_interactions(1, 5, {{0, 0}});
    std::vector<Edge> positives = {{0, 3}};
    auto score = [](int32_t, int32_t i) {
        switch (i) {
            case 2: return 5.0;
            case 3: return 4.0;
            case 1: return 1.0;
            default: return 0.0;
        }
    };
    auto m = ref::metrics_bruteforce(train, positives, 5, {1, 2}, score);
    CHECK(m.users_evaluated == 1);
    CHECK(m.recall[0] == 0.0);
    CHECK(m.recall[1] == 1.0);
    CHECK(m.ndcg[0] == 0.0);
    CHECK(close(m.ndcg[1], 1.0 / std::log2(3.0), 1e-9));
}

TEST_CASE("scores [3,1,2] rank the items [0,2,1]") {
    auto train = testutil::make_interactions(1, 4, {{0, 3}});
    std::vector<Edge> positives = {{0, 0}, {0, 2}};
    auto score = [](int32_t, int32_t i) {
        const double s[] = {3.0, 1.0, 2.0, -10.0};
        return s[i];
    };
    auto m = ref::metrics_bruteforce(train, positives, 4, {1, 2}, score);
    // rank 1 is item 0 (a positive), rank 2 is item 2 (the other positive)
    CHECK(close(m.recall[0], 0.5, 1e-12));
    CHECK(m.recall[1] == 1.0);
    CHECK(m.ndcg[0] == 1.0);
    CHECK(m.ndcg[1] == 1.0);
}

TEST_CASE("tied scores rank the smaller item id first") {
    auto train = testutil::make_interactions(1, 4, {{0, 3}});
    std::vector<Edge> positives = {{0, 2}};
    auto score = [](int32_t, int32_t) { return 1.0; };
    auto m = ref::metrics_bruteforce(train, positives, 4, {2, 3}, score);
    CHECK(m.recall[0] == 0.0);  // items 0 and 1 fill the first two slots
    CHECK(m.recall[1] == 1.0);
}

TEST_CASE("the popularity baseline ranks by training frequency") {
    auto train = testutil::make_interactions(
        3, 5, {{0, 0}, {1, 0}, {2, 0}, {1, 1}, {2, 1}, {2, 2}});
    // counts: item0 x3, item1 x2, item2 x1; user 0 masks item 0
    std::vector<Edge> positives = {{0, 2}};
    auto m = ref::popularity_metrics(train, positives, {1, 2});
    CHECK(m.recall[0] == 0.0);  // top slot goes to item 1
    CHECK(m.recall[1] == 1.0);
}

TEST_CASE("ranking masks training items and orders by score then id") {
    auto rig = testutil::make_rig<double>(testutil::small_config());
    const auto& m = rig->tr.model;
    auto ctx = build_scoring_context(m);
    int32_t u = rig->split.train.edges.front().first;
    auto ranked = rank_items(m, ctx, u, 10);
    REQUIRE(int(ranked.size()) == 10);
    const auto& hist = m.train->histories[u];
    std::vector<double> score(m.train->num_items);
    for (int32_t i = 0; i < m.train->num_items; ++i) {
        TokenForward<double> tok;
        token_forward(m, ctx, u, i, 0, tok);
        score[i] = tok.route.yhat;
    }
    for (size_t t = 0; t < ranked.size(); ++t) {
        CHECK(!std::binary_search(hist.begin(), hist.end(), ranked[t]));
        if (t > 0) {
            bool ok = score[ranked[t - 1]] > score[ranked[t]] ||
                      (score[ranked[t - 1]] == score[ranked[t]] && ranked[t - 1] < ranked[t]);
            CHECK(ok);
        }
    }
}

TEST_CASE("the fast metrics equal the brute-force oracle exactly") {
    auto rig = testutil::make_rig<double>(testutil::small_config());
    const auto& m = rig->tr.model;
    auto ctx = build_scoring_context(m);
    auto score = [&](int32_t u, int32_t i) {
        TokenForward<double> tok;
        token_forward(m, ctx, u, i, 0, tok);
        return double(tok.route.yhat);
    };
    for (const auto* pairs : {&rig->split.valid, &rig->split.test}) {
        auto fast = compute_metrics(m, ctx, *pairs, {1, 5, 10, 20});
        auto want = ref::metrics_bruteforce(rig->split.train, *pairs, m.train->num_items,
                                            {1, 5, 10, 20}, score);
        REQUIRE(fast.users_evaluated == want.users_evaluated);
        for (size_t c = 0; c < 4; ++c) {
            CHECK(fast.recall[c] == want.recall[c]);
            CHECK(fast.ndcg[c] == want.ndcg[c]);
        }
    }
}

TEST_CASE("aggregate metrics are the plain mean of the per-user rows") {
    auto cfg = testutil::small_config();
    cfg.synth_density = 0.5;  // deep histories so the per-user holdout splits are nonempty
    auto rig = testutil::make_rig<double>(cfg);
    const auto& m = rig->tr.model;
    auto ctx = build_scoring_context(m);
    auto rep = compute_metrics(m, ctx, rig->split.test, {10, 20}, true);
    REQUIRE(int(rep.per_user.size()) == rep.users_evaluated);
    REQUIRE(rep.users_evaluated > 0);
    for (size_t c = 0; c < 2; ++c) {
        double racc = 0, nacc = 0;
        for (const auto& r : rep.per_user) {
            racc += r.recall[c];
            nacc += r.ndcg[c];
        }
        CHECK(close_abs(rep.recall[c], racc / rep.users_evaluated, 1e-15));
        CHECK(close_abs(rep.ndcg[c], nacc / rep.users_evaluated, 1e-15));
    }
}

TEST_CASE("users without training history are skipped and counted") {
    auto train = testutil::make_interactions(3, 5, {{0, 0}, {0, 1}, {1, 2}});
    auto fa = testutil::make_features(
        'a', {{1, 0}, {0, 1}, {1, 1}, {0.5f, 0.25f}, {0.3f, 0.9f}});
    auto fs = testutil::make_features(
        's', {{2, 1, 0}, {0, 1, 2}, {1, 1, 1}, {0.2f, 0, 1}, {1, 0.5f, 0}});
    auto ui = build_view_graph(train, nullptr, View::UI);

    MagnetModel<double> m;
    m.cfg.embed_dim = 4;
    m.cfg.layers = 1;
    m.cfg.top_k = 2;
    m.cfg.dual_view = false;
    m.cfg.dropout = 0.0;
    m.train = &train;
    m.feat_a = &fa;
    m.feat_s = &fs;
    m.g_ui = &ui;
    m.init();
    auto ctx = build_scoring_context(m);

    std::vector<Edge> positives = {{0, 2}, {1, 4}, {2, 3}};  // user 2 has no history
    auto rep = compute_metrics(m, ctx, positives, {5});
    CHECK(rep.users_evaluated == 2);
    CHECK(rep.users_skipped == 1);

    auto empty = compute_metrics(m, ctx, {}, {5});
    CHECK(empty.users_evaluated == 0);
    CHECK(empty.recall[0] == 0.0);
}

TEST_CASE("metrics are invariant under increasing score transforms") {
    auto rig = testutil::make_rig<double>(testutil::small_config());
    const auto& m = rig->tr.model;
    auto ctx = build_scoring_context(m);
    auto score = [&](int32_t u, int32_t i) {
        TokenForward<double> tok;
        token_forward(m, ctx, u, i, 0, tok);
        return double(tok.route.yhat);
    };
    auto scaled = [&](int32_t u, int32_t i) { return 2.0 * score(u, i) + 3.0; };
    auto a = ref::metrics_bruteforce(rig->split.train, rig->split.test, m.train->num_items,
                                     {5, 20}, score);
    auto b = ref::metrics_bruteforce(rig->split.train, rig->split.test, m.train->num_items,
                                     {5, 20}, scaled);
    for (size_t c = 0; c < 2; ++c) {
        CHECK(a.recall[c] == b.recall[c]);
        CHECK(a.ndcg[c] == b.ndcg[c]);
    }
}
