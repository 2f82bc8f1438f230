#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "helpers.hpp"
#include "magnet/config.hpp"
#include "magnet/error.hpp"

using namespace magnet;

namespace {

void expect_config_error(RunConfig cfg) {
    try {
        cfg.validate();
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind == ErrorKind::config);
    }
}

}  // namespace

TEST_CASE("defaults form a valid configuration") {
    RunConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.embed_dim == 64);
    CHECK(cfg.top_k == 4);
    CHECK(cfg.lambda_r == 0.3);
    CHECK(cfg.stage_strategy == "lin-ent");
    CHECK(cfg.view == "dv");
    CHECK(cfg.dual_view());
    CHECK(!cfg.log_timing);
}

TEST_CASE("json loading keeps defaults and applies given keys") {
    auto cfg = config_from_json_text(R"({"embed_dim": 32, "view": "sv", "seed": 123})", "test");
    CHECK(cfg.embed_dim == 32);
    CHECK(cfg.view == "sv");
    CHECK(!cfg.dual_view());
    CHECK(cfg.seed == 123);
    CHECK(cfg.top_k == 4);  // untouched default
}

TEST_CASE("unknown keys and wrong value types are rejected") {
    try {
        config_from_json_text(R"({"embed_dims": 32})", "test");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind == ErrorKind::config);
        CHECK(std::string(e.what()).find("embed_dims") != std::string::npos);
    }
    CHECK_THROWS_AS(config_from_json_text(R"({"embed_dim": "big"})", "test"), Error);
    CHECK_THROWS_AS(config_from_json_text("[1,2]", "test"), Error);
    CHECK_THROWS_AS(config_from_json_text("{not json", "test"), Error);
}

TEST_CASE("a config survives a json round trip") {
    RunConfig cfg = testutil::small_config();
    cfg.view = "sv";
    cfg.lambda_ctr = 0.125;
    cfg.mean_bpr = true;
    auto back = config_from_json_text(cfg.to_json(), "roundtrip");
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.fingerprint() == cfg.fingerprint());
    CHECK(back.view == "sv");
    CHECK(back.lambda_ctr == 0.125);
    CHECK(back.mean_bpr == true);
}

TEST_CASE("the fingerprint is stable for equal configs and sensitive to changes") {
    RunConfig a, b;
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.fingerprint().size() == 16);
    b.seed = 8;
    CHECK(a.fingerprint() != b.fingerprint());
    b = a;
    b.lambda_r = 0.31;
    CHECK(a.fingerprint() != b.fingerprint());
}

TEST_CASE("command-line overrides parse every value kind") {
    RunConfig cfg;
    apply_override(cfg, "embed_dim=48");
    CHECK(cfg.embed_dim == 48);
    apply_override(cfg, "dropout=0.25");
    CHECK(cfg.dropout == 0.25);
    apply_override(cfg, "mean_bpr=true");
    CHECK(cfg.mean_bpr);
    apply_override(cfg, "mean_bpr=0");
    CHECK(!cfg.mean_bpr);
    apply_override(cfg, "view=sv");
    CHECK(cfg.view == "sv");
    apply_override(cfg, "seed=18446744073709551615");
    CHECK(cfg.seed == 18446744073709551615ull);
    apply_override(cfg, "learning_rate=1e-4");
    CHECK(cfg.learning_rate == 1e-4);
}

TEST_CASE("malformed overrides are rejected") {
    RunConfig cfg;
    CHECK_THROWS_AS(apply_override(cfg, "embed_dim"), Error);
    CHECK_THROWS_AS(apply_override(cfg, "=5"), Error);
    CHECK_THROWS_AS(apply_override(cfg, "embed_dim=12abc"), Error);
    CHECK_THROWS_AS(apply_override(cfg, "dropout=0.5x"), Error);
    CHECK_THROWS_AS(apply_override(cfg, "mean_bpr=yes"), Error);
    CHECK_THROWS_AS(apply_override(cfg, "no_such_key=1"), Error);
}

TEST_CASE("validation rejects each out-of-range field") {
    RunConfig ok;

    auto broken = [&](auto&& mutate) {
        RunConfig c = ok;
        mutate(c);
        return c;
    };
    expect_config_error(broken([](RunConfig& c) { c.seed = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.min_interactions = -1; }));
    expect_config_error(broken([](RunConfig& c) { c.knn_k = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.expand_r = -1; }));
    expect_config_error(broken([](RunConfig& c) { c.embed_dim = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.layers = -1; }));
    expect_config_error(broken([](RunConfig& c) { c.fanout = -2; }));
    expect_config_error(broken([](RunConfig& c) { c.view = "both"; }));
    expect_config_error(broken([](RunConfig& c) { c.expert_split = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.top_k = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.top_k = 10; }));
    expect_config_error(broken([](RunConfig& c) { c.alpha = 1.5; }));
    expect_config_error(broken([](RunConfig& c) { c.epsilon = 0.4; }));
    expect_config_error(broken([](RunConfig& c) { c.stage_strategy = "linear"; }));
    expect_config_error(broken([](RunConfig& c) { c.entropy_threshold = 1.5; }));
    expect_config_error(broken([](RunConfig& c) { c.trigger_window = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.lambda_r = -0.1; }));
    expect_config_error(broken([](RunConfig& c) { c.lambda_ctr = -1; }));
    expect_config_error(broken([](RunConfig& c) { c.tau = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.weight_decay = -1e-5; }));
    expect_config_error(broken([](RunConfig& c) { c.batch_size = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.neg_ratio = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.learning_rate = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.max_epochs = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.patience = 0; }));
    expect_config_error(broken([](RunConfig& c) { c.dropout = 1.0; }));
    expect_config_error(broken([](RunConfig& c) { c.precision = "f16"; }));
    expect_config_error(broken([](RunConfig& c) { c.router_init = "ones"; }));
    expect_config_error(broken([](RunConfig& c) {
        c.coverage_only = true;
        c.confidence_only = true;
    }));
    expect_config_error(broken([](RunConfig& c) { c.ratio_train = 0.0; }));
    expect_config_error(broken([](RunConfig& c) { c.ratio_valid = 0.5; }));
    expect_config_error(broken([](RunConfig& c) {
        c.no_moe = true;
        c.free_templates = true;
    }));

    // boundary values that must pass
    RunConfig edge;
    edge.top_k = 9;
    CHECK_NOTHROW(edge.validate());
    edge = RunConfig{};
    edge.top_k = 18;
    edge.expert_split = 2;
    CHECK_NOTHROW(edge.validate());
    edge = RunConfig{};
    edge.no_moe = true;
    edge.top_k = 99;  // ignored without the expert pool
    CHECK_NOTHROW(edge.validate());
}

TEST_CASE("the derived model config mirrors the run config") {
    RunConfig cfg = testutil::small_config();
    cfg.view = "sv";
    cfg.router_init = "zero";
    cfg.free_templates = true;
    auto mc = cfg.model_config();
    CHECK(mc.embed_dim == cfg.embed_dim);
    CHECK(mc.layers == cfg.layers);
    CHECK(mc.top_k == cfg.top_k);
    CHECK(!mc.dual_view);
    CHECK(mc.zero_router_init);
    CHECK(mc.free_templates);
    CHECK(mc.tpl.alpha == cfg.alpha);
    CHECK(mc.seed == cfg.seed);
}

TEST_CASE("the derived schedule config applies the ablation toggles") {
    RunConfig cfg;
    auto sc = cfg.schedule_config();
    CHECK(sc.strategy == StageStrategy::LinEnt);
    CHECK(sc.threshold == 0.9);
    CHECK(sc.window == 3);
    CHECK(sc.lambda_r == 0.3);
    CHECK(sc.pinned_stage == 0);

    cfg.stage_strategy = "quad-ent";
    CHECK(cfg.schedule_config().strategy == StageStrategy::QuadEnt);
    cfg.stage_strategy = "rev-ent";
    CHECK(cfg.schedule_config().strategy == StageStrategy::RevEnt);
    cfg.stage_strategy = "const";
    CHECK(cfg.schedule_config().strategy == StageStrategy::Const);

    cfg = RunConfig{};
    cfg.fixed_step_switch = true;
    cfg.max_epochs = 9;
    sc = cfg.schedule_config();
    CHECK(sc.strategy == StageStrategy::FixedStep);
    CHECK(sc.fixed_switch_epoch == 5);  // switches strictly after the midpoint

    cfg = RunConfig{};
    cfg.no_routing_reg = true;
    CHECK(cfg.schedule_config().lambda_r == 0.0);

    cfg = RunConfig{};
    cfg.coverage_only = true;
    CHECK(cfg.schedule_config().pinned_stage == 1);
    cfg = RunConfig{};
    cfg.confidence_only = true;
    CHECK(cfg.schedule_config().pinned_stage == 2);
}
