#include "magnet/config.hpp"

#include <cstdlib>

#include <json.hpp>

#include "magnet/error.hpp"
#include "magnet/graph.hpp"
#include "magnet/io.hpp"

namespace magnet {

namespace {

enum class Kind { I, D, B, S, U64 };

struct Binding {
    const char* key;
    Kind kind;
    size_t offset;
};

// One table drives JSON load, JSON dump, and --set overrides.
const std::vector<Binding>& bindings() {
#define FIELD(name, kind) {#name, Kind::kind, offsetof(RunConfig, name)}
    static const std::vector<Binding> b = {
        FIELD(interactions, S),    FIELD(features_a, S),      FIELD(features_s, S),
        FIELD(min_interactions, I), FIELD(ratio_train, D),    FIELD(ratio_valid, D),
        FIELD(ratio_test, D),      FIELD(seed, U64),          FIELD(synth_users, I),
        FIELD(synth_items, I),     FIELD(synth_blocks, I),    FIELD(synth_dim_a, I),
        FIELD(synth_dim_s, I),     FIELD(synth_density, D),   FIELD(synth_noise, D),
        FIELD(knn_k, I),           FIELD(expand_r, I),        FIELD(embed_dim, I),
        FIELD(layers, I),          FIELD(fanout, I),          FIELD(view, S),
        FIELD(top_k, I),           FIELD(expert_split, I),    FIELD(alpha, D),
        FIELD(beta, D),            FIELD(delta, D),           FIELD(epsilon, D),
        FIELD(stage_strategy, S),  FIELD(entropy_threshold, D), FIELD(trigger_window, I),
        FIELD(lambda_r, D),        FIELD(lambda_ctr, D),      FIELD(tau, D),
        FIELD(weight_decay, D),    FIELD(mean_bpr, B),        FIELD(batch_size, I),
        FIELD(neg_ratio, I),       FIELD(learning_rate, D),   FIELD(max_epochs, I),
        FIELD(patience, I),        FIELD(dropout, D),         FIELD(precision, S),
        FIELD(router_init, S),     FIELD(no_moe, B),          FIELD(free_templates, B),
        FIELD(fixed_step_switch, B), FIELD(coverage_only, B), FIELD(confidence_only, B),
        FIELD(no_view_ctr, B),     FIELD(no_routing_reg, B),  FIELD(log_timing, B),
    };
#undef FIELD
    return b;
}

void* field_ptr(RunConfig& c, const Binding& b) {
    return reinterpret_cast<char*>(&c) + b.offset;
}
const void* field_ptr(const RunConfig& c, const Binding& b) {
    return reinterpret_cast<const char*>(&c) + b.offset;
}

}  // namespace

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::config, msg); };
    if (min_interactions < 0) fail("min_interactions must be >= 0");
    if (seed == 0) fail("seed must be nonzero");
    if (knn_k < 1) fail("knn_k must be >= 1");
    if (expand_r < 0) fail("expand_r must be >= 0");
    if (embed_dim < 1) fail("embed_dim must be >= 1");
    if (layers < 0) fail("layers must be >= 0");
    if (fanout < 0) fail("fanout must be >= 0");
    if (view != "dv" && view != "sv") fail("view must be dv or sv");
    if (expert_split < 1) fail("expert_split must be >= 1");
    if (!no_moe && (top_k < 1 || top_k > 9 * expert_split))
        fail("top_k must be in [1, experts]");
    TemplateParams tpl{alpha, beta, delta, epsilon};
    tpl.validate();
    if (stage_strategy != "lin-ent" && stage_strategy != "quad-ent" &&
        stage_strategy != "const" && stage_strategy != "rev-ent" &&
        stage_strategy != "fixed-step")
        fail("stage_strategy must be one of lin-ent, quad-ent, const, rev-ent, fixed-step");
    if (entropy_threshold < 0 || entropy_threshold > 1)
        fail("entropy_threshold must be in [0,1]");
    if (trigger_window < 1) fail("trigger_window must be >= 1");
    if (lambda_r < 0) fail("lambda_r must be >= 0");
    if (lambda_ctr < 0) fail("lambda_ctr must be >= 0");
    if (tau <= 0) fail("tau must be positive");
    if (weight_decay < 0) fail("weight_decay must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (neg_ratio < 1) fail("neg_ratio must be >= 1");
    if (learning_rate <= 0) fail("learning_rate must be positive");
    if (max_epochs < 1) fail("max_epochs must be >= 1");
    if (patience < 1) fail("patience must be >= 1");
    if (dropout < 0 || dropout >= 1) fail("dropout must be in [0,1)");
    if (precision != "f32" && precision != "f64") fail("precision must be f32 or f64");
    if (router_init != "glorot" && router_init != "zero")
        fail("router_init must be glorot or zero");
    if (coverage_only && confidence_only)
        fail("coverage_only and confidence_only are mutually exclusive");
    if (ratio_train <= 0) fail("ratio_train must be positive");
    double rsum = ratio_train + ratio_valid + ratio_test;
    if (std::abs(rsum - 1.0) > 1e-9) fail("split ratios must sum to 1");
    if (no_moe && free_templates) fail("free_templates requires the expert pool");
}

ModelConfig RunConfig::model_config() const {
    ModelConfig mc;
    mc.embed_dim = embed_dim;
    mc.layers = layers;
    mc.top_k = top_k;
    mc.expert_split = expert_split;
    mc.tpl = TemplateParams{alpha, beta, delta, epsilon};
    mc.dropout = dropout;
    mc.fanout = fanout;
    mc.dual_view = dual_view();
    mc.no_moe = no_moe;
    mc.free_templates = free_templates;
    mc.zero_router_init = router_init == "zero";
    mc.seed = seed;
    return mc;
}

ScheduleConfig RunConfig::schedule_config() const {
    ScheduleConfig sc;
    std::string strat = fixed_step_switch ? "fixed-step" : stage_strategy;
    if (strat == "lin-ent") sc.strategy = StageStrategy::LinEnt;
    else if (strat == "quad-ent") sc.strategy = StageStrategy::QuadEnt;
    else if (strat == "const") sc.strategy = StageStrategy::Const;
    else if (strat == "rev-ent") sc.strategy = StageStrategy::RevEnt;
    else sc.strategy = StageStrategy::FixedStep;
    sc.threshold = entropy_threshold;
    sc.window = trigger_window;
    sc.lambda_r = no_routing_reg ? 0.0 : lambda_r;
    if (coverage_only) sc.pinned_stage = 1;
    if (confidence_only) sc.pinned_stage = 2;
    sc.fixed_switch_epoch = (max_epochs + 1) / 2;  // stage 2 strictly after ceil(T/2)
    return sc;
}

std::string RunConfig::to_json() const {
    nlohmann::json j;
    for (const auto& b : bindings()) {
        const void* p = field_ptr(*this, b);
        switch (b.kind) {
            case Kind::I: j[b.key] = *static_cast<const int*>(p); break;
            case Kind::D: j[b.key] = *static_cast<const double*>(p); break;
            case Kind::B: j[b.key] = *static_cast<const bool*>(p); break;
            case Kind::S: j[b.key] = *static_cast<const std::string*>(p); break;
            case Kind::U64: j[b.key] = *static_cast<const uint64_t*>(p); break;
        }
    }
    return j.dump(2) + "\n";
}

std::string RunConfig::fingerprint() const {
    std::string s = to_json();
    uint64_t h = fnv1a64(s.data(), s.size());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

RunConfig config_from_json_text(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw Error(ErrorKind::config, origin + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::config, origin + ": config must be a JSON object");
    RunConfig cfg;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const Binding* found = nullptr;
        for (const auto& b : bindings())
            if (it.key() == b.key) {
                found = &b;
                break;
            }
        if (!found)
            throw Error(ErrorKind::config, origin + ": unknown config key '" + it.key() + "'");
        void* p = field_ptr(cfg, *found);
        try {
            switch (found->kind) {
                case Kind::I: *static_cast<int*>(p) = it.value().get<int>(); break;
                case Kind::D: *static_cast<double*>(p) = it.value().get<double>(); break;
                case Kind::B: *static_cast<bool*>(p) = it.value().get<bool>(); break;
                case Kind::S: *static_cast<std::string*>(p) = it.value().get<std::string>(); break;
                case Kind::U64: *static_cast<uint64_t*>(p) = it.value().get<uint64_t>(); break;
            }
        } catch (const std::exception&) {
            throw Error(ErrorKind::config,
                        origin + ": bad value type for config key '" + it.key() + "'");
        }
    }
    return cfg;
}

RunConfig config_from_file(const std::string& path) {
    return config_from_json_text(read_text_file(path), path);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(ErrorKind::config, "--set expects key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    std::string val = assignment.substr(eq + 1);
    for (const auto& b : bindings()) {
        if (key != b.key) continue;
        void* p = field_ptr(cfg, b);
        try {
            size_t used = 0;
            switch (b.kind) {
                case Kind::I:
                    *static_cast<int*>(p) = std::stoi(val, &used);
                    if (used != val.size()) throw std::invalid_argument(val);
                    break;
                case Kind::D:
                    *static_cast<double*>(p) = std::stod(val, &used);
                    if (used != val.size()) throw std::invalid_argument(val);
                    break;
                case Kind::B:
                    if (val == "true" || val == "1") *static_cast<bool*>(p) = true;
                    else if (val == "false" || val == "0") *static_cast<bool*>(p) = false;
                    else throw std::invalid_argument(val);
                    break;
                case Kind::S: *static_cast<std::string*>(p) = val; break;
                case Kind::U64:
                    *static_cast<uint64_t*>(p) = std::stoull(val, &used);
                    if (used != val.size()) throw std::invalid_argument(val);
                    break;
            }
        } catch (const std::exception&) {
            throw Error(ErrorKind::config, "bad value for --set " + key + "=" + val);
        }
        return;
    }
    throw Error(ErrorKind::config, "unknown config key '" + key + "'");
}

}  // namespace magnet
