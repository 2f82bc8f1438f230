// Command-line front end: dataset synthesis, graph preparation, training,
// evaluation, routing diagnostics, and gradient checking, all driven by one
// flat JSON configuration with --set overrides.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "magnet/checkpoint.hpp"
#include "magnet/config.hpp"
#include "magnet/data.hpp"
#include "magnet/diagnostics.hpp"
#include "magnet/eval.hpp"
#include "magnet/gradcheck.hpp"
#include "magnet/graph.hpp"
#include "magnet/io.hpp"
#include "magnet/parallel.hpp"
#include "magnet/ref.hpp"
#include "magnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace magnet;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "out";
    std::vector<std::string> sets;
    std::string interactions, features_a, features_s;
    int knn_k = -1, expand_r = -1;
    // ablation toggles
    bool no_moe = false, free_templates = false, fixed_step_switch = false;
    bool coverage_only = false, confidence_only = false;
    bool no_view_ctr = false, no_routing_reg = false, single_view = false;
};

void add_config_options(CLI::App* cmd, CommonOpts& o, bool with_data, bool with_ablation) {
    cmd->add_option("--config", o.config_path, "JSON config file");
    cmd->add_option("--out", o.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--set", o.sets, "override one config key, key=value (repeatable)");
    if (with_data) {
        cmd->add_option("--interactions", o.interactions, "user<TAB>item interaction file");
        cmd->add_option("--features-a", o.features_a, "modality-A feature blob");
        cmd->add_option("--features-s", o.features_s, "modality-S feature blob");
        cmd->add_option("--knn-k", o.knn_k, "neighbors per item for augmentation");
        cmd->add_option("--expand-r", o.expand_r, "induced candidate edges per user");
    }
    if (with_ablation) {
        cmd->add_flag("--no-moe", o.no_moe, "single fusion head instead of the expert pool");
        cmd->add_flag("--free-templates", o.free_templates, "make template weights trainable");
        cmd->add_flag("--fixed-step-switch", o.fixed_step_switch,
                      "switch stages at half the epoch budget instead of by entropy");
        cmd->add_flag("--coverage-only", o.coverage_only, "pin stage 1 (coverage regularizer)");
        cmd->add_flag("--confidence-only", o.confidence_only,
                      "pin stage 2 (confidence regularizer)");
        cmd->add_flag("--no-view-ctr", o.no_view_ctr, "disable the view-alignment loss");
        cmd->add_flag("--no-routing-reg", o.no_routing_reg, "disable both routing regularizers");
        cmd->add_flag("--single-view", o.single_view, "encode the interaction graph only");
    }
}

RunConfig make_config(const CommonOpts& o) {
    RunConfig cfg;
    if (!o.config_path.empty()) cfg = config_from_file(o.config_path);
    if (!o.interactions.empty()) cfg.interactions = o.interactions;
    if (!o.features_a.empty()) cfg.features_a = o.features_a;
    if (!o.features_s.empty()) cfg.features_s = o.features_s;
    if (o.knn_k >= 0) cfg.knn_k = o.knn_k;
    if (o.expand_r >= 0) cfg.expand_r = o.expand_r;
    if (o.no_moe) cfg.no_moe = true;
    if (o.free_templates) cfg.free_templates = true;
    if (o.fixed_step_switch) cfg.fixed_step_switch = true;
    if (o.coverage_only) cfg.coverage_only = true;
    if (o.confidence_only) cfg.confidence_only = true;
    if (o.no_view_ctr) cfg.no_view_ctr = true;
    if (o.no_routing_reg) cfg.no_routing_reg = true;
    if (o.single_view) cfg.view = "sv";
    for (const auto& s : o.sets) apply_override(cfg, s);
    cfg.validate();
    return cfg;
}

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_text_file_atomic((fs::path(out_dir) / "config.resolved.json").string(), cfg.to_json());
}

// ---------------------------------------------------------------------------
// data pipeline shared by train / evaluate / diagnose / gradcheck

struct Pipeline {
    LoadedInteractions loaded;
    SplitBundle split;
    FeatureMatrix fa, fs;
    InducedEdges induced;
    ViewGraph ui, uig;
    bool has_uig = false;
};

Pipeline build_pipeline(const RunConfig& cfg, const std::string& cache_dir) {
    if (cfg.interactions.empty())
        throw Error(ErrorKind::config, "interactions path is required (config key 'interactions')");
    if (cfg.features_a.empty() || cfg.features_s.empty())
        throw Error(ErrorKind::config, "both feature paths are required");

    Pipeline p;
    p.loaded = load_interactions(cfg.interactions, cfg.min_interactions);
    p.fa = load_features(cfg.features_a, 'A', p.loaded.data.num_items);
    p.fs = load_features(cfg.features_s, 'S', p.loaded.data.num_items);
    p.split = split_interactions(p.loaded.data,
                                 {cfg.ratio_train, cfg.ratio_valid, cfg.ratio_test}, cfg.seed);
    p.ui = build_view_graph(p.split.train, nullptr, View::UI);

    if (cfg.dual_view()) {
        uint64_t fpa = fingerprint_features(p.fa);
        uint64_t fps = fingerprint_features(p.fs);
        uint64_t fpi = fingerprint_interactions(p.split.train);
        NeighborIndex ka, ks;
        bool use_cache = !cache_dir.empty();
        fs::path knn_a_p, knn_s_p, ind_p;
        if (use_cache) {
            fs::create_directories(cache_dir);
            knn_a_p = fs::path(cache_dir) / "knn_a.bin";
            knn_s_p = fs::path(cache_dir) / "knn_s.bin";
            ind_p = fs::path(cache_dir) / "induced.bin";
        }
        if (use_cache && neighbor_index_cache_valid(knn_a_p.string(), cfg.knn_k, fpa)) {
            ka = load_neighbor_index(knn_a_p.string(), fpa);
        } else {
            ka = build_neighbor_index(p.fa, cfg.knn_k);
            if (use_cache) save_neighbor_index(knn_a_p.string(), ka, fpa);
        }
        if (use_cache && neighbor_index_cache_valid(knn_s_p.string(), cfg.knn_k, fps)) {
            ks = load_neighbor_index(knn_s_p.string(), fps);
        } else {
            ks = build_neighbor_index(p.fs, cfg.knn_k);
            if (use_cache) save_neighbor_index(knn_s_p.string(), ks, fps);
        }
        if (use_cache && induced_cache_valid(ind_p.string(), cfg.knn_k, cfg.expand_r, fpi, fpa, fps)) {
            p.induced = load_induced_edges(ind_p.string());
        } else {
            p.induced = expand_candidates(p.split.train, ka, ks, cfg.expand_r);
            if (use_cache) save_induced_edges(ind_p.string(), p.induced, cfg.knn_k, fpi, fpa, fps);
        }
        p.uig = build_view_graph(p.split.train, &p.induced, View::UIG);
        p.has_uig = true;
    }
    return p;
}

json dataset_summary(const Pipeline& p) {
    return json{{"users", p.loaded.data.num_users},
                {"items", p.loaded.data.num_items},
                {"edges", p.loaded.data.edges.size()},
                {"raw_lines", p.loaded.raw_edges},
                {"dropped_users", p.loaded.dropped_users},
                {"train_edges", p.split.train.edges.size()},
                {"valid_pairs", p.split.valid.size()},
                {"test_pairs", p.split.test.size()},
                {"forced_all_train", p.split.forced_all_train},
                {"induced_edges", p.has_uig ? p.induced.total_edges() : 0}};
}

json metrics_json(const MetricReport& r) {
    json out;
    for (size_t c = 0; c < r.cutoffs.size(); ++c) {
        out["recall" + std::to_string(r.cutoffs[c])] = r.recall[c];
        out["ndcg" + std::to_string(r.cutoffs[c])] = r.ndcg[c];
    }
    out["users_evaluated"] = r.users_evaluated;
    out["users_skipped"] = r.users_skipped;
    return out;
}

void write_per_user_csv(const std::string& path, const MetricReport& r) {
    std::string out = "user";
    for (int c : r.cutoffs) out += ",recall" + std::to_string(c);
    for (int c : r.cutoffs) out += ",ndcg" + std::to_string(c);
    out += "\n";
    char buf[64];
    for (const auto& pu : r.per_user) {
        out += std::to_string(pu.user);
        for (double v : pu.recall) {
            std::snprintf(buf, sizeof buf, ",%.10g", v);
            out += buf;
        }
        for (double v : pu.ndcg) {
            std::snprintf(buf, sizeof buf, ",%.10g", v);
            out += buf;
        }
        out += "\n";
    }
    write_text_file_atomic(path, out);
}

json profile_json(const RoutingProfile& p) {
    return json{{"experts", p.experts},
                {"pi_bar", p.pi_bar},
                {"H", p.entropy},
                {"H_norm", p.h_norm},
                {"N_eff", p.n_eff},
                {"HHI", p.hhi},
                {"Div", p.div},
                {"winner_share", p.winner_share},
                {"concentration", p.concentration},
                {"mass_anchor", {p.mass_anchor[0], p.mass_anchor[1], p.mass_anchor[2]}},
                {"mass_family", {p.mass_family[0], p.mass_family[1], p.mass_family[2]}},
                {"mass_triplet", {p.mass_triplet[0], p.mass_triplet[1], p.mass_triplet[2]}},
                {"content_mass", p.content_mass}};
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const CommonOpts& o) {
    RunConfig cfg = make_config(o);
    SyntheticSpec spec;
    spec.num_users = cfg.synth_users;
    spec.num_items = cfg.synth_items;
    spec.num_blocks = cfg.synth_blocks;
    spec.dim_a = cfg.synth_dim_a;
    spec.dim_s = cfg.synth_dim_s;
    spec.density = cfg.synth_density;
    spec.noise = cfg.synth_noise;
    spec.seed = cfg.seed;

    SyntheticData sd = generate_synthetic(spec);
    ExportBundle eb = export_remap(sd);

    fs::create_directories(o.out_dir);
    fs::path dir(o.out_dir);
    write_interactions_tsv((dir / "interactions.tsv").string(), eb.interactions);
    write_features((dir / "features_a.mgf").string(), eb.feat_a);
    write_features((dir / "features_s.mgf").string(), eb.feat_s);

    int64_t within = 0;
    for (const auto& [u, i0] : sd.interactions.edges)
        if (sd.user_block[u] == sd.item_block[i0]) ++within;
    json meta{{"users", eb.interactions.num_users},
              {"items_generated", spec.num_items},
              {"items_with_interactions", eb.interactions.num_items},
              {"edges", eb.interactions.edges.size()},
              {"within_block_edges", within},
              {"blocks", spec.num_blocks},
              {"dim_a", spec.dim_a},
              {"dim_s", spec.dim_s},
              {"density", spec.density},
              {"noise", spec.noise},
              {"seed", spec.seed}};
    write_text_file_atomic((dir / "meta.json").string(), meta.dump(2) + "\n");

    cfg.interactions = (dir / "interactions.tsv").string();
    cfg.features_a = (dir / "features_a.mgf").string();
    cfg.features_s = (dir / "features_s.mgf").string();
    write_resolved_config(cfg, o.out_dir);

    std::cout << "synth: " << eb.interactions.num_users << " users, "
              << eb.interactions.num_items << " items, " << eb.interactions.edges.size()
              << " edges -> " << o.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// prepare

int cmd_prepare(const CommonOpts& o) {
    RunConfig cfg = make_config(o);
    write_resolved_config(cfg, o.out_dir);
    Pipeline p = build_pipeline(cfg, (fs::path(o.out_dir) / "cache").string());
    json rep{{"dataset", dataset_summary(p)},
             {"knn_k", cfg.knn_k},
             {"expand_r", cfg.expand_r},
             {"config_fingerprint", cfg.fingerprint()},
             {"cache_dir", (fs::path(o.out_dir) / "cache").string()}};
    write_text_file_atomic((fs::path(o.out_dir) / "report.json").string(), rep.dump(2) + "\n");
    std::cout << "prepare: " << p.split.train.edges.size() << " train edges, "
              << (p.has_uig ? p.induced.total_edges() : 0) << " induced edges cached under "
              << o.out_dir << "/cache\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

template <class T>
int run_train(const RunConfig& cfg, const CommonOpts& o, bool resume, bool per_user) {
    Pipeline p = build_pipeline(cfg, (fs::path(o.out_dir) / "cache").string());

    Trainer<T> tr;
    tr.cfg = cfg;
    tr.setup(p.split, p.fa, p.fs, p.ui, p.has_uig ? &p.uig : nullptr);

    fs::path dir(o.out_dir);
    fs::path ckpt_dir = dir / "checkpoint";
    bool resumed = false;
    if (resume && fs::exists(ckpt_dir / "manifest.json")) {
        load_checkpoint(ckpt_dir.string(), tr);
        resumed = true;
    }

    std::ofstream metrics(dir / "metrics.jsonl",
                          resumed ? std::ios::app : std::ios::trunc);
    std::ofstream schedule(dir / "schedule.jsonl",
                           resumed ? std::ios::app : std::ios::trunc);
    if (!metrics || !schedule)
        throw Error(ErrorKind::io, "cannot open log files under " + o.out_dir);

    int64_t switch_step = -1;
    tr.on_step = [&](const StepRecord& r) {
        if (r.stage == 2 && switch_step < 0) switch_step = r.step;
        json line{{"step", r.step},
                  {"H", r.entropy},
                  {"H_norm", r.h_norm},
                  {"N_eff", r.n_eff},
                  {"stage", r.stage},
                  {"n", r.counter},
                  {"lambda_cov", r.lambda_cov},
                  {"lambda_conf", r.lambda_conf},
                  {"loss_cov", r.lambda_cov * r.loss.cov},
                  {"loss_conf", r.lambda_conf * r.loss.conf},
                  {"conf_entropy", r.conf_entropy},
                  {"loss_total", r.loss.total}};
        schedule << line.dump() << "\n";
    };
    tr.on_epoch = [&](const EpochRecord& r) {
        json line{{"epoch", r.epoch},
                  {"loss_bpr", r.mean_loss.bpr},
                  {"loss_ctr", r.mean_loss.ctr},
                  {"loss_cov", r.mean_loss.cov},
                  {"loss_conf", r.mean_loss.conf},
                  {"loss_l2", r.mean_loss.l2},
                  {"loss_total", r.mean_loss.total},
                  {"H_norm", r.h_norm_mean},
                  {"stage", r.stage},
                  {"val_recall20", r.val_recall20},
                  {"val_ndcg20", r.val_ndcg20},
                  {"seconds", r.seconds}};
        metrics << line.dump() << "\n";
        std::cout << "epoch " << r.epoch << " loss " << r.mean_loss.total << " stage " << r.stage
                  << " val_ndcg20 " << r.val_ndcg20 << "\n";
    };

    FitResult res = tr.fit();
    metrics.flush();
    schedule.flush();
    save_checkpoint(ckpt_dir.string(), tr);

    MetricReport val = tr.evaluate_split(p.split.valid, false);
    MetricReport test = tr.evaluate_split(p.split.test, per_user);
    if (per_user) write_per_user_csv((dir / "per_user.csv").string(), test);

    json rep{{"dataset", dataset_summary(p)},
             {"config_fingerprint", cfg.fingerprint()},
             {"epochs_run", res.epochs_run},
             {"best_epoch", res.best_epoch},
             {"switch_step", switch_step},
             {"valid", metrics_json(val)},
             {"test", metrics_json(test)}};
    if (!cfg.no_moe && !p.split.valid.empty()) {
        ScoringContext<T> ctx = build_scoring_context(tr.model, false, 0);
        auto pi_bar = aggregate_routing(tr.model, ctx, p.split.valid);
        RoutingProfile prof = routing_diagnostics(pi_bar, ctx.triplets);
        write_text_file_atomic((dir / "routing.csv").string(), routing_profile_csv(prof));
        rep["routing"] = profile_json(prof);
    }
    write_text_file_atomic((dir / "report.json").string(), rep.dump(2) + "\n");

    std::cout << "train: best epoch " << res.best_epoch << " val_ndcg20 " << res.best_ndcg
              << " test_recall20 " << (test.recall.size() > 1 ? test.recall[1] : 0.0) << "\n";
    return 0;
}

int cmd_train(const CommonOpts& o, bool resume, bool per_user) {
    RunConfig cfg = make_config(o);
    write_resolved_config(cfg, o.out_dir);
    if (cfg.precision == "f64") return run_train<double>(cfg, o, resume, per_user);
    return run_train<float>(cfg, o, resume, per_user);
}

// ---------------------------------------------------------------------------
// evaluate / diagnose (config comes from the checkpoint manifest)

RunConfig config_from_checkpoint(const std::string& ckpt_dir) {
    json man = read_checkpoint_manifest(ckpt_dir);
    return config_from_json_text(man.at("config").dump(), ckpt_dir + "/manifest.json");
}

template <class T>
int run_evaluate(const RunConfig& cfg, const std::string& ckpt_dir, const CommonOpts& o,
                 bool per_user) {
    Pipeline p = build_pipeline(cfg, (fs::path(o.out_dir) / "cache").string());
    Trainer<T> tr;
    tr.cfg = cfg;
    tr.setup(p.split, p.fa, p.fs, p.ui, p.has_uig ? &p.uig : nullptr);
    load_checkpoint(ckpt_dir, tr);

    MetricReport val = tr.evaluate_split(p.split.valid, false);
    MetricReport test = tr.evaluate_split(p.split.test, per_user);
    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    if (per_user) write_per_user_csv((dir / "per_user.csv").string(), test);
    json rep{{"dataset", dataset_summary(p)},
             {"config_fingerprint", cfg.fingerprint()},
             {"checkpoint", ckpt_dir},
             {"best_epoch", tr.best_epoch},
             {"valid", metrics_json(val)},
             {"test", metrics_json(test)}};
    write_text_file_atomic((dir / "report.json").string(), rep.dump(2) + "\n");
    std::cout << "evaluate: test"
              << " recall20 " << (test.recall.size() > 1 ? test.recall[1] : 0.0) << " ndcg20 "
              << (test.ndcg.size() > 1 ? test.ndcg[1] : 0.0) << "\n";
    return 0;
}

template <class T>
int run_diagnose(const RunConfig& cfg, const std::string& ckpt_dir, const CommonOpts& o,
                 const std::string& split_name) {
    Pipeline p = build_pipeline(cfg, (fs::path(o.out_dir) / "cache").string());
    Trainer<T> tr;
    tr.cfg = cfg;
    tr.setup(p.split, p.fa, p.fs, p.ui, p.has_uig ? &p.uig : nullptr);
    load_checkpoint(ckpt_dir, tr);

    const std::vector<Edge>* pairs = &p.split.valid;
    if (split_name == "test") pairs = &p.split.test;
    else if (split_name == "train") pairs = &p.split.train.edges;
    else if (split_name != "valid")
        throw Error(ErrorKind::config, "split must be one of train, valid, test");

    ScoringContext<T> ctx = build_scoring_context(tr.model, false, 0);
    auto pi_bar = aggregate_routing(tr.model, ctx, *pairs);
    RoutingProfile prof = routing_diagnostics(pi_bar, ctx.triplets);

    fs::path dir(o.out_dir);
    fs::create_directories(dir);
    write_text_file_atomic((dir / "routing.csv").string(), routing_profile_csv(prof));
    json rep{{"config_fingerprint", cfg.fingerprint()},
             {"checkpoint", ckpt_dir},
             {"split", split_name},
             {"pairs", pairs->size()},
             {"routing", profile_json(prof)}};
    write_text_file_atomic((dir / "report.json").string(), rep.dump(2) + "\n");
    std::cout << routing_profile_csv(prof);
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

RunConfig scope_config(RunConfig base, const std::string& scope) {
    base.precision = "f64";
    base.dropout = 0.0;
    base.fanout = 0;
    if (scope == "bpr") {
        base.no_routing_reg = true;
        base.no_view_ctr = true;
        base.weight_decay = 0.0;
    } else if (scope == "stage1") {
        base.coverage_only = true;
        base.confidence_only = false;
        base.stage_strategy = "const";  // keeps lambda_cov = lambda_r exactly
    } else if (scope == "stage2") {
        base.confidence_only = true;
        base.coverage_only = false;
        base.stage_strategy = "const";
    } else {
        throw Error(ErrorKind::config, "unknown gradcheck scope: " + scope);
    }
    return base;
}

int cmd_gradcheck(const CommonOpts& o, const std::string& scope_arg, int batch_cap,
                  const std::string& corrupt_tensor, int64_t corrupt_coord) {
    RunConfig base = make_config(o);
    std::vector<std::string> scopes;
    if (scope_arg == "all") scopes = {"bpr", "stage1", "stage2"};
    else scopes = {scope_arg};

    fs::create_directories(o.out_dir);
    json rep;
    rep["h"] = 1e-4;
    rep["tolerance"] = 1e-4;
    bool all_pass = true;
    for (const auto& scope : scopes) {
        RunConfig cfg = scope_config(base, scope);
        cfg.validate();
        Pipeline p = build_pipeline(cfg, "");
        Trainer<double> tr;
        tr.cfg = cfg;
        tr.setup(p.split, p.fa, p.fs, p.ui, p.has_uig ? &p.uig : nullptr);

        size_t take = std::min<size_t>(p.split.train.edges.size(), size_t(batch_cap));
        std::vector<Edge> batch(p.split.train.edges.begin(),
                                p.split.train.edges.begin() + ptrdiff_t(take));
        GradCheckReport r = gradient_check(tr, batch, 1e-4, 1e-4, 10000, corrupt_tensor,
                                           corrupt_coord);
        json groups = json::array();
        for (const auto& g : r.groups) {
            groups.push_back({{"name", g.name},
                              {"checked", g.checked},
                              {"max_rel_err", g.max_rel_err},
                              {"max_abs_err", g.max_abs_err}});
            std::printf("[%s] %-16s max_rel %.3e  (checked %lld)\n", scope.c_str(),
                        g.name.c_str(), g.max_rel_err, (long long)g.checked);
        }
        rep["scopes"][scope] = {{"pass", r.pass},
                                {"max_rel_err", r.max_rel_err},
                                {"coords_checked", r.coords_checked},
                                {"coords_total", r.coords_total},
                                {"min_topk_margin", r.min_topk_margin},
                                {"groups", groups}};
        std::printf("[%s] %s max_rel %.3e (tol 1e-4, topk margin %.3g)\n", scope.c_str(),
                    r.pass ? "PASS" : "FAIL", r.max_rel_err, r.min_topk_margin);
        all_pass = all_pass && r.pass;
    }
    rep["pass"] = all_pass;
    write_text_file_atomic((fs::path(o.out_dir) / "report.json").string(), rep.dump(2) + "\n");
    if (!all_pass)
        throw Error(ErrorKind::numeric, "gradient check failed; see report.json");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_cap();
    CLI::App app{"multimodal graph recommender with triplet-template expert routing"};
    app.require_subcommand(1);

    CommonOpts o_synth, o_prepare, o_train, o_eval, o_diag, o_grad;
    bool train_resume = false, train_per_user = false, eval_per_user = false;
    std::string eval_ckpt, diag_ckpt, diag_split = "valid", grad_scope = "all";
    int grad_batch = 64;
    std::string grad_corrupt_tensor;
    int64_t grad_corrupt_coord = -1;

    auto* c_synth = app.add_subcommand("synth", "generate the block-structured synthetic dataset");
    add_config_options(c_synth, o_synth, false, false);

    auto* c_prepare = app.add_subcommand("prepare", "build and cache graph augmentation artifacts");
    add_config_options(c_prepare, o_prepare, true, true);

    auto* c_train = app.add_subcommand("train", "train a model end to end");
    add_config_options(c_train, o_train, true, true);
    c_train->add_flag("--resume", train_resume, "continue from the checkpoint in --out");
    c_train->add_flag("--per-user", train_per_user, "write per-user test metrics CSV");

    auto* c_eval = app.add_subcommand("evaluate", "evaluate a checkpoint on the held-out splits");
    add_config_options(c_eval, o_eval, false, false);
    c_eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory (default <out>/checkpoint)");
    c_eval->add_flag("--per-user", eval_per_user, "write per-user test metrics CSV");

    auto* c_diag = app.add_subcommand("diagnose", "aggregate routing diagnostics for a checkpoint");
    add_config_options(c_diag, o_diag, false, false);
    c_diag->add_option("--checkpoint", diag_ckpt, "checkpoint directory (default <out>/checkpoint)");
    c_diag->add_option("--split", diag_split, "pairs to aggregate over: train|valid|test")
        ->capture_default_str();

    auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of analytic gradients");
    add_config_options(c_grad, o_grad, true, true);
    c_grad->add_option("--scope", grad_scope, "bpr|stage1|stage2|all")->capture_default_str();
    c_grad->add_option("--batch", grad_batch, "edges in the probe batch")->capture_default_str();
    c_grad->add_option("--corrupt-tensor", grad_corrupt_tensor,
                       "inject a gradient fault into this tensor (testing the checker)");
    c_grad->add_option("--corrupt-coord", grad_corrupt_coord, "flat coordinate for the fault");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (c_synth->parsed()) return cmd_synth(o_synth);
        if (c_prepare->parsed()) return cmd_prepare(o_prepare);
        if (c_train->parsed()) return cmd_train(o_train, train_resume, train_per_user);
        if (c_eval->parsed()) {
            if (eval_ckpt.empty()) eval_ckpt = (fs::path(o_eval.out_dir) / "checkpoint").string();
            RunConfig cfg = config_from_checkpoint(eval_ckpt);
            write_resolved_config(cfg, o_eval.out_dir);
            if (cfg.precision == "f64")
                return run_evaluate<double>(cfg, eval_ckpt, o_eval, eval_per_user);
            return run_evaluate<float>(cfg, eval_ckpt, o_eval, eval_per_user);
        }
        if (c_diag->parsed()) {
            if (diag_ckpt.empty()) diag_ckpt = (fs::path(o_diag.out_dir) / "checkpoint").string();
            RunConfig cfg = config_from_checkpoint(diag_ckpt);
            write_resolved_config(cfg, o_diag.out_dir);
            if (cfg.precision == "f64")
                return run_diagnose<double>(cfg, diag_ckpt, o_diag, diag_split);
            return run_diagnose<float>(cfg, diag_ckpt, o_diag, diag_split);
        }
        if (c_grad->parsed())
            return cmd_gradcheck(o_grad, grad_scope, grad_batch, grad_corrupt_tensor,
                                 grad_corrupt_coord);
        throw Error(ErrorKind::internal, "no subcommand dispatched");
    } catch (const Error& e) {
        json rec{{"error", {{"kind", error_kind_name(e.kind)},
                            {"code", int(e.kind)},
                            {"message", e.what()}}}};
        std::cerr << rec.dump() << "\n";
        return int(e.kind);
    } catch (const std::exception& e) {
        json rec{{"error", {{"kind", "internal"},
                            {"code", int(ErrorKind::internal)},
                            {"message", e.what()}}}};
        std::cerr << rec.dump() << "\n";
        return int(ErrorKind::internal);
    }
}
