#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "magnet/model.hpp"
#include "magnet/schedule.hpp"

namespace magnet {

// Flat run configuration. Every key is overridable from the command line via
// --set key=value; unknown keys are rejected.
struct RunConfig {
    // data
    std::string interactions;
    std::string features_a;
    std::string features_s;
    int min_interactions = 4;
    double ratio_train = 0.8;
    double ratio_valid = 0.1;
    double ratio_test = 0.1;
    uint64_t seed = 7;

    // synthetic generator
    int synth_users = 200;
    int synth_items = 120;
    int synth_blocks = 4;
    int synth_dim_a = 16;
    int synth_dim_s = 12;
    double synth_density = 0.1;
    double synth_noise = 0.1;

    // graph augmentation
    int knn_k = 20;
    int expand_r = 150;

    // encoder
    int embed_dim = 64;
    int layers = 2;
    int fanout = 0;
    std::string view = "dv";  // "dv" or "sv"

    // mixture of experts
    int top_k = 4;
    int expert_split = 1;
    double alpha = 0.6;
    double beta = 0.2;
    double delta = 0.5;
    double epsilon = 0.05;

    // two-stage schedule
    std::string stage_strategy = "lin-ent";  // lin-ent | quad-ent | const | rev-ent | fixed-step
    double entropy_threshold = 0.90;
    int trigger_window = 3;
    double lambda_r = 0.30;

    // losses
    double lambda_ctr = 0.01;
    double tau = 0.5;
    double weight_decay = 2e-5;
    bool mean_bpr = false;

    // optimization
    int batch_size = 1024;
    int neg_ratio = 1;
    double learning_rate = 1e-3;
    int max_epochs = 200;
    int patience = 5;
    double dropout = 0.10;
    std::string precision = "f32";       // f32 | f64
    std::string router_init = "glorot";  // glorot | zero

    // ablation toggles
    bool no_moe = false;
    bool free_templates = false;
    bool fixed_step_switch = false;
    bool coverage_only = false;
    bool confidence_only = false;
    bool no_view_ctr = false;
    bool no_routing_reg = false;

    // logging; off by default so logs are bit-reproducible across runs
    bool log_timing = false;

    bool dual_view() const { return view == "dv"; }
    void validate() const;

    ModelConfig model_config() const;
    ScheduleConfig schedule_config() const;

    // Canonical JSON (sorted keys) and its 64-bit fingerprint.
    std::string to_json() const;
    std::string fingerprint() const;
};

// Parse from a JSON file or string; missing keys keep defaults, unknown keys
// are an error. apply_override handles one --set key=value pair.
RunConfig config_from_json_text(const std::string& text, const std::string& origin);
RunConfig config_from_file(const std::string& path);
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace magnet
