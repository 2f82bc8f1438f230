#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "magnet/error.hpp"

namespace magnet {

enum class StageStrategy : int { LinEnt, QuadEnt, Const, RevEnt, FixedStep };

struct ScheduleConfig {
    StageStrategy strategy = StageStrategy::LinEnt;
    double threshold = 0.90;  // normalized-entropy trigger H*
    int window = 3;           // consecutive confirmations W
    double lambda_r = 0.30;
    int pinned_stage = 0;     // 0 = automatic, 1/2 = stage forced (ablations)
    int fixed_switch_epoch = 100;  // FixedStep: stage 2 strictly after this epoch
};

// Two-stage controller. The transition is one-way: once stage 2 is reached
// it persists for the rest of training.
struct ScheduleState {
    int stage = 1;
    int counter = 0;       // consecutive steps with H_norm >= threshold
    int64_t step = 0;      // global optimizer steps taken
    int epoch = 1;         // 1-based, for the fixed-step strategy
};

struct EntropyStats {
    double entropy = 0;     // H(pi_bar), natural log
    double h_norm = 0;      // H / ln(E)
    double n_eff = 1;       // exp(H)
    std::vector<double> pi_bar;
};

// Batch routing statistics over the dense distributions of the POSITIVE
// pairs only. rows is batch-major: rows[t*experts + e].
inline EntropyStats batch_entropy_stats(std::span<const double> rows, int batch, int experts) {
    if (batch <= 0 || experts <= 0)
        throw Error(ErrorKind::internal, "entropy stats need a nonempty batch");
    EntropyStats st;
    st.pi_bar.assign(experts, 0.0);
    for (int t = 0; t < batch; ++t)
        for (int e = 0; e < experts; ++e) st.pi_bar[e] += rows[size_t(t) * experts + e];
    double inv = 1.0 / double(batch);
    double h = 0;
    for (int e = 0; e < experts; ++e) {
        st.pi_bar[e] *= inv;
        if (st.pi_bar[e] > 0) h -= st.pi_bar[e] * std::log(st.pi_bar[e]);
    }
    st.entropy = h;
    st.h_norm = (experts > 1) ? h / std::log(double(experts)) : 0.0;
    st.n_eff = std::exp(h);
    return st;
}

// Advance the trigger automaton with this step's normalized entropy. The
// counter increments only while the signal holds above threshold and resets
// on any dip; reaching the window confirms the switch.
inline void update_stage(ScheduleState& st, double h_norm, const ScheduleConfig& cfg) {
    if (cfg.pinned_stage != 0) {
        st.stage = cfg.pinned_stage;
        return;
    }
    if (cfg.strategy == StageStrategy::FixedStep) {
        if (st.epoch > cfg.fixed_switch_epoch) st.stage = 2;
        return;
    }
    if (st.stage != 1) return;
    if (h_norm >= cfg.threshold) {
        if (++st.counter >= cfg.window) st.stage = 2;
    } else {
        st.counter = 0;
    }
}

struct StageWeights {
    double lambda_cov = 0;
    double lambda_conf = 0;
};

// Stage-dependent regularizer weights. Exactly one of the two weights can be
// nonzero at a time; the entropy mapping depends on the strategy.
inline StageWeights stage_weights(const ScheduleState& st, double h_norm,
                                  const ScheduleConfig& cfg) {
    StageWeights w;
    double lr = cfg.lambda_r;
    switch (cfg.strategy) {
        case StageStrategy::LinEnt:
        case StageStrategy::FixedStep:  // manual switch keeps the linear mapping
            if (st.stage == 1) w.lambda_cov = lr * (1.0 - h_norm);
            else w.lambda_conf = lr * h_norm;
            break;
        case StageStrategy::QuadEnt:
            if (st.stage == 1) w.lambda_cov = lr * (1.0 - h_norm) * (1.0 - h_norm);
            else w.lambda_conf = lr * h_norm * h_norm;
            break;
        case StageStrategy::Const:
            if (st.stage == 1) w.lambda_cov = lr;
            else w.lambda_conf = lr;
            break;
        case StageStrategy::RevEnt:
            if (st.stage == 1) w.lambda_cov = lr * h_norm;
            else w.lambda_conf = lr * (1.0 - h_norm);
            break;
    }
    return w;
}

}  // namespace magnet
