#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "magnet/config.hpp"
#include "magnet/data.hpp"
#include "magnet/encoder.hpp"
#include "magnet/eval.hpp"
#include "magnet/losses.hpp"
#include "magnet/model.hpp"
#include "magnet/parallel.hpp"
#include "magnet/schedule.hpp"

namespace magnet {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update over every tensor; t is the 1-based update count.
// Elementwise, so parallel order cannot change results.
template <class T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg, int64_t t) {
    double c1 = 1.0 - std::pow(cfg.beta1, double(t));
    double c2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (auto& tn : params.tensors) {
        T* val = tn.value.v.data();
        T* g = tn.grad.v.data();
        T* m = tn.adam_m.v.data();
        T* v = tn.adam_v.v.data();
        const int64_t n = int64_t(tn.value.v.size());
#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < n; ++c) {
            double gd = double(g[c]);
            double md = cfg.beta1 * double(m[c]) + (1.0 - cfg.beta1) * gd;
            double vd = cfg.beta2 * double(v[c]) + (1.0 - cfg.beta2) * gd * gd;
            m[c] = T(md);
            v[c] = T(vd);
            val[c] = T(double(val[c]) - cfg.lr * (md / c1) / (std::sqrt(vd / c2) + cfg.eps));
        }
    }
}

// Forward state of one training step (scores, routing, loss pieces). Kept so
// the backward pass can run without recomputation.
template <class T>
struct StepForward {
    ScoringContext<T> ctx;
    std::vector<Edge> positives;
    std::vector<int32_t> negatives;        // batch * neg_ratio, grouped per positive
    std::vector<TokenForward<T>> tokens;   // positives then negatives
    std::vector<double> pi_rows;           // dense routing of positives, batch x E
    EntropyStats stats;
    std::vector<double> g_pos, g_neg;      // BPR adjoints on the scores
    std::vector<int32_t> users_distinct, items_distinct;
    double bpr = 0, ctr = 0, cov = 0, conf = 0, l2 = 0;
};

template <class T>
StepForward<T> step_forward(const MagnetModel<T>& m, const RunConfig& cfg,
                            std::span<const Edge> batch, std::vector<int32_t> negatives,
                            bool training, uint64_t step_idx) {
    if (batch.empty()) throw Error(ErrorKind::internal, "empty training batch");
    StepForward<T> f;
    f.positives.assign(batch.begin(), batch.end());
    f.negatives = std::move(negatives);
    f.ctx = build_scoring_context(m, training, step_idx);

    const size_t B = batch.size();
    const size_t rho = cfg.neg_ratio;
    f.tokens.resize(B * (1 + rho));
#pragma omp parallel for schedule(static)
    for (size_t t = 0; t < B * (1 + rho); ++t) {
        int32_t u, i;
        if (t < B) {
            u = batch[t].first;
            i = batch[t].second;
        } else {
            size_t nt = t - B;
            u = batch[nt / rho].first;
            i = f.negatives[nt];
        }
        token_forward(m, f.ctx, u, i, uint64_t(t), f.tokens[t]);
    }

    std::vector<T> pos_scores(B), neg_scores(B * rho);
    for (size_t t = 0; t < B; ++t) pos_scores[t] = f.tokens[t].route.yhat;
    for (size_t t = 0; t < B * rho; ++t) neg_scores[t] = f.tokens[B + t].route.yhat;
    f.g_pos.assign(B, 0.0);
    f.g_neg.assign(B * rho, 0.0);
    f.bpr = bpr_loss<T>(pos_scores, neg_scores, cfg.mean_bpr, f.g_pos, f.g_neg);

    if (!m.cfg.no_moe) {
        const int E = m.pool.experts;
        f.pi_rows.resize(B * size_t(E));
        for (size_t t = 0; t < B; ++t)
            for (int e = 0; e < E; ++e) f.pi_rows[t * E + e] = double(f.tokens[t].route.pi[e]);
        f.stats = batch_entropy_stats(f.pi_rows, int(B), E);
        f.cov = coverage_loss(f.stats.pi_bar);
        f.conf = confidence_loss(f.pi_rows, int(B), E);
    }

    if (m.cfg.dual_view && !cfg.no_view_ctr && cfg.lambda_ctr > 0) {
        f.users_distinct.reserve(B);
        f.items_distinct.reserve(B);
        for (const auto& [u, i] : batch) {
            f.users_distinct.push_back(u);
            f.items_distinct.push_back(i);
        }
        auto uniq = [](std::vector<int32_t>& v) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        };
        uniq(f.users_distinct);
        uniq(f.items_distinct);
        f.ctr = view_contrastive_loss<T>(f.ctx.ui.emb.zu, f.ctx.uig.emb.zu, f.ctx.ui.emb.zi,
                                         f.ctx.uig.emb.zi, f.users_distinct, f.items_distinct,
                                         cfg.tau, 0.0);
    }
    f.l2 = m.params.squared_norm();
    return f;
}

// Exact adjoint of step_forward under the given (frozen) stage weights.
// Gradients land in the parameter store.
template <class T>
void step_backward(MagnetModel<T>& m, const RunConfig& cfg, const StepForward<T>& f,
                   const StageWeights& w) {
    m.params.zero_grads();
    const size_t B = f.positives.size();
    const size_t total = f.tokens.size();
    const int E = m.cfg.no_moe ? 0 : m.pool.experts;
    const int d = m.cfg.embed_dim;

    // Dense-routing regularizer adjoints are shared across positives
    // (coverage part) plus a per-token confidence part.
    std::vector<double> g_cov_row(E, 0.0);
    if (E > 0 && w.lambda_cov != 0.0) {
        double uniform = 1.0 / double(E);
        for (int e = 0; e < E; ++e)
            g_cov_row[e] = w.lambda_cov * 2.0 / double(B) * (f.stats.pi_bar[e] - uniform);
    }

    const int nthreads = thread_slots();
    std::vector<TokenGrads<T>> buffers(nthreads);
    for (auto& b : buffers) b.init(m);

#pragma omp parallel
    {
        TokenGrads<T>& mine = buffers[thread_id()];
        std::vector<double> g_pi(E, 0.0);
#pragma omp for schedule(static)
        for (size_t t = 0; t < total; ++t) {
            double g_yhat = t < B ? f.g_pos[t] : f.g_neg[t - B];
            std::span<const double> dense;
            if (t < B && E > 0 && (w.lambda_cov != 0.0 || w.lambda_conf != 0.0)) {
                for (int e = 0; e < E; ++e) {
                    double p = double(f.tokens[t].route.pi[e]);
                    double conf_part =
                        (w.lambda_conf != 0.0 && p > 1e-300)
                            ? -w.lambda_conf * (std::log(p) + 1.0) / double(B)
                            : 0.0;
                    g_pi[e] = g_cov_row[e] + conf_part;
                }
                dense = g_pi;
            }
            token_backward(m, f.ctx, f.tokens[t], g_yhat, dense, mine);
        }
    }
    TokenGrads<T>& rows = buffers[0];
    for (int t = 1; t < nthreads; ++t) rows.add_from(buffers[t]);
    for (size_t i = 0; i < m.params.tensors.size(); ++i) {
        auto& dst = m.params.tensors[i].grad.v;
        const auto& src = rows.tensor[i].v;
        for (size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }

    // View-alignment gradients attach to the per-view layer averages.
    Mat<T> g_zu_ui(m.train->num_users, d), g_zi_ui(m.train->num_items, d);
    Mat<T> g_zu_uig, g_zi_uig;
    if (m.cfg.dual_view) {
        g_zu_uig = Mat<T>(m.train->num_users, d);
        g_zi_uig = Mat<T>(m.train->num_items, d);
    }
    if (!f.users_distinct.empty()) {
        view_contrastive_loss<T>(f.ctx.ui.emb.zu, f.ctx.uig.emb.zu, f.ctx.ui.emb.zi,
                                 f.ctx.uig.emb.zi, f.users_distinct, f.items_distinct, cfg.tau,
                                 cfg.lambda_ctr, &g_zu_ui, &g_zu_uig, &g_zi_ui, &g_zi_uig);
    }

    // Fusion: z = (z_ui + z_uig)/2 in dual view, passthrough otherwise.
    auto& g_user = m.params.at("user_emb").grad;
    auto& g_item = m.params.at("item_emb").grad;
    if (m.cfg.dual_view) {
        for (size_t c = 0; c < g_zu_ui.v.size(); ++c) g_zu_ui.v[c] += T(0.5 * double(rows.zu.v[c]));
        for (size_t c = 0; c < g_zi_ui.v.size(); ++c) g_zi_ui.v[c] += T(0.5 * double(rows.zi.v[c]));
        for (size_t c = 0; c < g_zu_uig.v.size(); ++c)
            g_zu_uig.v[c] += T(0.5 * double(rows.zu.v[c]));
        for (size_t c = 0; c < g_zi_uig.v.size(); ++c)
            g_zi_uig.v[c] += T(0.5 * double(rows.zi.v[c]));
    } else {
        for (size_t c = 0; c < g_zu_ui.v.size(); ++c) g_zu_ui.v[c] += rows.zu.v[c];
        for (size_t c = 0; c < g_zi_ui.v.size(); ++c) g_zi_ui.v[c] += rows.zi.v[c];
    }
    propagate_backward(*m.g_ui, f.ctx.ui, g_zu_ui, g_zi_ui, g_user, g_item);
    if (m.cfg.dual_view)
        propagate_backward(*m.g_uig, f.ctx.uig, g_zu_uig, g_zi_uig, g_user, g_item);

    // Cue backward: user cues are history means, so their gradients scatter
    // to member items through the training graph; then the projections.
    Mat<T> g_hi_a = rows.hi_a, g_hi_s = rows.hi_s;
    const ViewGraph& tg = *m.g_ui;  // training interactions only
#pragma omp parallel for schedule(static)
    for (int32_t i = 0; i < tg.num_items; ++i) {
        for (int32_t e = tg.i_off[i]; e < tg.i_off[i + 1]; ++e) {
            int32_t u = tg.i_adj[e];
            double inv = 1.0 / double(tg.deg_u[u]);
            for (int c = 0; c < d; ++c) {
                g_hi_a[i][c] += T(double(rows.hu_a[u][c]) * inv);
                g_hi_s[i][c] += T(double(rows.hu_s[u][c]) * inv);
            }
        }
    }
    {
        const int np = thread_slots();
        struct ProjBuf {
            Mat<T> wa, ba, ws, bs;
        };
        std::vector<ProjBuf> pb(np);
        for (auto& p : pb) {
            p.wa = Mat<T>(m.feat_a->dim, d);
            p.ba = Mat<T>(1, d);
            p.ws = Mat<T>(m.feat_s->dim, d);
            p.bs = Mat<T>(1, d);
        }
#pragma omp parallel for schedule(static)
        for (int32_t i = 0; i < tg.num_items; ++i) {
            ProjBuf& p = pb[thread_id()];
            for (int c = 0; c < d; ++c) {
                double ga = double(g_hi_a[i][c]);
                double gs = double(g_hi_s[i][c]);
                if (ga != 0.0) {
                    p.ba[0][c] += T(ga);
                    const float* x = m.feat_a->row(i);
                    for (int32_t r = 0; r < m.feat_a->dim; ++r) p.wa[r][c] += T(double(x[r]) * ga);
                }
                if (gs != 0.0) {
                    p.bs[0][c] += T(gs);
                    const float* x = m.feat_s->row(i);
                    for (int32_t r = 0; r < m.feat_s->dim; ++r) p.ws[r][c] += T(double(x[r]) * gs);
                }
            }
        }
        auto& gwa = m.params.at("proj_a_w").grad;
        auto& gba = m.params.at("proj_a_b").grad;
        auto& gws = m.params.at("proj_s_w").grad;
        auto& gbs = m.params.at("proj_s_b").grad;
        for (int t = 0; t < np; ++t) {
            for (size_t c = 0; c < gwa.v.size(); ++c) gwa.v[c] += pb[t].wa.v[c];
            for (size_t c = 0; c < gba.v.size(); ++c) gba.v[c] += pb[t].ba.v[c];
            for (size_t c = 0; c < gws.v.size(); ++c) gws.v[c] += pb[t].ws.v[c];
            for (size_t c = 0; c < gbs.v.size(); ++c) gbs.v[c] += pb[t].bs.v[c];
        }
    }

    // Explicit L2 term: d/dtheta (wd * sum theta^2) = 2 wd theta.
    if (cfg.weight_decay != 0.0) {
        double two_wd = 2.0 * cfg.weight_decay;
        for (auto& tn : m.params.tensors) {
            const int64_t n = int64_t(tn.value.v.size());
#pragma omp parallel for schedule(static)
            for (int64_t c = 0; c < n; ++c)
                tn.grad.v[c] += T(two_wd * double(tn.value.v[c]));
        }
    }
}

struct StepRecord {
    int64_t step = 0;
    double entropy = 0, h_norm = 0, n_eff = 0;
    int stage = 1;
    int counter = 0;
    double lambda_cov = 0, lambda_conf = 0;
    double conf_entropy = 0;  // mean per-instance routing entropy (positives)
    LossBreakdown loss;
};

struct EpochRecord {
    int epoch = 0;
    LossBreakdown mean_loss;  // weighted objective contributions, averaged over steps
    double h_norm_mean = 0;
    int stage = 1;
    double val_recall20 = 0, val_ndcg20 = 0;
    double seconds = 0;
};

struct FitResult {
    int epochs_run = 0;
    int best_epoch = 0;
    double best_ndcg = 0;
    double best_recall = 0;
};

template <class T>
struct TrainerSnapshot {
    std::vector<Mat<T>> value, adam_m, adam_v;
    int64_t adam_t = 0;
    ScheduleState sched;
    int epochs_done = 0;
    std::vector<std::array<double, 3>> val_history;  // epoch, recall20, ndcg20
    int best_epoch = 0;
    double best_ndcg = 0;
};

template <class T>
struct Trainer {
    RunConfig cfg;
    MagnetModel<T> model;
    ScheduleConfig sched_cfg;
    ScheduleState sched;
    AdamConfig adam;
    int64_t adam_t = 0;
    const SplitBundle* split = nullptr;

    int epochs_done = 0;
    std::vector<std::array<double, 3>> val_history;
    int best_epoch = 0;
    double best_ndcg = -1.0;
    double best_recall = 0.0;
    TrainerSnapshot<T> best;

    std::function<void(const StepRecord&)> on_step;
    std::function<void(const EpochRecord&)> on_epoch;

    void setup(const SplitBundle& s, const FeatureMatrix& fa, const FeatureMatrix& fs,
               const ViewGraph& ui, const ViewGraph* uig) {
        cfg.validate();
        split = &s;
        model.cfg = cfg.model_config();
        model.train = &s.train;
        model.feat_a = &fa;
        model.feat_s = &fs;
        model.g_ui = &ui;
        model.g_uig = uig;
        model.init();
        sched_cfg = cfg.schedule_config();
        adam.lr = cfg.learning_rate;
    }

    std::vector<int32_t> draw_negatives(std::span<const Edge> batch, uint64_t step_idx) const {
        Rng r = Rng::derive(cfg.seed, {rng_stream::kNegative, step_idx});
        std::vector<int32_t> negs;
        negs.reserve(batch.size() * cfg.neg_ratio);
        for (const auto& [u, i] : batch) {
            auto n = sample_negatives(u, split->train, cfg.neg_ratio, r);
            negs.insert(negs.end(), n.begin(), n.end());
        }
        return negs;
    }

    StepRecord train_step(std::span<const Edge> batch, uint64_t step_idx) {
        StepForward<T> f =
            step_forward(model, cfg, batch, draw_negatives(batch, step_idx), true, step_idx);

        StageWeights w{};
        if (!model.cfg.no_moe) {
            update_stage(sched, f.stats.h_norm, sched_cfg);  // switch step uses new weights
            w = stage_weights(sched, f.stats.h_norm, sched_cfg);
        }
        double lambda_ctr_eff =
            (model.cfg.dual_view && !cfg.no_view_ctr) ? cfg.lambda_ctr : 0.0;
        LossBreakdown loss =
            total_objective(f.bpr, f.ctr, f.cov, f.conf, f.l2, lambda_ctr_eff, w,
                            cfg.weight_decay);
        if (!std::isfinite(loss.total))
            throw Error(ErrorKind::numeric,
                        "non-finite loss at step " + std::to_string(step_idx) + ": bpr=" +
                            std::to_string(loss.bpr) + " ctr=" + std::to_string(loss.ctr) +
                            " cov=" + std::to_string(loss.cov) + " conf=" +
                            std::to_string(loss.conf) + " l2=" + std::to_string(loss.l2));

        step_backward(model, cfg, f, w);
        adam_step(model.params, adam, ++adam_t);
        ++sched.step;

        StepRecord rec;
        rec.step = int64_t(step_idx);
        rec.entropy = f.stats.entropy;
        rec.h_norm = f.stats.h_norm;
        rec.n_eff = f.stats.n_eff;
        rec.stage = sched.stage;
        rec.counter = sched.counter;
        rec.lambda_cov = w.lambda_cov;
        rec.lambda_conf = w.lambda_conf;
        rec.conf_entropy = f.conf;
        rec.loss = loss;
        if (on_step) on_step(rec);
        return rec;
    }

    MetricReport evaluate_split(const std::vector<Edge>& pairs, bool per_user = false) {
        ScoringContext<T> ctx = build_scoring_context(model, false, 0);
        return compute_metrics(model, ctx, pairs, {10, 20}, per_user);
    }

    TrainerSnapshot<T> snapshot() const {
        TrainerSnapshot<T> s;
        for (const auto& t : model.params.tensors) {
            s.value.push_back(t.value);
            s.adam_m.push_back(t.adam_m);
            s.adam_v.push_back(t.adam_v);
        }
        s.adam_t = adam_t;
        s.sched = sched;
        s.epochs_done = epochs_done;
        s.val_history = val_history;
        s.best_epoch = best_epoch;
        s.best_ndcg = best_ndcg;
        return s;
    }

    void restore(const TrainerSnapshot<T>& s) {
        if (s.value.size() != model.params.tensors.size())
            throw Error(ErrorKind::internal, "snapshot shape mismatch");
        for (size_t i = 0; i < s.value.size(); ++i) {
            model.params.tensors[i].value = s.value[i];
            model.params.tensors[i].adam_m = s.adam_m[i];
            model.params.tensors[i].adam_v = s.adam_v[i];
        }
        adam_t = s.adam_t;
        sched = s.sched;
        epochs_done = s.epochs_done;
        val_history = s.val_history;
        best_epoch = s.best_epoch;
        best_ndcg = s.best_ndcg;
    }

    // One pass over the training edges in seeded shuffled order.
    void run_epoch(int epoch) {
        sched.epoch = epoch;
        const auto& edges = split->train.edges;
        std::vector<int64_t> order(edges.size());
        for (size_t t = 0; t < order.size(); ++t) order[t] = int64_t(t);
        Rng r = Rng::derive(cfg.seed, {rng_stream::kShuffle, uint64_t(epoch)});
        for (size_t k = order.size(); k > 1; --k)
            std::swap(order[k - 1], order[r.next_below(k)]);

        auto t0 = std::chrono::steady_clock::now();
        LossBreakdown acc{};
        double h_acc = 0;
        int steps = 0;
        std::vector<Edge> batch;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
            batch.clear();
            for (size_t t = start; t < end; ++t) batch.push_back(edges[order[t]]);
            StepRecord rec = train_step(batch, uint64_t(sched.step));
            acc.bpr += rec.loss.bpr;
            acc.ctr += rec.loss.lambda_ctr * rec.loss.ctr;
            acc.cov += rec.loss.lambda_cov * rec.loss.cov;
            acc.conf += rec.loss.lambda_conf * rec.loss.conf;
            acc.l2 += rec.loss.weight_decay * rec.loss.l2;
            acc.total += rec.loss.total;
            h_acc += rec.h_norm;
            ++steps;
        }
        epochs_done = epoch;

        MetricReport val = evaluate_split(split->valid);
        double recall20 = val.recall.size() > 1 ? val.recall[1] : 0.0;
        double ndcg20 = val.ndcg.size() > 1 ? val.ndcg[1] : 0.0;
        val_history.push_back({double(epoch), recall20, ndcg20});
        if (ndcg20 > best_ndcg) {
            best_ndcg = ndcg20;
            best_recall = recall20;
            best_epoch = epoch;
            best = snapshot();
        }

        EpochRecord er;
        er.epoch = epoch;
        if (steps > 0) {
            er.mean_loss.bpr = acc.bpr / steps;
            er.mean_loss.ctr = acc.ctr / steps;
            er.mean_loss.cov = acc.cov / steps;
            er.mean_loss.conf = acc.conf / steps;
            er.mean_loss.l2 = acc.l2 / steps;
            er.mean_loss.total = acc.total / steps;
            er.h_norm_mean = h_acc / steps;
        }
        er.stage = sched.stage;
        er.val_recall20 = recall20;
        er.val_ndcg20 = ndcg20;
        if (cfg.log_timing) {
            auto t1 = std::chrono::steady_clock::now();
            er.seconds = std::chrono::duration<double>(t1 - t0).count();
        }
        if (on_epoch) on_epoch(er);
    }

    // Trains until the epoch cap or until patience runs out, then restores
    // the best-validation parameters.
    FitResult fit() {
        for (int epoch = epochs_done + 1; epoch <= cfg.max_epochs; ++epoch) {
            run_epoch(epoch);
            if (best_epoch > 0 && epoch - best_epoch >= cfg.patience) break;
        }
        FitResult res;
        res.epochs_run = epochs_done;
        res.best_epoch = best_epoch;
        res.best_ndcg = best_ndcg;
        res.best_recall = best_recall;
        if (best_epoch > 0) restore(best);  // leave the model at its best validation state
        return res;
    }
};

}  // namespace magnet
