#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "magnet/train.hpp"

namespace magnet {

struct GradCheckGroup {
    std::string name;
    int64_t checked = 0;
    double max_rel_err = 0;
    double max_abs_err = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double max_rel_err = 0;
    double h = 0;
    double tolerance = 0;
    bool pass = false;
    double min_topk_margin = 0;  // smallest gap between kept and dropped routing mass
    int64_t coords_total = 0, coords_checked = 0;
};

// Central-difference check of the full training objective in 64-bit mode.
// The stage weights, negatives, and template resolution are frozen at the
// base point; dropout and neighbor sampling must be disabled (they resample
// per evaluation and are not part of the differentiable objective).
//
// The error metric is |fd - g| / max(|fd|, |g|, 0.01): relative for
// non-trivial gradients with an absolute floor, so finite-difference noise
// on near-zero coordinates is not misread as failure while any real defect
// above ~1e-6 in magnitude is still flagged.
//
// `corrupt_tensor`/`corrupt_coord` inject a deliberate analytic-gradient
// fault so tests can confirm the checker actually detects errors.
inline GradCheckReport gradient_check(Trainer<double>& tr, std::span<const Edge> batch,
                                      double h = 1e-4, double tol = 1e-4,
                                      uint64_t subset_cap = 10000,
                                      const std::string& corrupt_tensor = "",
                                      int64_t corrupt_coord = -1) {
    if (tr.model.cfg.dropout != 0.0 || tr.model.cfg.fanout != 0)
        throw Error(ErrorKind::config,
                    "gradient check requires dropout=0 and fanout=0");

    GradCheckReport rep;
    rep.h = h;
    rep.tolerance = tol;

    const std::vector<int32_t> negs = tr.draw_negatives(batch, 0);
    StepForward<double> base =
        step_forward(tr.model, tr.cfg, batch, std::vector<int32_t>(negs), false, 0);

    StageWeights w{};
    if (!tr.model.cfg.no_moe) {
        ScheduleState frozen = tr.sched;  // no stage update inside the check
        w = stage_weights(frozen, base.stats.h_norm, tr.sched_cfg);
    }
    const double lam_ctr_eff =
        (tr.model.cfg.dual_view && !tr.cfg.no_view_ctr) ? tr.cfg.lambda_ctr : 0.0;

    // Top-K selection margin at the base point; if it is comparable to the
    // perturbation scale the piecewise-smooth objective may switch branches.
    rep.min_topk_margin = 1.0;
    if (!tr.model.cfg.no_moe) {
        const int E = tr.model.pool.experts;
        const int K = tr.model.cfg.top_k;
        if (K < E) {
            for (size_t t = 0; t < base.tokens.size(); ++t) {
                std::vector<double> p(E);
                for (int e = 0; e < E; ++e) p[e] = double(base.tokens[t].route.pi[e]);
                std::sort(p.begin(), p.end(), std::greater<double>());
                rep.min_topk_margin = std::min(rep.min_topk_margin, p[K - 1] - p[K]);
            }
        }
    }

    step_backward(tr.model, tr.cfg, base, w);
    std::vector<Mat<double>> g_ref;
    g_ref.reserve(tr.model.params.tensors.size());
    for (const auto& t : tr.model.params.tensors) g_ref.push_back(t.grad);
    if (!corrupt_tensor.empty()) {
        size_t id = tr.model.params.id(corrupt_tensor);
        if (corrupt_coord < 0 || corrupt_coord >= int64_t(g_ref[id].v.size()))
            throw Error(ErrorKind::config, "corrupt coordinate out of range");
        g_ref[id].v[size_t(corrupt_coord)] += 1.0;
    }

    auto eval_total = [&]() -> double {
        StepForward<double> f =
            step_forward(tr.model, tr.cfg, batch, std::vector<int32_t>(negs), false, 0);
        return total_objective(f.bpr, f.ctr, f.cov, f.conf, f.l2, lam_ctr_eff, w,
                               tr.cfg.weight_decay)
            .total;
    };

    for (const auto& t : tr.model.params.tensors) rep.coords_total += int64_t(t.value.v.size());

    for (size_t ti = 0; ti < tr.model.params.tensors.size(); ++ti) {
        auto& tensor = tr.model.params.tensors[ti];
        const int64_t n = int64_t(tensor.value.v.size());
        std::vector<int64_t> coords;
        if (uint64_t(rep.coords_total) <= subset_cap) {
            coords.resize(size_t(n));
            for (int64_t c = 0; c < n; ++c) coords[size_t(c)] = c;
        } else {
            int64_t want = std::max<int64_t>(
                1, int64_t(double(subset_cap) * double(n) / double(rep.coords_total)));
            want = std::min(want, n);
            std::vector<int64_t> all(static_cast<size_t>(n), 0);
            for (int64_t c = 0; c < n; ++c) all[size_t(c)] = c;
            Rng r = Rng::derive(tr.cfg.seed, {0x67636b75ull, uint64_t(ti)});
            for (int64_t k = 0; k < want; ++k)
                std::swap(all[size_t(k)], all[size_t(k) + size_t(r.next_below(uint64_t(n - k)))]);
            coords.assign(all.begin(), all.begin() + want);
        }

        GradCheckGroup grp;
        grp.name = tensor.name;
        for (int64_t c : coords) {
            double old = tensor.value.v[size_t(c)];
            tensor.value.v[size_t(c)] = old + h;
            double fp = eval_total();
            tensor.value.v[size_t(c)] = old - h;
            double fm = eval_total();
            tensor.value.v[size_t(c)] = old;
            double fd = (fp - fm) / (2.0 * h);
            double g = g_ref[ti].v[size_t(c)];
            double abs_err = std::abs(fd - g);
            double rel = abs_err / std::max({std::abs(fd), std::abs(g), 1e-2});
            grp.max_rel_err = std::max(grp.max_rel_err, rel);
            grp.max_abs_err = std::max(grp.max_abs_err, abs_err);
            ++grp.checked;
        }
        rep.coords_checked += grp.checked;
        rep.max_rel_err = std::max(rep.max_rel_err, grp.max_rel_err);
        rep.groups.push_back(std::move(grp));
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace magnet
