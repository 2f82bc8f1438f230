#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "magnet/error.hpp"
#include "magnet/mat.hpp"
#include "magnet/schedule.hpp"

namespace magnet {

inline double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Pairwise ranking loss, summed over triplets (the historical convention);
// mean=true averages instead. neg holds neg_ratio negatives per positive,
// grouped after their positive: neg[t*rho + j] pairs with pos[t].
template <class T>
double bpr_loss(std::span<const T> pos, std::span<const T> neg, bool mean,
                std::span<double> g_pos, std::span<double> g_neg) {
    if (pos.empty() || neg.size() % pos.size() != 0)
        throw Error(ErrorKind::internal, "bpr: negatives must be a multiple of positives");
    size_t rho = neg.size() / pos.size();
    double w = mean ? 1.0 / double(neg.size()) : 1.0;
    double loss = 0;
    for (size_t t = 0; t < pos.size(); ++t) {
        for (size_t j = 0; j < rho; ++j) {
            double diff = double(pos[t]) - double(neg[t * rho + j]);
            loss += w * softplus(-diff);
            if (!g_pos.empty()) {
                double g = -w * sigmoid(-diff);
                g_pos[t] += g;
                g_neg[t * rho + j] -= g;
            }
        }
    }
    return loss;
}

// Squared deviation of the batch-mean routing distribution from uniform.
inline double coverage_loss(std::span<const double> pi_bar) {
    double target = 1.0 / double(pi_bar.size());
    double s = 0;
    for (double p : pi_bar) s += (p - target) * (p - target);
    return s;
}

inline double instance_entropy(std::span<const double> pi) {
    double h = 0;
    for (double p : pi)
        if (p > 0) h -= p * std::log(p);
    return h;
}

// Mean per-instance routing entropy; rows is batch-major [batch x experts].
inline double confidence_loss(std::span<const double> rows, int batch, int experts) {
    double s = 0;
    for (int t = 0; t < batch; ++t)
        s += instance_entropy(rows.subspan(size_t(t) * experts, experts));
    return s / double(batch);
}

// Symmetric in-batch view alignment over one side (users or items). Both
// directions share the cosine matrix S since cos is symmetric in its
// arguments; the reverse direction reads columns instead of rows. Returns
// L(a->b) + L(b->a) for this side; gradients are accumulated scaled by
// grad_scale (pass 0 to skip).
template <class T>
double contrastive_side(const Mat<T>& za, const Mat<T>& zb, std::span<const int32_t> ids,
                        double tau, double grad_scale, Mat<T>* g_za, Mat<T>* g_zb) {
    const int n = int(ids.size());
    if (n == 0) return 0.0;
    const int d = za.cols;

    // Unit-normalized picks; zero rows stay zero (cos treated as 0).
    Mat<double> va(n, d), vb(n, d);
    std::vector<double> na(n), nb(n);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < n; ++t) {
        const T* ra = za[ids[t]];
        const T* rb = zb[ids[t]];
        double sa = 0, sb = 0;
        for (int c = 0; c < d; ++c) {
            sa += double(ra[c]) * ra[c];
            sb += double(rb[c]) * rb[c];
        }
        na[t] = std::sqrt(sa);
        nb[t] = std::sqrt(sb);
        double ia = na[t] > 1e-12 ? 1.0 / na[t] : 0.0;
        double ib = nb[t] > 1e-12 ? 1.0 / nb[t] : 0.0;
        for (int c = 0; c < d; ++c) {
            va[t][c] = double(ra[c]) * ia;
            vb[t][c] = double(rb[c]) * ib;
        }
    }

    Mat<double> S(n, n);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < n; ++t)
        for (int q = 0; q < n; ++q) {
            double s = 0;
            for (int c = 0; c < d; ++c) s += va[t][c] * vb[q][c];
            S[t][q] = s;
        }

    // Row direction a->b and column direction b->a, each with logsumexp.
    double loss = 0;
    Mat<double> rowp(n, n), colp(n, n);
    std::vector<double> row_lse(n), col_lse(n);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < n; ++t) {
        double mx = -1e300;
        for (int q = 0; q < n; ++q) mx = std::max(mx, S[t][q]);
        double z = 0;
        for (int q = 0; q < n; ++q) z += std::exp((S[t][q] - mx) / tau);
        row_lse[t] = mx / tau + std::log(z);
        for (int q = 0; q < n; ++q) rowp[t][q] = std::exp((S[t][q] - mx) / tau) / z;
    }
#pragma omp parallel for schedule(static)
    for (int q = 0; q < n; ++q) {
        double mx = -1e300;
        for (int t = 0; t < n; ++t) mx = std::max(mx, S[t][q]);
        double z = 0;
        for (int t = 0; t < n; ++t) z += std::exp((S[t][q] - mx) / tau);
        col_lse[q] = mx / tau + std::log(z);
        for (int t = 0; t < n; ++t) colp[t][q] = std::exp((S[t][q] - mx) / tau) / z;
    }
    for (int t = 0; t < n; ++t) {
        loss += -S[t][t] / tau + row_lse[t];
        loss += -S[t][t] / tau + col_lse[t];
    }
    loss /= double(n);

    if (grad_scale != 0.0 && g_za && g_zb) {
        // dLoss/dS[t][q] = (rowp[t][q] + colp[t][q] - 2*delta_tq) / (n*tau)
        Mat<double> G(n, n);
        double inv = 1.0 / (double(n) * tau);
#pragma omp parallel for schedule(static)
        for (int t = 0; t < n; ++t)
            for (int q = 0; q < n; ++q)
                G[t][q] = (rowp[t][q] + colp[t][q] - (t == q ? 2.0 : 0.0)) * inv;

        // d cos/d x = (v_b - cos * v_a)/|x|; zero-norm rows get no gradient.
#pragma omp parallel for schedule(static)
        for (int t = 0; t < n; ++t) {
            if (na[t] <= 1e-12) continue;
            T* g = (*g_za)[ids[t]];
            double wsum = 0;
            std::vector<double> acc(d, 0.0);
            for (int q = 0; q < n; ++q) {
                double w = G[t][q];
                if (w == 0) continue;
                wsum += w * S[t][q];
                for (int c = 0; c < d; ++c) acc[c] += w * vb[q][c];
            }
            double s = grad_scale / na[t];
            for (int c = 0; c < d; ++c) g[c] += T(s * (acc[c] - wsum * va[t][c]));
        }
#pragma omp parallel for schedule(static)
        for (int q = 0; q < n; ++q) {
            if (nb[q] <= 1e-12) continue;
            T* g = (*g_zb)[ids[q]];
            double wsum = 0;
            std::vector<double> acc(d, 0.0);
            for (int t = 0; t < n; ++t) {
                double w = G[t][q];
                if (w == 0) continue;
                wsum += w * S[t][q];
                for (int c = 0; c < d; ++c) acc[c] += w * va[t][c];
            }
            double s = grad_scale / nb[q];
            for (int c = 0; c < d; ++c) g[c] += T(s * (acc[c] - wsum * vb[q][c]));
        }
    }
    return loss;
}

// Dual-view alignment: symmetric InfoNCE on the per-view layer averages for
// the distinct users and items of the batch, both sides weighted equally.
// The overall 1/2 from symmetrizing the directions is folded in here.
template <class T>
double view_contrastive_loss(const Mat<T>& zu_a, const Mat<T>& zu_b, const Mat<T>& zi_a,
                             const Mat<T>& zi_b, std::span<const int32_t> users,
                             std::span<const int32_t> items, double tau, double grad_scale,
                             Mat<T>* g_zu_a = nullptr, Mat<T>* g_zu_b = nullptr,
                             Mat<T>* g_zi_a = nullptr, Mat<T>* g_zi_b = nullptr) {
    if (tau <= 0) throw Error(ErrorKind::config, "contrastive temperature must be positive");
    double half_scale = 0.5 * grad_scale;
    double lu = contrastive_side(zu_a, zu_b, users, tau, half_scale, g_zu_a, g_zu_b);
    double li = contrastive_side(zi_a, zi_b, items, tau, half_scale, g_zi_a, g_zi_b);
    return 0.5 * (lu + li);
}

struct LossBreakdown {
    double bpr = 0, ctr = 0, cov = 0, conf = 0, l2 = 0;
    double lambda_ctr = 0, lambda_cov = 0, lambda_conf = 0, weight_decay = 0;
    double total = 0;
};

// Weighted combination; the stage weights arrive from the schedule and are
// treated as constants of the step (no gradient flows through them).
inline LossBreakdown total_objective(double bpr, double ctr, double cov, double conf, double l2,
                                     double lambda_ctr, const StageWeights& w,
                                     double weight_decay) {
    LossBreakdown b;
    b.bpr = bpr;
    b.ctr = ctr;
    b.cov = cov;
    b.conf = conf;
    b.l2 = l2;
    b.lambda_ctr = lambda_ctr;
    b.lambda_cov = w.lambda_cov;
    b.lambda_conf = w.lambda_conf;
    b.weight_decay = weight_decay;
    b.total = bpr + lambda_ctr * ctr + w.lambda_cov * cov + w.lambda_conf * conf +
              weight_decay * l2;
    return b;
}

}  // namespace magnet
