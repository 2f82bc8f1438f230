#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "magnet/error.hpp"
#include "magnet/graph.hpp"
#include "magnet/mat.hpp"
#include "magnet/rng.hpp"

namespace magnet {

template <class T>
void glorot_fill(Mat<T>& m, Rng& rng) {
    double limit = std::sqrt(6.0 / (double(m.rows) + double(m.cols)));
    for (auto& x : m.v) x = T((2.0 * rng.next_double() - 1.0) * limit);
}

// Per-view propagation output: all layer activations plus their average.
template <class T>
struct ViewEmbeddings {
    std::vector<Mat<T>> eu, ei;  // layers 0..L
    Mat<T> zu, zi;               // mean over layers
};

// A sampled propagation operator for one layer (neighbor cap active).
// Coefficients are pre-scaled by deg/|sample| so the full-neighborhood
// operator is recovered in expectation.
struct SampledOp {
    std::vector<int32_t> u_off, u_adj;
    std::vector<double> u_coef;
    std::vector<int32_t> i_off, i_adj;
    std::vector<double> i_coef;
};

// Read-only view of one layer's operator, either the full graph or a sample.
struct OpView {
    std::span<const int32_t> u_off, u_adj, i_off, i_adj;
    std::span<const double> u_coef, i_coef;
};

inline OpView op_of(const ViewGraph& g) {
    return {g.u_off, g.u_adj, g.i_off, g.i_adj, g.u_coef, g.i_coef};
}
inline OpView op_of(const SampledOp& s) {
    return {s.u_off, s.u_adj, s.i_off, s.i_adj, s.u_coef, s.i_coef};
}

template <class T>
struct PropagationRecord {
    ViewEmbeddings<T> emb;
    std::vector<SampledOp> ops;  // one per layer when fanout is active, else empty

    OpView layer_op(const ViewGraph& g, int layer) const {
        return ops.empty() ? op_of(g) : op_of(ops[layer]);
    }
};

// dst[n] = sum over CSR row n of coef * src[adj]; row sums accumulate in
// double regardless of T. Rows are independent, so the parallel loop is
// deterministic for any thread count.
template <class T>
inline void spmm(std::span<const int32_t> off, std::span<const int32_t> adj,
                 std::span<const double> coef, const Mat<T>& src, Mat<T>& dst) {
    const int d = src.cols;
#pragma omp parallel for schedule(static)
    for (int32_t n = 0; n < dst.rows; ++n) {
        T* out = dst[n];
        for (int t = 0; t < d; ++t) out[t] = T(0);
        int32_t lo = off[n], hi = off[n + 1];
        if (lo == hi) continue;
        for (int t = 0; t < d; ++t) {
            double acc = 0;
            for (int32_t e = lo; e < hi; ++e) acc += coef[e] * double(src[adj[e]][t]);
            out[t] = T(acc);
        }
    }
}

// Uniform neighbor cap for one direction of one layer.
inline void sample_rows(std::span<const int32_t> off, std::span<const int32_t> adj,
                        std::span<const double> coef, int32_t rows, int fanout, uint64_t seed,
                        uint64_t step, uint64_t layer, uint64_t side, std::vector<int32_t>& s_off,
                        std::vector<int32_t>& s_adj, std::vector<double>& s_coef) {
    s_off.assign(rows + 1, 0);
    std::vector<std::vector<int32_t>> pick(rows);
    for (int32_t n = 0; n < rows; ++n) {
        int32_t deg = off[n + 1] - off[n];
        int take = std::min<int32_t>(deg, fanout);
        auto& p = pick[n];
        if (take == deg) {
            p.resize(deg);
            for (int32_t e = 0; e < deg; ++e) p[e] = off[n] + e;
        } else {
            Rng r = Rng::derive(seed, {rng_stream::kFanout, step, layer, side, uint64_t(n)});
            std::vector<int32_t> idx(deg);
            for (int32_t e = 0; e < deg; ++e) idx[e] = off[n] + e;
            for (int t = 0; t < take; ++t)
                std::swap(idx[t], idx[t + int32_t(r.next_below(uint64_t(deg - t)))]);
            p.assign(idx.begin(), idx.begin() + take);
            std::sort(p.begin(), p.end());
        }
        s_off[n + 1] = s_off[n] + int32_t(p.size());
    }
    s_adj.resize(s_off[rows]);
    s_coef.resize(s_off[rows]);
    for (int32_t n = 0; n < rows; ++n) {
        int32_t deg = off[n + 1] - off[n];
        double scale = pick[n].empty() ? 1.0 : double(deg) / double(pick[n].size());
        for (size_t t = 0; t < pick[n].size(); ++t) {
            s_adj[s_off[n] + t] = adj[pick[n][t]];
            s_coef[s_off[n] + t] = coef[pick[n][t]] * scale;
        }
    }
}

// Symmetric-normalized propagation for `layers` rounds starting from the
// layer-0 tables, then the mean over layers 0..L. fanout > 0 caps each node's
// neighborhood per layer (training-time only; callers pass 0 for inference).
template <class T>
PropagationRecord<T> propagate_view(const ViewGraph& g, const Mat<T>& e0_u, const Mat<T>& e0_i,
                                    int layers, int fanout = 0, uint64_t seed = 0,
                                    uint64_t step = 0) {
    if (e0_u.rows != g.num_users || e0_i.rows != g.num_items || e0_u.cols != e0_i.cols)
        throw Error(ErrorKind::internal, "propagation shape mismatch");
    PropagationRecord<T> rec;
    auto& v = rec.emb;
    v.eu.reserve(layers + 1);
    v.ei.reserve(layers + 1);
    v.eu.push_back(e0_u);
    v.ei.push_back(e0_i);
    for (int l = 0; l < layers; ++l) {
        OpView op;
        if (fanout > 0) {
            SampledOp s;
            sample_rows(g.u_off, g.u_adj, g.u_coef, g.num_users, fanout, seed, step, uint64_t(l),
                        0, s.u_off, s.u_adj, s.u_coef);
            sample_rows(g.i_off, g.i_adj, g.i_coef, g.num_items, fanout, seed, step, uint64_t(l),
                        1, s.i_off, s.i_adj, s.i_coef);
            rec.ops.push_back(std::move(s));
            op = op_of(rec.ops.back());
        } else {
            op = op_of(g);
        }
        Mat<T> nu(g.num_users, e0_u.cols), ni(g.num_items, e0_u.cols);
        spmm(op.u_off, op.u_adj, op.u_coef, v.ei[l], nu);
        spmm(op.i_off, op.i_adj, op.i_coef, v.eu[l], ni);
        v.eu.push_back(std::move(nu));
        v.ei.push_back(std::move(ni));
    }
    auto average = [&](const std::vector<Mat<T>>& seq, Mat<T>& out) {
        out = Mat<T>(seq[0].rows, seq[0].cols);
        double inv = 1.0 / double(seq.size());
#pragma omp parallel for schedule(static)
        for (int32_t n = 0; n < out.rows; ++n)
            for (int t = 0; t < out.cols; ++t) {
                double acc = 0;
                for (const auto& m : seq) acc += double(m[n][t]);
                out[n][t] = T(acc * inv);
            }
    };
    average(v.eu, v.zu);
    average(v.ei, v.zi);
    return rec;
}

// Adjoint of propagate_view: g_zu/g_zi are gradients w.r.t. the layer
// averages; outputs accumulate into the layer-0 table gradients. The chain
// reuses the same operators with user/item roles swapped (the operator is
// linear, so no stored activations are needed).
template <class T>
void propagate_backward(const ViewGraph& g, const PropagationRecord<T>& rec, const Mat<T>& g_zu,
                        const Mat<T>& g_zi, Mat<T>& g_eu, Mat<T>& g_ei) {
    int layers = int(rec.emb.eu.size()) - 1;
    double inv = 1.0 / double(layers + 1);
    Mat<T> au(g_zu.rows, g_zu.cols), ai(g_zi.rows, g_zi.cols);
    for (size_t t = 0; t < au.v.size(); ++t) au.v[t] = T(double(g_zu.v[t]) * inv);
    for (size_t t = 0; t < ai.v.size(); ++t) ai.v[t] = T(double(g_zi.v[t]) * inv);
    for (int l = layers - 1; l >= 0; --l) {
        OpView op = rec.layer_op(g, l);
        // adjoint through layer l+1: transpose of user<-item is item<-user
        Mat<T> nu(g_zu.rows, g_zu.cols), ni(g_zi.rows, g_zi.cols);
        spmm(op.u_off, op.u_adj, op.u_coef, ai, nu);  // from g on items at l+1
        spmm(op.i_off, op.i_adj, op.i_coef, au, ni);
        for (size_t t = 0; t < au.v.size(); ++t) au.v[t] = T(double(g_zu.v[t]) * inv + double(nu.v[t]));
        for (size_t t = 0; t < ai.v.size(); ++t) ai.v[t] = T(double(g_zi.v[t]) * inv + double(ni.v[t]));
    }
    for (size_t t = 0; t < au.v.size(); ++t) g_eu.v[t] += au.v[t];
    for (size_t t = 0; t < ai.v.size(); ++t) g_ei.v[t] += ai.v[t];
}

// Dual-view fusion is the plain average; single-view passes through.
template <class T>
void fuse_views(const Mat<T>& z_ui, const Mat<T>* z_uig, Mat<T>& z) {
    z = Mat<T>(z_ui.rows, z_ui.cols);
    if (!z_uig) {
        z.v = z_ui.v;
        return;
    }
    for (size_t t = 0; t < z.v.size(); ++t)
        z.v[t] = T(0.5 * (double(z_ui.v[t]) + double(z_uig->v[t])));
}

}  // namespace magnet
