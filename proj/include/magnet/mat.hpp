#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace magnet {

// Dense row-major matrix. Deliberately minimal: the model only needs row
// views, fills, and elementwise access.
template <class T>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(size_t(r) * size_t(c), T(0)) {}

    T* operator[](int r) { return v.data() + size_t(r) * cols; }
    const T* operator[](int r) const { return v.data() + size_t(r) * cols; }

    std::span<T> row(int r) { return {v.data() + size_t(r) * cols, size_t(cols)}; }
    std::span<const T> row(int r) const { return {v.data() + size_t(r) * cols, size_t(cols)}; }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }
    size_t size() const { return v.size(); }
};

template <class T>
inline T dot(std::span<const T> a, std::span<const T> b) {
    T s = T(0);
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

template <class T>
inline void axpy(T a, std::span<const T> x, std::span<T> y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

template <class T>
inline T norm2(std::span<const T> a) {
    return std::sqrt(dot(a, a));
}

// y = W^T x + b where W is (in x out) row-major.
template <class T>
inline void affine(const Mat<T>& W, std::span<const T> b, std::span<const T> x, std::span<T> y) {
    for (int j = 0; j < W.cols; ++j) y[j] = b[j];
    for (int i = 0; i < W.rows; ++i) {
        T xi = x[i];
        if (xi == T(0)) continue;
        const T* wrow = W[i];
        for (int j = 0; j < W.cols; ++j) y[j] += xi * wrow[j];
    }
}

// Backward of affine: accumulates gW += x g^T, gb += g, gx += W g.
template <class T>
inline void affine_backward(const Mat<T>& W, std::span<const T> x, std::span<const T> g,
                            Mat<T>& gW, std::span<T> gb, std::span<T> gx) {
    for (size_t j = 0; j < g.size(); ++j) gb[j] += g[j];
    for (int i = 0; i < W.rows; ++i) {
        const T* wrow = W[i];
        T* gwrow = gW[i];
        T acc = T(0);
        T xi = x[i];
        for (int j = 0; j < W.cols; ++j) {
            gwrow[j] += xi * g[j];
            acc += wrow[j] * g[j];
        }
        gx[i] += acc;
    }
}

}  // namespace magnet
