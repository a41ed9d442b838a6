#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fast/rng.hpp"
#include "fast/tape.hpp"

namespace fast::num {

template <typename T>
inline void require_finite(const Tensor<T>& x, const char* op) {
    if (!x.all_finite()) throw NumericError(std::string(op) + ": non-finite values");
}

// ---------------------------------------------------------------------------
// elementwise / broadcast
// ---------------------------------------------------------------------------

template <typename T>
int add(Tape<T>& tp, int a, int b) {
    const Tensor<T>&A = tp.val(a), &B = tp.val(b);
    if (!A.same_shape(B))
        throw ShapeError("add: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor<T> y = A;
    for (std::int64_t i = 0; i < y.size(); ++i) y.v[i] += B.v[i];
    return tp.push(std::move(y), [a, b](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        t.add_grad(a, g);
        t.add_grad(b, g);
    });
}

// x[N x D] + b[D], broadcast over rows.
template <typename T>
int add_rowvec(Tape<T>& tp, int x, int b) {
    const Tensor<T>&X = tp.val(x), &B = tp.val(b);
    if (X.rank() != 2 || B.size() != X.extent(1))
        throw ShapeError("add_rowvec: need [NxD] + [D], got " + shape_str(X.shape) + " + " + shape_str(B.shape));
    Tensor<T> y = X;
    const int N = X.extent(0), D = X.extent(1);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j) y.at(i, j) += B.at(j);
    return tp.push(std::move(y), [x, b, N, D](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        t.add_grad(x, g);
        Tensor<T>& gb = t.grad(b);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < D; ++j) gb.at(j) += g.at(i, j);
    });
}

template <typename T>
int scale(Tape<T>& tp, int x, T s) {
    Tensor<T> y = tp.val(x);
    for (auto& e : y.v) e *= s;
    return tp.push(std::move(y), [x, s](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (std::int64_t i = 0; i < g.size(); ++i) gx.v[i] += s * g.v[i];
    });
}

// Elementwise x * Phi(x) with the exact Gaussian CDF.
template <typename T>
int gelu(Tape<T>& tp, int x) {
    const Tensor<T>& X = tp.val(x);
    require_finite(X, "gelu");
    Tensor<T> y = X;
    for (auto& e : y.v) {
        double xv = static_cast<double>(e);
        e = static_cast<T>(xv * 0.5 * (1.0 + std::erf(xv * M_SQRT1_2)));
    }
    return tp.push(std::move(y), [x](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& X2 = t.val(x);
        Tensor<T>& gx = t.grad(x);
        for (std::int64_t i = 0; i < g.size(); ++i) {
            double xv = static_cast<double>(X2.v[i]);
            double phi = std::exp(-0.5 * xv * xv) / std::sqrt(2.0 * M_PI);
            double cdf = 0.5 * (1.0 + std::erf(xv * M_SQRT1_2));
            gx.v[i] += g.v[i] * static_cast<T>(cdf + xv * phi);
        }
    });
}

// ---------------------------------------------------------------------------
// matmul and layout ops
// ---------------------------------------------------------------------------

template <typename T>
int matmul(Tape<T>& tp, int a, int b) {
    const Tensor<T>&A = tp.val(a), &B = tp.val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.extent(1) != B.extent(0))
        throw ShapeError("matmul: " + shape_str(A.shape) + " x " + shape_str(B.shape));
    const int m = A.extent(0), k = A.extent(1), n = B.extent(1);
    Tensor<T> y({m, n});
    for (int i = 0; i < m; ++i) {
        const T* ai = A.data() + static_cast<size_t>(i) * k;
        T* yi = y.data() + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = B.data() + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) yi[j] += av * bp[j];
        }
    }
    return tp.push(std::move(y), [a, b, m, k, n](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>&A2 = t.val(a), &B2 = t.val(b);
        Tensor<T>&ga = t.grad(a), &gb = t.grad(b);
        // gA += g B^T
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const T gv = g.at(i, j);
                if (gv == T(0)) continue;
                const T* bj = B2.data() + static_cast<size_t>(j);
                T* gai = ga.data() + static_cast<size_t>(i) * k;
                for (int p = 0; p < k; ++p) gai[p] += gv * bj[static_cast<size_t>(p) * n];
            }
        // gB += A^T g
        for (int p = 0; p < k; ++p)
            for (int i = 0; i < m; ++i) {
                const T av = A2.at(i, p);
                if (av == T(0)) continue;
                const T* gi = g.data() + static_cast<size_t>(i) * n;
                T* gbp = gb.data() + static_cast<size_t>(p) * n;
                for (int j = 0; j < n; ++j) gbp[j] += av * gi[j];
            }
    });
}

// A [m x k] * B^T with B [n x k].
template <typename T>
int matmul_nt(Tape<T>& tp, int a, int b) {
    const Tensor<T>&A = tp.val(a), &B = tp.val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.extent(1) != B.extent(1))
        throw ShapeError("matmul_nt: " + shape_str(A.shape) + " x " + shape_str(B.shape) + "^T");
    const int m = A.extent(0), k = A.extent(1), n = B.extent(0);
    Tensor<T> y({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            const T* ai = A.data() + static_cast<size_t>(i) * k;
            const T* bj = B.data() + static_cast<size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            y.at(i, j) = acc;
        }
    return tp.push(std::move(y), [a, b, m, k, n](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>&A2 = t.val(a), &B2 = t.val(b);
        Tensor<T>&ga = t.grad(a), &gb = t.grad(b);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                const T gv = g.at(i, j);
                if (gv == T(0)) continue;
                const T* bj = B2.data() + static_cast<size_t>(j) * k;
                const T* ai = A2.data() + static_cast<size_t>(i) * k;
                T* gai = ga.data() + static_cast<size_t>(i) * k;
                T* gbj = gb.data() + static_cast<size_t>(j) * k;
                for (int p = 0; p < k; ++p) {
                    gai[p] += gv * bj[p];
                    gbj[p] += gv * ai[p];
                }
            }
    });
}

template <typename T>
int reshape(Tape<T>& tp, int x, Shape s) {
    const Tensor<T>& X = tp.val(x);
    if (numel(s) != X.size())
        throw ShapeError("reshape: " + shape_str(X.shape) + " -> " + shape_str(s));
    Tensor<T> y(s, X.v);
    return tp.push(std::move(y), [x](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (std::int64_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i];
    });
}

template <typename T>
int slice_cols(Tape<T>& tp, int x, int start, int len) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 2 || start < 0 || start + len > X.extent(1))
        throw ShapeError("slice_cols: bad range");
    const int N = X.extent(0);
    Tensor<T> y({N, len});
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < len; ++j) y.at(i, j) = X.at(i, start + j);
    return tp.push(std::move(y), [x, start, len, N](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < len; ++j) gx.at(i, start + j) += g.at(i, j);
    });
}

// Select rows of x [N x D] by index (duplicates allowed).
template <typename T>
int gather_rows(Tape<T>& tp, int x, std::vector<int> indices) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 2) throw ShapeError("gather_rows: need rank 2");
    const int D = X.extent(1);
    for (int r : indices)
        if (r < 0 || r >= X.extent(0)) throw ShapeError("gather_rows: index out of range");
    Tensor<T> y({static_cast<int>(indices.size()), D});
    for (size_t i = 0; i < indices.size(); ++i)
        for (int j = 0; j < D; ++j) y.at(static_cast<int>(i), j) = X.at(indices[i], j);
    return tp.push(std::move(y), [x, indices = std::move(indices), D](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (size_t i = 0; i < indices.size(); ++i)
            for (int j = 0; j < D; ++j) gx.at(indices[i], j) += g.at(static_cast<int>(i), j);
    });
}

template <typename T>
int slice_rows(Tape<T>& tp, int x, int start, int len) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 2 || start < 0 || start + len > X.extent(0))
        throw ShapeError("slice_rows: bad range");
    const int D = X.extent(1);
    Tensor<T> y({len, D});
    for (int i = 0; i < len; ++i)
        for (int j = 0; j < D; ++j) y.at(i, j) = X.at(start + i, j);
    return tp.push(std::move(y), [x, start, len, D](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (int i = 0; i < len; ++i)
            for (int j = 0; j < D; ++j) gx.at(start + i, j) += g.at(i, j);
    });
}

template <typename T>
int row(Tape<T>& tp, int x, int r) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 2 || r < 0 || r >= X.extent(0)) throw ShapeError("row: bad index");
    const int D = X.extent(1);
    Tensor<T> y({1, D});
    for (int j = 0; j < D; ++j) y.at(0, j) = X.at(r, j);
    return tp.push(std::move(y), [x, r, D](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (int j = 0; j < D; ++j) gx.at(r, j) += g.at(0, j);
    });
}

template <typename T>
int concat_cols(Tape<T>& tp, const std::vector<int>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty");
    const int N = tp.val(parts[0]).extent(0);
    int D = 0;
    for (int p : parts) {
        const Tensor<T>& P = tp.val(p);
        if (P.rank() != 2 || P.extent(0) != N) throw ShapeError("concat_cols: row mismatch");
        D += P.extent(1);
    }
    Tensor<T> y({N, D});
    std::vector<int> offs;
    int off = 0;
    for (int p : parts) {
        const Tensor<T>& P = tp.val(p);
        offs.push_back(off);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < P.extent(1); ++j) y.at(i, off + j) = P.at(i, j);
        off += P.extent(1);
    }
    return tp.push(std::move(y), [parts, offs, N](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        for (size_t k = 0; k < parts.size(); ++k) {
            Tensor<T>& gp = t.grad(parts[k]);
            const int d = gp.extent(1), o = offs[k];
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < d; ++j) gp.at(i, j) += g.at(i, o + j);
        }
    });
}

template <typename T>
int concat_rows(Tape<T>& tp, const std::vector<int>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty");
    const int D = tp.val(parts[0]).extent(1);
    int N = 0;
    for (int p : parts) {
        const Tensor<T>& P = tp.val(p);
        if (P.rank() != 2 || P.extent(1) != D) throw ShapeError("concat_rows: col mismatch");
        N += P.extent(0);
    }
    Tensor<T> y({N, D});
    std::vector<int> offs;
    int off = 0;
    for (int p : parts) {
        const Tensor<T>& P = tp.val(p);
        offs.push_back(off);
        std::copy(P.v.begin(), P.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(off) * D);
        off += P.extent(0);
    }
    return tp.push(std::move(y), [parts, offs, D](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        for (size_t k = 0; k < parts.size(); ++k) {
            Tensor<T>& gp = t.grad(parts[k]);
            const int n = gp.extent(0), o = offs[k];
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < D; ++j) gp.at(i, j) += g.at(o + i, j);
        }
    });
}

template <typename T>
int mean_rows(Tape<T>& tp, int x) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 2) throw ShapeError("mean_rows: need rank 2");
    const int N = X.extent(0), D = X.extent(1);
    Tensor<T> y({1, D});
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < D; ++j) y.at(0, j) += X.at(i, j);
    for (int j = 0; j < D; ++j) y.at(0, j) /= static_cast<T>(N);
    return tp.push(std::move(y), [x, N, D](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < D; ++j) gx.at(i, j) += g.at(0, j) / static_cast<T>(N);
    });
}

// Scalar projection sum_i w[i] * x[i] with constant weights (attribution targets).
template <typename T>
int dot_const(Tape<T>& tp, int x, std::vector<T> w) {
    const Tensor<T>& X = tp.val(x);
    if (static_cast<std::int64_t>(w.size()) != X.size()) throw ShapeError("dot_const: length mismatch");
    T acc = T(0);
    for (std::int64_t i = 0; i < X.size(); ++i) acc += w[static_cast<size_t>(i)] * X.v[i];
    return tp.push(Tensor<T>::scalar(acc), [x, w = std::move(w)](Tape<T>& t, int self) {
        const T gv = t.grad(self).v[0];
        Tensor<T>& gx = t.grad(x);
        for (size_t i = 0; i < w.size(); ++i) gx.v[i] += gv * w[i];
    });
}

// ---------------------------------------------------------------------------
// convolutions (valid padding, stride 1, cross-correlation)
// ---------------------------------------------------------------------------

// x [Cin x Ch x T], kernels [Cout x Cin x kt] spanning time only.
template <typename T>
int conv_temporal(Tape<T>& tp, int x, int k) {
    const Tensor<T>&X = tp.val(x), &K = tp.val(k);
    if (X.rank() != 3 || K.rank() != 3)
        throw ShapeError("conv_temporal: need x rank 3 and kernels rank 3");
    if (K.extent(1) != X.extent(0))
        throw ShapeError("conv_temporal: kernel in-channels " + std::to_string(K.extent(1)) +
                         " != input channels " + std::to_string(X.extent(0)));
    const int cin = X.extent(0), ch = X.extent(1), tlen = X.extent(2);
    const int cout = K.extent(0), kt = K.extent(2);
    if (tlen < kt)
        throw ShapeError("conv_temporal: time extent " + std::to_string(tlen) + " < kernel taps " +
                         std::to_string(kt));
    const int to = tlen - kt + 1;
    Tensor<T> y({cout, ch, to});
    for (int o = 0; o < cout; ++o)
        for (int i = 0; i < cin; ++i) {
            const T* kr = K.data() + (static_cast<size_t>(o) * cin + i) * kt;
            for (int c = 0; c < ch; ++c) {
                const T* xr = X.data() + (static_cast<size_t>(i) * ch + c) * tlen;
                T* yr = y.data() + (static_cast<size_t>(o) * ch + c) * to;
                for (int t = 0; t < to; ++t) {
                    T acc = T(0);
                    for (int q = 0; q < kt; ++q) acc += kr[q] * xr[t + q];
                    yr[t] += acc;
                }
            }
        }
    return tp.push(std::move(y), [x, k, cin, ch, tlen, cout, kt, to](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>&X2 = t.val(x), &K2 = t.val(k);
        Tensor<T>&gx = t.grad(x), &gk = t.grad(k);
        for (int o = 0; o < cout; ++o)
            for (int i = 0; i < cin; ++i) {
                const T* kr = K2.data() + (static_cast<size_t>(o) * cin + i) * kt;
                T* gkr = gk.data() + (static_cast<size_t>(o) * cin + i) * kt;
                for (int c = 0; c < ch; ++c) {
                    const T* xr = X2.data() + (static_cast<size_t>(i) * ch + c) * tlen;
                    T* gxr = gx.data() + (static_cast<size_t>(i) * ch + c) * tlen;
                    const T* gr = g.data() + (static_cast<size_t>(o) * ch + c) * to;
                    for (int tt = 0; tt < to; ++tt) {
                        const T gv = gr[tt];
                        if (gv == T(0)) continue;
                        for (int q = 0; q < kt; ++q) {
                            gxr[tt + q] += gv * kr[q];
                            gkr[q] += gv * xr[tt + q];
                        }
                    }
                }
            }
    });
}

// x [F x Ch x T], kernels [F2 x F x Ch] spanning the full channel extent.
template <typename T>
int conv_spatial(Tape<T>& tp, int x, int k) {
    const Tensor<T>&X = tp.val(x), &K = tp.val(k);
    if (X.rank() != 3 || K.rank() != 3)
        throw ShapeError("conv_spatial: need x rank 3 and kernels rank 3");
    if (K.extent(1) != X.extent(0) || K.extent(2) != X.extent(1))
        throw ShapeError("conv_spatial: kernel " + shape_str(K.shape) + " does not span input " +
                         shape_str(X.shape));
    const int f = X.extent(0), ch = X.extent(1), tlen = X.extent(2);
    const int f2 = K.extent(0);
    Tensor<T> y({f2, 1, tlen});
    for (int o = 0; o < f2; ++o) {
        T* yr = y.data() + static_cast<size_t>(o) * tlen;
        for (int i = 0; i < f; ++i)
            for (int c = 0; c < ch; ++c) {
                const T kv = K.at(o, i, c);
                const T* xr = X.data() + (static_cast<size_t>(i) * ch + c) * tlen;
                for (int t = 0; t < tlen; ++t) yr[t] += kv * xr[t];
            }
    }
    return tp.push(std::move(y), [x, k, f, ch, tlen, f2](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>&X2 = t.val(x), &K2 = t.val(k);
        Tensor<T>&gx = t.grad(x), &gk = t.grad(k);
        for (int o = 0; o < f2; ++o) {
            const T* gr = g.data() + static_cast<size_t>(o) * tlen;
            for (int i = 0; i < f; ++i)
                for (int c = 0; c < ch; ++c) {
                    const T kv = K2.at(o, i, c);
                    const T* xr = X2.data() + (static_cast<size_t>(i) * ch + c) * tlen;
                    T* gxr = gx.data() + (static_cast<size_t>(i) * ch + c) * tlen;
                    T acc = T(0);
                    for (int t = 0; t < tlen; ++t) {
                        gxr[t] += gr[t] * kv;
                        acc += gr[t] * xr[t];
                    }
                    gk.at(o, i, c) += acc;
                }
        }
    });
}

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

// Per-feature batch statistics over the batch and length axes of x [N x C x L].
template <typename T>
struct BatchNormOut {
    int id = -1;
    std::vector<double> batch_mean;
    std::vector<double> batch_var;  // biased
};

template <typename T>
BatchNormOut<T> batch_norm_train(Tape<T>& tp, int x, int gamma, int beta, double eps) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 3) throw ShapeError("batch_norm: need [N x C x L]");
    const int N = X.extent(0), C = X.extent(1), L = X.extent(2);
    if (tp.val(gamma).size() != C || tp.val(beta).size() != C)
        throw ShapeError("batch_norm: gamma/beta must have C entries");
    const std::int64_t m = static_cast<std::int64_t>(N) * L;
    if (m < 2) throw NumericError("batch_norm: batch-and-time population of 1 (undefined variance)");

    std::vector<double> mean(C, 0.0), var(C, 0.0);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* xr = X.data() + (static_cast<size_t>(n) * C + c) * L;
            double s = 0.0;
            for (int l = 0; l < L; ++l) s += static_cast<double>(xr[l]);
            mean[static_cast<size_t>(c)] += s;
        }
    for (int c = 0; c < C; ++c) mean[static_cast<size_t>(c)] /= static_cast<double>(m);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const T* xr = X.data() + (static_cast<size_t>(n) * C + c) * L;
            double s = 0.0;
            for (int l = 0; l < L; ++l) {
                double d = static_cast<double>(xr[l]) - mean[static_cast<size_t>(c)];
                s += d * d;
            }
            var[static_cast<size_t>(c)] += s;
        }
    for (int c = 0; c < C; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(m);

    const Tensor<T>&G = tp.val(gamma), &B = tp.val(beta);
    Tensor<T> y(X.shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
            const double mu = mean[static_cast<size_t>(c)];
            const double gv = static_cast<double>(G.at(c)), bv = static_cast<double>(B.at(c));
            const T* xr = X.data() + (static_cast<size_t>(n) * C + c) * L;
            T* yr = y.data() + (static_cast<size_t>(n) * C + c) * L;
            for (int l = 0; l < L; ++l)
                yr[l] = static_cast<T>(gv * ((static_cast<double>(xr[l]) - mu) * inv) + bv);
        }

    BatchNormOut<T> out;
    out.batch_mean = mean;
    out.batch_var = var;
    out.id = tp.push(std::move(y), [x, gamma, beta, eps, N, C, L, m, mean, var](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>&X2 = t.val(x), &G2 = t.val(gamma);
        Tensor<T>&gx = t.grad(x), &gg = t.grad(gamma), &gb = t.grad(beta);
        for (int c = 0; c < C; ++c) {
            const double mu = mean[static_cast<size_t>(c)];
            const double inv = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
            const double gv = static_cast<double>(G2.at(c));
            double sum_g = 0.0, sum_gxhat = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* xr = X2.data() + (static_cast<size_t>(n) * C + c) * L;
                const T* gr = g.data() + (static_cast<size_t>(n) * C + c) * L;
                for (int l = 0; l < L; ++l) {
                    const double xhat = (static_cast<double>(xr[l]) - mu) * inv;
                    sum_g += static_cast<double>(gr[l]);
                    sum_gxhat += static_cast<double>(gr[l]) * xhat;
                }
            }
            gb.at(c) += static_cast<T>(sum_g);
            gg.at(c) += static_cast<T>(sum_gxhat);
            const double md = static_cast<double>(m);
            for (int n = 0; n < N; ++n) {
                const T* xr = X2.data() + (static_cast<size_t>(n) * C + c) * L;
                const T* gr = g.data() + (static_cast<size_t>(n) * C + c) * L;
                T* gxr = gx.data() + (static_cast<size_t>(n) * C + c) * L;
                for (int l = 0; l < L; ++l) {
                    const double xhat = (static_cast<double>(xr[l]) - mu) * inv;
                    const double d =
                        gv * inv * (static_cast<double>(gr[l]) - sum_g / md - xhat * sum_gxhat / md);
                    gxr[l] += static_cast<T>(d);
                }
            }
        }
    });
    return out;
}

template <typename T>
int batch_norm_eval(Tape<T>& tp, int x, int gamma, int beta, const std::vector<double>& run_mean,
                    const std::vector<double>& run_var, double eps) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 3) throw ShapeError("batch_norm: need [N x C x L]");
    const int N = X.extent(0), C = X.extent(1), L = X.extent(2);
    if (static_cast<int>(run_mean.size()) != C || static_cast<int>(run_var.size()) != C)
        throw ShapeError("batch_norm: running stats size mismatch");
    const Tensor<T>&G = tp.val(gamma), &B = tp.val(beta);
    Tensor<T> y(X.shape);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(run_var[static_cast<size_t>(c)] + eps);
            const double mu = run_mean[static_cast<size_t>(c)];
            const double gv = static_cast<double>(G.at(c)), bv = static_cast<double>(B.at(c));
            const T* xr = X.data() + (static_cast<size_t>(n) * C + c) * L;
            T* yr = y.data() + (static_cast<size_t>(n) * C + c) * L;
            for (int l = 0; l < L; ++l)
                yr[l] = static_cast<T>(gv * ((static_cast<double>(xr[l]) - mu) * inv) + bv);
        }
    return tp.push(std::move(y), [x, gamma, beta, run_mean, run_var, eps, N, C, L](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>&X2 = t.val(x), &G2 = t.val(gamma);
        Tensor<T>&gx = t.grad(x), &gg = t.grad(gamma), &gb = t.grad(beta);
        for (int c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(run_var[static_cast<size_t>(c)] + eps);
            const double mu = run_mean[static_cast<size_t>(c)];
            const double gv = static_cast<double>(G2.at(c));
            double sum_g = 0.0, sum_gxhat = 0.0;
            for (int n = 0; n < N; ++n) {
                const T* xr = X2.data() + (static_cast<size_t>(n) * C + c) * L;
                const T* gr = g.data() + (static_cast<size_t>(n) * C + c) * L;
                T* gxr = gx.data() + (static_cast<size_t>(n) * C + c) * L;
                for (int l = 0; l < L; ++l) {
                    const double xhat = (static_cast<double>(xr[l]) - mu) * inv;
                    sum_g += static_cast<double>(gr[l]);
                    sum_gxhat += static_cast<double>(gr[l]) * xhat;
                    gxr[l] += static_cast<T>(static_cast<double>(gr[l]) * gv * inv);
                }
            }
            gb.at(c) += static_cast<T>(sum_g);
            gg.at(c) += static_cast<T>(sum_gxhat);
        }
    });
}

// Layer normalization over the feature (last) axis of x [N x D].
template <typename T>
int layer_norm(Tape<T>& tp, int x, int gamma, int beta, double eps) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 2) throw ShapeError("layer_norm: need [N x D]");
    const int N = X.extent(0), D = X.extent(1);
    if (D < 2) throw NumericError("layer_norm: feature extent 1 has undefined variance");
    if (tp.val(gamma).size() != D || tp.val(beta).size() != D)
        throw ShapeError("layer_norm: gamma/beta must have D entries");
    const Tensor<T>&G = tp.val(gamma), &B = tp.val(beta);
    Tensor<T> y(X.shape);
    std::vector<double> means(static_cast<size_t>(N)), invs(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        double mu = 0.0;
        for (int j = 0; j < D; ++j) mu += static_cast<double>(X.at(i, j));
        mu /= D;
        double var = 0.0;
        for (int j = 0; j < D; ++j) {
            double d = static_cast<double>(X.at(i, j)) - mu;
            var += d * d;
        }
        var /= D;
        const double inv = 1.0 / std::sqrt(var + eps);
        means[static_cast<size_t>(i)] = mu;
        invs[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < D; ++j)
            y.at(i, j) = static_cast<T>(static_cast<double>(G.at(j)) *
                                            ((static_cast<double>(X.at(i, j)) - mu) * inv) +
                                        static_cast<double>(B.at(j)));
    }
    return tp.push(std::move(y),
                   [x, gamma, beta, N, D, means = std::move(means), invs = std::move(invs)](Tape<T>& t,
                                                                                            int self) {
                       const Tensor<T>& g = t.grad(self);
                       const Tensor<T>&X2 = t.val(x), &G2 = t.val(gamma);
                       Tensor<T>&gx = t.grad(x), &gg = t.grad(gamma), &gb = t.grad(beta);
                       for (int i = 0; i < N; ++i) {
                           const double mu = means[static_cast<size_t>(i)];
                           const double inv = invs[static_cast<size_t>(i)];
                           double sum_d = 0.0, sum_dx = 0.0;
                           for (int j = 0; j < D; ++j) {
                               const double xhat = (static_cast<double>(X2.at(i, j)) - mu) * inv;
                               const double dxh =
                                   static_cast<double>(g.at(i, j)) * static_cast<double>(G2.at(j));
                               sum_d += dxh;
                               sum_dx += dxh * xhat;
                               gg.at(j) += static_cast<T>(static_cast<double>(g.at(i, j)) * xhat);
                               gb.at(j) += g.at(i, j);
                           }
                           for (int j = 0; j < D; ++j) {
                               const double xhat = (static_cast<double>(X2.at(i, j)) - mu) * inv;
                               const double dxh =
                                   static_cast<double>(g.at(i, j)) * static_cast<double>(G2.at(j));
                               gx.at(i, j) +=
                                   static_cast<T>(inv * (dxh - sum_d / D - xhat * sum_dx / D));
                           }
                       }
                   });
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

// Non-overlapping max pooling along time; trailing remainder dropped.
template <typename T>
int max_pool_time(Tape<T>& tp, int x, int window) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 3) throw ShapeError("max_pool_time: need rank 3");
    if (window < 1) throw ShapeError("max_pool_time: window must be >= 1");
    const int C = X.extent(0), Ch = X.extent(1), tlen = X.extent(2);
    if (tlen < window)
        throw ShapeError("max_pool_time: time extent " + std::to_string(tlen) + " < window " +
                         std::to_string(window));
    const int to = tlen / window;
    Tensor<T> y({C, Ch, to});
    std::vector<int> arg(static_cast<size_t>(C) * Ch * to);
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < Ch; ++h) {
            const T* xr = X.data() + (static_cast<size_t>(c) * Ch + h) * tlen;
            T* yr = y.data() + (static_cast<size_t>(c) * Ch + h) * to;
            int* ar = arg.data() + (static_cast<size_t>(c) * Ch + h) * to;
            for (int t = 0; t < to; ++t) {
                int best = t * window;
                for (int q = 1; q < window; ++q)
                    if (xr[t * window + q] > xr[best]) best = t * window + q;
                yr[t] = xr[best];
                ar[t] = best;
            }
        }
    return tp.push(std::move(y), [x, arg = std::move(arg), C, Ch, tlen, to](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < Ch; ++h) {
                const int* ar = arg.data() + (static_cast<size_t>(c) * Ch + h) * to;
                const T* gr = g.data() + (static_cast<size_t>(c) * Ch + h) * to;
                T* gxr = gx.data() + (static_cast<size_t>(c) * Ch + h) * tlen;
                for (int tt = 0; tt < to; ++tt) gxr[ar[tt]] += gr[tt];
            }
    });
}

// x [F x 1 x T] -> [F]: per-feature maximum over all time steps.
template <typename T>
int global_max_pool_time(Tape<T>& tp, int x) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 3 || X.extent(1) != 1) throw ShapeError("global_max_pool_time: need [F x 1 x T]");
    const int F = X.extent(0), tlen = X.extent(2);
    Tensor<T> y({F});
    std::vector<int> arg(static_cast<size_t>(F));
    for (int f = 0; f < F; ++f) {
        const T* xr = X.data() + static_cast<size_t>(f) * tlen;
        int best = 0;
        for (int t = 1; t < tlen; ++t)
            if (xr[t] > xr[best]) best = t;
        y.at(f) = xr[best];
        arg[static_cast<size_t>(f)] = best;
    }
    return tp.push(std::move(y), [x, arg = std::move(arg), F, tlen](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (int f = 0; f < F; ++f)
            gx.v[static_cast<size_t>(f) * tlen + arg[static_cast<size_t>(f)]] += g.at(f);
    });
}

// ---------------------------------------------------------------------------
// softmax / attention / FFN / loss
// ---------------------------------------------------------------------------

template <typename T>
int softmax_rows(Tape<T>& tp, int x) {
    const Tensor<T>& X = tp.val(x);
    if (X.rank() != 2) throw ShapeError("softmax_rows: need [N x D]");
    const int N = X.extent(0), D = X.extent(1);
    Tensor<T> y(X.shape);
    for (int i = 0; i < N; ++i) {
        T mx = X.at(i, 0);
        for (int j = 1; j < D; ++j) mx = std::max(mx, X.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < D; ++j) {
            double e = std::exp(static_cast<double>(X.at(i, j) - mx));
            y.at(i, j) = static_cast<T>(e);
            sum += e;
        }
        for (int j = 0; j < D; ++j) y.at(i, j) = static_cast<T>(static_cast<double>(y.at(i, j)) / sum);
    }
    return tp.push(std::move(y), [x, N, D](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        const Tensor<T>& Y = t.val(self);
        Tensor<T>& gx = t.grad(x);
        for (int i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int j = 0; j < D; ++j) dot += static_cast<double>(g.at(i, j)) * Y.at(i, j);
            for (int j = 0; j < D; ++j)
                gx.at(i, j) += static_cast<T>(Y.at(i, j) * (static_cast<double>(g.at(i, j)) - dot));
        }
    });
}

// Parameter ids for one multi-head attention block (combined head matrices,
// columns partitioned per head; projections are bias-free).
struct AttnParamIds {
    int wq = -1, wk = -1, wv = -1, wo = -1;
};

// Scaled dot-product multi-head attention over row sequences q,k,v [N x d].
template <typename T>
int multi_head_attention(Tape<T>& tp, int q, int k, int v, const AttnParamIds& w, int heads) {
    const int d = tp.val(q).extent(1);
    if (heads < 1 || d % heads != 0)
        throw ConfigError("multi_head_attention: model dim " + std::to_string(d) +
                          " not divisible by head count " + std::to_string(heads));
    const int dh = d / heads;
    const int Q = matmul(tp, q, w.wq);
    const int K = matmul(tp, k, w.wk);
    const int V = matmul(tp, v, w.wv);
    std::vector<int> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (int h = 0; h < heads; ++h) {
        const int qh = slice_cols(tp, Q, h * dh, dh);
        const int kh = slice_cols(tp, K, h * dh, dh);
        const int vh = slice_cols(tp, V, h * dh, dh);
        const int scores = scale(tp, matmul_nt(tp, qh, kh), sc);
        const int attn = softmax_rows(tp, scores);
        head_outs.push_back(matmul(tp, attn, vh));
    }
    return matmul(tp, concat_cols(tp, head_outs), w.wo);
}

// Position-wise W2 * GELU(W1 x + b1) + b2.
template <typename T>
int feed_forward(Tape<T>& tp, int x, int w1, int b1, int w2, int b2) {
    const int h = gelu(tp, add_rowvec(tp, matmul(tp, x, w1), b1));
    return add_rowvec(tp, matmul(tp, h, w2), b2);
}

// Residual add followed by layer normalization.
template <typename T>
int layer_norm_residual(Tape<T>& tp, int x, int sub, int gamma, int beta, double eps = 1e-5) {
    return layer_norm(tp, add(tp, x, sub), gamma, beta, eps);
}

// Mean over the batch of -log softmax(logits)[label], max-stabilized.
template <typename T>
int cross_entropy(Tape<T>& tp, int logits, const std::vector<int>& labels) {
    const Tensor<T>& X = tp.val(logits);
    if (X.rank() != 2) throw ShapeError("cross_entropy: logits must be [B x C]");
    require_finite(X, "cross_entropy");
    const int B = X.extent(0), C = X.extent(1);
    if (static_cast<int>(labels.size()) != B) throw ShapeError("cross_entropy: label count mismatch");
    for (int l : labels)
        if (l < 0 || l >= C)
            throw ConfigError("cross_entropy: label " + std::to_string(l) + " out of range [0," +
                              std::to_string(C) + ")");
    double total = 0.0;
    for (int i = 0; i < B; ++i) {
        double mx = static_cast<double>(X.at(i, 0));
        for (int j = 1; j < C; ++j) mx = std::max(mx, static_cast<double>(X.at(i, j)));
        double sum = 0.0;
        for (int j = 0; j < C; ++j) sum += std::exp(static_cast<double>(X.at(i, j)) - mx);
        total += std::log(sum) - (static_cast<double>(X.at(i, labels[static_cast<size_t>(i)])) - mx);
    }
    Tensor<T> y = Tensor<T>::scalar(static_cast<T>(total / B));
    return tp.push(std::move(y), [logits, labels, B, C](Tape<T>& t, int self) {
        const T gv = t.grad(self).v[0];
        const Tensor<T>& X2 = t.val(logits);
        Tensor<T>& gx = t.grad(logits);
        for (int i = 0; i < B; ++i) {
            double mx = static_cast<double>(X2.at(i, 0));
            for (int j = 1; j < C; ++j) mx = std::max(mx, static_cast<double>(X2.at(i, j)));
            double sum = 0.0;
            for (int j = 0; j < C; ++j) sum += std::exp(static_cast<double>(X2.at(i, j)) - mx);
            for (int j = 0; j < C; ++j) {
                double p = std::exp(static_cast<double>(X2.at(i, j)) - mx) / sum;
                double d = (p - (labels[static_cast<size_t>(i)] == j ? 1.0 : 0.0)) / B;
                gx.at(i, j) += static_cast<T>(static_cast<double>(gv) * d);
            }
        }
    });
}

// Inverted dropout with a seeded mask; identity when p == 0.
template <typename T>
int dropout(Tape<T>& tp, int x, double p, Rng& rng) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw ConfigError("dropout: p must be < 1");
    const Tensor<T>& X = tp.val(x);
    std::vector<T> mask(static_cast<size_t>(X.size()));
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (auto& m : mask) m = (rng.uniform() < p) ? T(0) : keep_scale;
    Tensor<T> y = X;
    for (std::int64_t i = 0; i < y.size(); ++i) y.v[i] *= mask[static_cast<size_t>(i)];
    return tp.push(std::move(y), [x, mask = std::move(mask)](Tape<T>& t, int self) {
        const Tensor<T>& g = t.grad(self);
        Tensor<T>& gx = t.grad(x);
        for (std::int64_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i] * mask[static_cast<size_t>(i)];
    });
}

}  // namespace fast::num
