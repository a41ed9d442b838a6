#include <cmath>
#include <vector>

#include "doctest.h"
#include "fast/gradcheck.hpp"
#include "fast/ops.hpp"
#include "fast/optim.hpp"
#include "fast/rng.hpp"
#include "oracles.hpp"

using namespace fast;
using namespace fast::num;

namespace {

TensorD random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    TensorD t(std::move(s));
    for (auto& v : t.v) v = rng.normal() * scale;
    return t;
}

// Finite-difference check of d(sum-of-squares of op output)/d(input) for a
// unary tape op. Uses a quadratic readout so every output element matters.
template <typename BuildFn>
double fd_check_unary(TensorD x, BuildFn build, double h = 1e-5) {
    auto loss_of = [&](const TensorD& in) {
        Tape<double> tp;
        int xi = tp.leaf(in);
        int y = build(tp, xi);
        const TensorD& Y = tp.val(y);
        double acc = 0.0;
        for (double v : Y.v) acc += 0.5 * v * v;
        return acc;
    };
    // analytic
    Tape<double> tp;
    int xi = tp.leaf(x);
    int y = build(tp, xi);
    const TensorD& Y = tp.val(y);
    // seed dL/dy = y by chaining a quadratic node
    double acc = 0.0;
    for (double v : Y.v) acc += 0.5 * v * v;
    int loss = tp.push(TensorD::scalar(acc), [y](Tape<double>& t, int self) {
        const TensorD& Yv = t.val(y);
        TensorD& gy = t.grad(y);
        const double g = t.grad(self).v[0];
        for (std::int64_t i = 0; i < Yv.size(); ++i) gy.v[i] += g * Yv.v[i];
    });
    tp.backward(loss);
    TensorD analytic = tp.has_grad(xi) ? tp.grad(xi) : TensorD::zeros(x.shape);
    auto f = [&]() { return loss_of(x); };
    auto rep = grad_check(f, x, analytic, h);
    return rep.max_rel_err;
}

}  // namespace

TEST_CASE("gelu values") {
    Tape<double> tp;
    int x = tp.leaf(TensorD({3}, {0.0, 10.0, 1.0}));
    int y = gelu(tp, x);
    CHECK(tp.val(y).at(0) == 0.0);
    CHECK(tp.val(y).at(1) == doctest::Approx(10.0).epsilon(1e-10));
    // independent erf-series oracle for Phi(1)
    const double expect = 1.0 * oracle::phi_series(1.0);
    CHECK(tp.val(y).at(2) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(tp.val(y).at(2) == doctest::Approx(0.841345).epsilon(1e-6));
}

TEST_CASE("gelu rejects non-finite input") {
    Tape<double> tp;
    int x = tp.leaf(TensorD({1}, {std::nan("")}));
    CHECK_THROWS_AS(gelu(tp, x), NumericError);
}

TEST_CASE("gelu gradient vs finite differences") {
    Rng rng(7);
    TensorD x = random_tensor({11}, rng, 1.5);
    double err = fd_check_unary(x, [](Tape<double>& tp, int xi) { return gelu(tp, xi); }, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("conv_temporal trivial kernels") {
    // constant input, difference kernel kills DC
    Tape<double> tp;
    int x = tp.leaf(TensorD::full({1, 2, 8}, 3.25));
    int k = tp.leaf(TensorD({1, 1, 2}, {1.0, -1.0}));
    int y = conv_temporal(tp, x, k);
    for (double v : tp.val(y).v) CHECK(v == 0.0);

    // single-1 kernel crops the input
    Tape<double> tp2;
    Rng rng(3);
    TensorD xin = random_tensor({1, 2, 6}, rng);
    int x2 = tp2.leaf(xin);
    int k2 = tp2.leaf(TensorD({1, 1, 1}, {1.0}));
    int y2 = conv_temporal(tp2, x2, k2);
    CHECK(tp2.val(y2).shape == Shape{1, 2, 6});
    for (std::int64_t i = 0; i < xin.size(); ++i) CHECK(tp2.val(y2).v[i] == xin.v[i]);
}

TEST_CASE("conv_temporal shape and oracle") {
    Rng rng(11);
    TensorD x = random_tensor({1, 4, 20}, rng);
    TensorD k = random_tensor({2, 1, 5}, rng);
    Tape<double> tp;
    int y = conv_temporal(tp, tp.leaf(x), tp.leaf(k));
    CHECK(tp.val(y).shape == Shape{2, 4, 16});
    TensorD want = oracle::conv_temporal_naive(x, k);
    for (std::int64_t i = 0; i < want.size(); ++i)
        CHECK(tp.val(y).v[i] == doctest::Approx(want.v[i]).epsilon(1e-12));
}

TEST_CASE("conv_temporal errors when time shorter than kernel") {
    Tape<double> tp;
    int x = tp.leaf(TensorD::full({1, 1, 3}, 1.0));
    int k = tp.leaf(TensorD::full({1, 1, 5}, 1.0));
    CHECK_THROWS_AS(conv_temporal(tp, x, k), ShapeError);
}

TEST_CASE("conv_temporal gradient") {
    Rng rng(13);
    TensorD x = random_tensor({2, 3, 9}, rng);
    TensorD k = random_tensor({2, 2, 3}, rng);
    double ex = fd_check_unary(x, [&](Tape<double>& tp, int xi) {
        return conv_temporal(tp, xi, tp.leaf(k));
    });
    CHECK(ex < 1e-4);
    double ek = fd_check_unary(k, [&](Tape<double>& tp, int ki) {
        return conv_temporal(tp, tp.leaf(x), ki);
    });
    CHECK(ek < 1e-4);
}

TEST_CASE("conv_spatial trivial kernels") {
    Rng rng(5);
    TensorD x = random_tensor({1, 4, 7}, rng);
    // uniform averaging kernel -> per-time channel mean
    Tape<double> tp;
    int y = conv_spatial(tp, tp.leaf(x), tp.leaf(TensorD::full({1, 1, 4}, 0.25)));
    for (int t = 0; t < 7; ++t) {
        double mean = 0.0;
        for (int c = 0; c < 4; ++c) mean += x.at(0, c, t);
        mean /= 4.0;
        CHECK(tp.val(y).at(0, 0, t) == doctest::Approx(mean).epsilon(1e-12));
    }
    // one-hot kernel selects channel 2
    Tape<double> tp2;
    TensorD onehot({1, 1, 4});
    onehot.at(0, 0, 2) = 1.0;
    int y2 = conv_spatial(tp2, tp2.leaf(x), tp2.leaf(onehot));
    for (int t = 0; t < 7; ++t) CHECK(tp2.val(y2).at(0, 0, t) == x.at(0, 2, t));
}

TEST_CASE("conv_spatial oracle and errors") {
    Rng rng(17);
    TensorD x = random_tensor({2, 3, 10}, rng);
    TensorD k = random_tensor({2, 2, 3}, rng);
    Tape<double> tp;
    int y = conv_spatial(tp, tp.leaf(x), tp.leaf(k));
    CHECK(tp.val(y).shape == Shape{2, 1, 10});
    TensorD want = oracle::conv_spatial_naive(x, k);
    for (std::int64_t i = 0; i < want.size(); ++i)
        CHECK(tp.val(y).v[i] == doctest::Approx(want.v[i]).epsilon(1e-12));

    int bad = tp.leaf(TensorD::full({2, 2, 4}, 1.0));  // channel extent 4 != 3
    CHECK_THROWS_AS(conv_spatial(tp, tp.leaf(x), bad), ShapeError);

    double ex = fd_check_unary(x, [&](Tape<double>& t2, int xi) { return conv_spatial(t2, xi, t2.leaf(k)); });
    CHECK(ex < 1e-4);
}

TEST_CASE("batch_norm forward semantics") {
    // {1,3} normalizes to {-1,+1} before affine
    Tape<double> tp;
    int x = tp.leaf(TensorD({2, 1, 1}, {1.0, 3.0}));
    int g = tp.leaf(TensorD({1}, {1.0}));
    int b = tp.leaf(TensorD({1}, {0.0}));
    auto out = batch_norm_train(tp, x, g, b, 1e-5);
    CHECK(tp.val(out.id).at(0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(tp.val(out.id).at(1, 0, 0) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(out.batch_mean[0] == doctest::Approx(2.0));
    CHECK(out.batch_var[0] == doctest::Approx(1.0));

    // constant input -> ~0 under epsilon guard
    Tape<double> tp2;
    int x2 = tp2.leaf(TensorD::full({1, 2, 6}, 5.0));
    int g2 = tp2.leaf(TensorD::full({2}, 1.0));
    int b2 = tp2.leaf(TensorD::full({2}, 0.0));
    auto o2 = batch_norm_train(tp2, x2, g2, b2, 1e-5);
    for (double v : tp2.val(o2.id).v) CHECK(std::abs(v) < 1e-6);

    // gamma = 0 -> output equals beta
    Tape<double> tp3;
    Rng rng(23);
    int x3 = tp3.leaf(random_tensor({2, 2, 4}, rng));
    int g3 = tp3.leaf(TensorD::full({2}, 0.0));
    int b3 = tp3.leaf(TensorD({2}, {0.5, -0.75}));
    auto o3 = batch_norm_train(tp3, x3, g3, b3, 1e-5);
    for (int n = 0; n < 2; ++n)
        for (int c = 0; c < 2; ++c)
            for (int l = 0; l < 4; ++l)
                CHECK(tp3.val(o3.id).at(n, c, l) == (c == 0 ? 0.5 : -0.75));
}

TEST_CASE("batch_norm rejects population of one") {
    Tape<double> tp;
    int x = tp.leaf(TensorD::full({1, 3, 1}, 1.0));
    int g = tp.leaf(TensorD::full({3}, 1.0));
    int b = tp.leaf(TensorD::full({3}, 0.0));
    CHECK_THROWS_AS(batch_norm_train(tp, x, g, b, 1e-5), NumericError);
}

TEST_CASE("batch_norm gradient (train and eval)") {
    Rng rng(29);
    TensorD x = random_tensor({2, 2, 5}, rng);
    TensorD g({2}, {0.9, 1.2}), b({2}, {0.1, -0.2});
    double ex = fd_check_unary(x, [&](Tape<double>& tp, int xi) {
        return batch_norm_train(tp, xi, tp.leaf(g), tp.leaf(b), 1e-5).id;
    });
    CHECK(ex < 1e-4);
    double eg = fd_check_unary(g, [&](Tape<double>& tp, int gi) {
        return batch_norm_train(tp, tp.leaf(x), gi, tp.leaf(b), 1e-5).id;
    });
    CHECK(eg < 1e-4);
    std::vector<double> rm{0.3, -0.1}, rv{1.4, 0.8};
    double ee = fd_check_unary(x, [&](Tape<double>& tp, int xi) {
        return batch_norm_eval(tp, xi, tp.leaf(g), tp.leaf(b), rm, rv, 1e-5);
    });
    CHECK(ee < 1e-4);
}

TEST_CASE("max_pool_time semantics") {
    Tape<double> tp;
    int x = tp.leaf(TensorD({1, 1, 4}, {1.0, 5.0, 2.0, 4.0}));
    int y = max_pool_time(tp, x, 2);
    CHECK(tp.val(y).shape == Shape{1, 1, 2});
    CHECK(tp.val(y).at(0, 0, 0) == 5.0);
    CHECK(tp.val(y).at(0, 0, 1) == 4.0);

    // window 1 is the identity
    Rng rng(31);
    TensorD r = random_tensor({2, 2, 5}, rng);
    Tape<double> tp2;
    int y2 = max_pool_time(tp2, tp2.leaf(r), 1);
    for (std::int64_t i = 0; i < r.size(); ++i) CHECK(tp2.val(y2).v[i] == r.v[i]);

    // random length-17, window 4 -> length 4, scan oracle per window
    TensorD s = random_tensor({1, 1, 17}, rng);
    Tape<double> tp3;
    int y3 = max_pool_time(tp3, tp3.leaf(s), 4);
    CHECK(tp3.val(y3).shape == Shape{1, 1, 4});
    for (int w = 0; w < 4; ++w) {
        double mx = s.at(0, 0, w * 4);
        for (int q = 1; q < 4; ++q) mx = std::max(mx, s.at(0, 0, w * 4 + q));
        CHECK(tp3.val(y3).at(0, 0, w) == mx);
    }

    Tape<double> tp4;
    int x4 = tp4.leaf(TensorD::full({1, 1, 3}, 0.0));
    CHECK_THROWS_AS(max_pool_time(tp4, x4, 5), ShapeError);

    double err = fd_check_unary(s, [](Tape<double>& t2, int xi) { return max_pool_time(t2, xi, 4); });
    CHECK(err < 1e-4);
}

TEST_CASE("global_max_pool_time semantics") {
    Tape<double> tp;
    int x = tp.leaf(TensorD({3, 1, 1}, {1.0, -2.0, 0.5}));
    int y = global_max_pool_time(tp, x);
    CHECK(tp.val(y).shape == Shape{3});
    CHECK(tp.val(y).at(1) == -2.0);

    // appending sub-maximum time steps leaves the output unchanged
    Rng rng(37);
    TensorD base = random_tensor({4, 1, 40}, rng);
    TensorD padded({4, 1, 60});
    for (int f = 0; f < 4; ++f) {
        for (int t = 0; t < 40; ++t) padded.at(f, 0, t) = base.at(f, 0, t);
        for (int t = 40; t < 60; ++t) padded.at(f, 0, t) = -1e9;
    }
    Tape<double> tp2;
    int ya = global_max_pool_time(tp2, tp2.leaf(base));
    int yb = global_max_pool_time(tp2, tp2.leaf(padded));
    for (int f = 0; f < 4; ++f) CHECK(tp2.val(ya).at(f) == tp2.val(yb).at(f));

    // elementwise max oracle on 32 x 1 x 50
    TensorD big = random_tensor({32, 1, 50}, rng);
    Tape<double> tp3;
    int y3 = global_max_pool_time(tp3, tp3.leaf(big));
    for (int f = 0; f < 32; ++f) {
        double mx = -1e300;
        for (int t = 0; t < 50; ++t) mx = std::max(mx, big.at(f, 0, t));
        CHECK(tp3.val(y3).at(f) == mx);
    }

    double err = fd_check_unary(big, [](Tape<double>& t2, int xi) { return global_max_pool_time(t2, xi); });
    CHECK(err < 1e-4);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(41);
    TensorD x = random_tensor({6, 9}, rng, 3.0);
    Tape<double> tp;
    int y = softmax_rows(tp, tp.leaf(x));
    for (int i = 0; i < 6; ++i) {
        double s = 0.0;
        for (int j = 0; j < 9; ++j) s += tp.val(y).at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    double err = fd_check_unary(x, [](Tape<double>& t2, int xi) { return softmax_rows(t2, xi); });
    CHECK(err < 1e-4);
}

TEST_CASE("multi_head_attention singleton and identity cases") {
    // single token: softmax of a singleton is exactly 1, output = v Wv Wo
    Rng rng(43);
    const int d = 4;
    TensorD v = random_tensor({1, d}, rng);
    TensorD wq = random_tensor({d, d}, rng), wk = random_tensor({d, d}, rng);
    TensorD wv = random_tensor({d, d}, rng), wo = random_tensor({d, d}, rng);
    Tape<double> tp;
    AttnParamIds w{tp.leaf(wq), tp.leaf(wk), tp.leaf(wv), tp.leaf(wo)};
    int q = tp.leaf(v);
    int y = multi_head_attention(tp, q, q, q, w, 2);
    TensorD want = oracle::attention_naive(v, v, v, wq, wk, wv, wo, 2);
    for (int j = 0; j < d; ++j) CHECK(tp.val(y).at(0, j) == doctest::Approx(want.at(0, j)).epsilon(1e-12));

    // identity projections, one head, identical tokens -> output equals token
    TensorD eye({d, d});
    for (int i = 0; i < d; ++i) eye.at(i, i) = 1.0;
    TensorD tok = random_tensor({1, d}, rng);
    TensorD three({3, d});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < d; ++j) three.at(i, j) = tok.at(0, j);
    Tape<double> tp2;
    AttnParamIds wi{tp2.leaf(eye), tp2.leaf(eye), tp2.leaf(eye), tp2.leaf(eye)};
    int x2 = tp2.leaf(three);
    int y2 = multi_head_attention(tp2, x2, x2, x2, wi, 1);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < d; ++j) CHECK(tp2.val(y2).at(i, j) == doctest::Approx(tok.at(0, j)).epsilon(1e-12));
}

TEST_CASE("multi_head_attention random case vs dense oracle") {
    Rng rng(47);
    const int d = 6, N = 3, h = 2;
    TensorD x = random_tensor({N, d}, rng);
    TensorD wq = random_tensor({d, d}, rng), wk = random_tensor({d, d}, rng);
    TensorD wv = random_tensor({d, d}, rng), wo = random_tensor({d, d}, rng);
    Tape<double> tp;
    AttnParamIds w{tp.leaf(wq), tp.leaf(wk), tp.leaf(wv), tp.leaf(wo)};
    int xi = tp.leaf(x);
    int y = multi_head_attention(tp, xi, xi, xi, w, h);
    TensorD want = oracle::attention_naive(x, x, x, wq, wk, wv, wo, h);
    for (std::int64_t i = 0; i < want.size(); ++i)
        CHECK(tp.val(y).v[i] == doctest::Approx(want.v[i]).epsilon(1e-6));

    CHECK_THROWS_AS(multi_head_attention(tp, xi, xi, xi, w, 4), ConfigError);

    double err = fd_check_unary(x, [&](Tape<double>& t2, int xj) {
        AttnParamIds w2{t2.leaf(wq), t2.leaf(wk), t2.leaf(wv), t2.leaf(wo)};
        return multi_head_attention(t2, xj, xj, xj, w2, h);
    });
    CHECK(err < 1e-4);
    double errw = fd_check_unary(wq, [&](Tape<double>& t2, int wqi) {
        int xj = t2.leaf(x);
        AttnParamIds w2{wqi, t2.leaf(wk), t2.leaf(wv), t2.leaf(wo)};
        return multi_head_attention(t2, xj, xj, xj, w2, h);
    });
    CHECK(errw < 1e-4);
}

TEST_CASE("feed_forward composition") {
    Rng rng(53);
    const int d = 4, inner = 8;
    TensorD x = random_tensor({2, d}, rng);
    TensorD w1 = random_tensor({d, inner}, rng), b1 = random_tensor({inner}, rng);
    TensorD w2 = random_tensor({inner, d}, rng), b2 = random_tensor({d}, rng);

    // W1 = W2 = 0 -> output is b2 broadcast
    Tape<double> tp;
    int y = feed_forward(tp, tp.leaf(x), tp.leaf(TensorD::zeros({d, inner})), tp.leaf(b1),
                         tp.leaf(TensorD::zeros({inner, d})), tp.leaf(b2));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < d; ++j) CHECK(tp.val(y).at(i, j) == doctest::Approx(b2.at(j)));

    // zero input, zero biases -> zero output (gelu(0) = 0)
    Tape<double> tp2;
    int y2 = feed_forward(tp2, tp2.leaf(TensorD::zeros({2, d})), tp2.leaf(w1),
                          tp2.leaf(TensorD::zeros({inner})), tp2.leaf(w2), tp2.leaf(TensorD::zeros({d})));
    for (double v : tp2.val(y2).v) CHECK(v == 0.0);

    // random token vs by-hand composition
    Tape<double> tp3;
    int y3 = feed_forward(tp3, tp3.leaf(x), tp3.leaf(w1), tp3.leaf(b1), tp3.leaf(w2), tp3.leaf(b2));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < d; ++j) {
            double acc = b2.at(j);
            for (int p = 0; p < inner; ++p) {
                double pre = b1.at(p);
                for (int q = 0; q < d; ++q) pre += x.at(i, q) * w1.at(q, p);
                double act = pre * oracle::phi_series(pre);
                acc += act * w2.at(p, j);
            }
            CHECK(tp3.val(y3).at(i, j) == doctest::Approx(acc).epsilon(1e-7));
        }

    double err = fd_check_unary(x, [&](Tape<double>& t2, int xi) {
        return feed_forward(t2, xi, t2.leaf(w1), t2.leaf(b1), t2.leaf(w2), t2.leaf(b2));
    });
    CHECK(err < 1e-4);
}

TEST_CASE("layer_norm_residual semantics") {
    Rng rng(59);
    const int d = 6;
    TensorD x = random_tensor({1, d}, rng);
    TensorD ones = TensorD::full({d}, 1.0), zeros = TensorD::zeros({d});

    // sub = -x cancels: epsilon guard yields all-zero output
    Tape<double> tp;
    TensorD negx = x;
    for (auto& v : negx.v) v = -v;
    int y = layer_norm_residual(tp, tp.leaf(x), tp.leaf(negx), tp.leaf(ones), tp.leaf(zeros));
    for (double v : tp.val(y).v) CHECK(std::abs(v) < 1e-9);

    // constant vector after residual -> zero before affine
    Tape<double> tp2;
    int y2 = layer_norm_residual(tp2, tp2.leaf(TensorD::full({1, d}, 2.0)),
                                 tp2.leaf(TensorD::full({1, d}, 1.5)), tp2.leaf(ones), tp2.leaf(zeros));
    for (double v : tp2.val(y2).v) CHECK(std::abs(v) < 1e-9);

    // random case: mean 0, variance 1 over the feature axis before affine
    Tape<double> tp3;
    TensorD a = random_tensor({3, d}, rng), b = random_tensor({3, d}, rng);
    int y3 = layer_norm_residual(tp3, tp3.leaf(a), tp3.leaf(b), tp3.leaf(ones), tp3.leaf(zeros));
    for (int i = 0; i < 3; ++i) {
        double mu = 0.0, var = 0.0;
        for (int j = 0; j < d; ++j) mu += tp3.val(y3).at(i, j);
        mu /= d;
        for (int j = 0; j < d; ++j) {
            double dd = tp3.val(y3).at(i, j) - mu;
            var += dd * dd;
        }
        var /= d;
        CHECK(std::abs(mu) < 1e-5);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }

    // feature extent 1 errors
    Tape<double> tp4;
    CHECK_THROWS_AS(layer_norm(tp4, tp4.leaf(TensorD::full({2, 1}, 1.0)),
                               tp4.leaf(TensorD::full({1}, 1.0)), tp4.leaf(TensorD::zeros({1})), 1e-5),
                    NumericError);

    double err = fd_check_unary(a, [&](Tape<double>& t2, int xi) {
        return layer_norm_residual(t2, xi, t2.leaf(b), t2.leaf(ones), t2.leaf(zeros));
    });
    CHECK(err < 1e-4);
}

TEST_CASE("cross_entropy values") {
    // uniform logits over 5 classes -> ln 5 exactly (zeros, B = 4)
    Tape<double> tp;
    int lg = tp.leaf(TensorD::zeros({4, 5}));
    int loss = cross_entropy(tp, lg, {0, 1, 2, 3});
    CHECK(tp.val(loss).v[0] == std::log(5.0));

    // huge logit on the true class -> ~0
    Tape<double> tp2;
    TensorD big({1, 5});
    big.at(0, 2) = 1e6;
    int l2 = cross_entropy(tp2, tp2.leaf(big), {2});
    CHECK(tp2.val(l2).v[0] == doctest::Approx(0.0).epsilon(1e-12));

    // random 4x5 vs log-sum-exp oracle
    Rng rng(61);
    TensorD x = random_tensor({4, 5}, rng, 2.0);
    std::vector<int> labels{3, 0, 4, 1};
    Tape<double> tp3;
    int l3 = cross_entropy(tp3, tp3.leaf(x), labels);
    double want = 0.0;
    for (int i = 0; i < 4; ++i) {
        double lse = 0.0;
        for (int j = 0; j < 5; ++j) lse += std::exp(x.at(i, j));
        want += std::log(lse) - x.at(i, labels[static_cast<size_t>(i)]);
    }
    want /= 4.0;
    CHECK(tp3.val(l3).v[0] == doctest::Approx(want).epsilon(1e-8));
    CHECK(tp3.val(l3).v[0] >= 0.0);

    Tape<double> tp4;
    CHECK_THROWS_AS(cross_entropy(tp4, tp4.leaf(x), {0, 1, 2, 5}), ConfigError);

    // gradient vs finite differences
    TensorD pt = x;
    auto f = [&]() {
        Tape<double> t2;
        int l = cross_entropy(t2, t2.leaf(pt), labels);
        return t2.val(l).v[0];
    };
    Tape<double> tg;
    int xi = tg.leaf(pt);
    int ll = cross_entropy(tg, xi, labels);
    tg.backward(ll);
    auto rep = grad_check(f, pt, tg.grad(xi), 1e-6);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("adamw first step and identity") {
    // first step, g = 1, wd = 0: delta ~ -lr
    TensorD p = TensorD::scalar(0.7);
    auto st = OptimizerState<double>::zeros_like(p);
    st.weight_decay = 0.0;
    adamw_step(p, TensorD::scalar(1.0), st, 1e-3);
    CHECK(p.v[0] == doctest::Approx(0.7 - 1e-3).epsilon(1e-6));
    CHECK(st.step == 1);

    // zero gradient, zero decay: identity
    TensorD q = TensorD::scalar(-1.25);
    auto st2 = OptimizerState<double>::zeros_like(q);
    st2.weight_decay = 0.0;
    adamw_step(q, TensorD::scalar(0.0), st2, 1e-3);
    CHECK(q.v[0] == -1.25);

    TensorD r = TensorD::scalar(1.0);
    auto st3 = OptimizerState<double>::zeros_like(r);
    CHECK_THROWS_AS(adamw_step(r, TensorD::scalar(std::nan("")), st3, 1e-3), NumericError);
}

TEST_CASE("adamw two scripted steps vs hand-unrolled oracle") {
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.04;
    const double g1 = 0.3, g2 = -1.1;
    double theta = 0.5, m = 0.0, v = 0.0;
    // hand-unrolled reference
    auto ref_step = [&](double g, int step) {
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        double mh = m / (1 - std::pow(b1, step));
        double vh = v / (1 - std::pow(b2, step));
        theta -= lr * mh / (std::sqrt(vh) + eps);
        theta -= lr * wd * theta;
    };
    ref_step(g1, 1);
    ref_step(g2, 2);

    TensorD p = TensorD::scalar(0.5);
    auto st = OptimizerState<double>::zeros_like(p);
    st.weight_decay = wd;
    adamw_step(p, TensorD::scalar(g1), st, lr);
    adamw_step(p, TensorD::scalar(g2), st, lr);
    CHECK(p.v[0] == doctest::Approx(theta).epsilon(1e-10));
}

TEST_CASE("schedule_lr warmup and cosine decay") {
    Schedule s;  // base 1e-3, warmup 10, total 200, floor 0.1
    CHECK(schedule_lr(s, 0) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(schedule_lr(s, 10) == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(schedule_lr(s, 199) == doctest::Approx(1e-4).epsilon(0.02));
    // continuity at the warmup boundary: the jump matches the ramp step
    const double ramp = (1e-3 - 1e-4) / 10.0;
    CHECK(std::abs(schedule_lr(s, 10) - schedule_lr(s, 9)) == doctest::Approx(ramp).epsilon(1e-9));
    // monotone decay after warmup
    for (int e = 11; e < 200; ++e) CHECK(schedule_lr(s, e) <= schedule_lr(s, e - 1) + 1e-15);
    CHECK(schedule_lr(s, 199) >= 0.1 * 1e-3 - 1e-15);
    CHECK_THROWS_AS(schedule_lr(s, 200), ConfigError);
    CHECK_THROWS_AS(schedule_lr(s, -1), ConfigError);
}

TEST_CASE("grad_check harness on a linear function") {
    TensorD x({3}, {1.0, -2.0, 0.5});
    const std::vector<double> w{2.0, -1.0, 4.0};
    auto f = [&]() { return w[0] * x.v[0] + w[1] * x.v[1] + w[2] * x.v[2]; };
    TensorD analytic({3}, {2.0, -1.0, 4.0});
    auto rep = grad_check(f, x, analytic, 1e-5);
    CHECK(rep.max_rel_err < 1e-10);
    CHECK(rep.checked == 3);
}

TEST_CASE("dropout") {
    Rng rng(71);
    TensorD x = random_tensor({50}, rng);
    Tape<double> tp;
    int xi = tp.leaf(x);
    // p = 0 is the identity (same node)
    Rng r0(1);
    CHECK(dropout(tp, xi, 0.0, r0) == xi);
    // seeded mask is deterministic
    Rng ra(99), rb(99);
    Tape<double> ta, tb;
    int ya = dropout(ta, ta.leaf(x), 0.4, ra);
    int yb = dropout(tb, tb.leaf(x), 0.4, rb);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(ta.val(ya).v[i] == tb.val(yb).v[i]);
}

TEST_CASE("tape replay determinism") {
    Rng rng(73);
    TensorD x = random_tensor({4, 4}, rng);
    auto run = [&]() {
        Tape<double> tp;
        int xi = tp.leaf(x);
        int y = gelu(tp, matmul(tp, xi, xi));
        int l = cross_entropy(tp, y, {0, 1, 2, 3});
        tp.backward(l);
        return std::make_pair(tp.val(l).v[0], tp.grad(xi).v);
    };
    auto a = run();
    auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}
