#include <doctest.h>

#include "hwgen/nn.hpp"
#include "test_util.hpp"

using namespace hwgen;
using hwgen::test::gradcheck;

namespace {
VarPtr randn_leaf(std::vector<int> shape, Rng& rng, float std = 1.f) {
    return leaf(Tensor::randn(std::move(shape), rng, std), true);
}
}  // namespace

TEST_CASE("rng: deterministic streams and sane normal moments") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());
    bool all_equal = true;
    Rng a2(42);
    for (int i = 0; i < 16; ++i) all_equal &= a2.next_u64() == c.next_u64();
    CHECK_FALSE(all_equal);

    Rng r(7);
    double sum = 0, sq = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("matmul matches naive reference") {
    Rng rng(1);
    const int m = 5, k = 7, n = 4;
    Tensor A = Tensor::randn({m, k}, rng);
    Tensor B = Tensor::randn({k, n}, rng);
    Tensor C = matmul(A, B);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int kk = 0; kk < k; ++kk) acc += double(A.at2(i, kk)) * B.at2(kk, j);
            CHECK(C.at2(i, j) == doctest::Approx(acc).epsilon(1e-5));
        }
}

TEST_CASE("backward accumulates through shared nodes") {
    // y = x*x + x  =>  dy/dx = 2x + 1
    VarPtr x = leaf(Tensor({2}, {3.f, -2.f}), true);
    VarPtr y = sum_all(add(mul(x, x), x));
    backward(y);
    CHECK(x->grad.v[0] == doctest::Approx(7.f));
    CHECK(x->grad.v[1] == doctest::Approx(-3.f));
}

TEST_CASE("gradcheck: elementwise and activation ops") {
    Rng rng(2);
    VarPtr a = randn_leaf({3, 4}, rng);
    VarPtr b = randn_leaf({3, 4}, rng);
    CHECK(gradcheck([&] { return sum_all(mul(add(a, b), sub(a, b))); }, {a, b}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(silu(a)); }, {a}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(sigmoid(a)); }, {a}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(tanh_op(a)); }, {a}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(mul_scalar(add_scalar(a, 0.3f), 1.7f)); }, {a}) < 5e-3);
    // relu checked away from the kink
    VarPtr off = leaf(Tensor({4}, {1.f, -1.2f, 2.f, -0.5f}), true);
    CHECK(gradcheck([&] { return sum_all(relu(off)); }, {off}) < 5e-3);
}

TEST_CASE("gradcheck: matmul, linear, bmm flags") {
    Rng rng(3);
    VarPtr A = randn_leaf({3, 4}, rng);
    VarPtr B = randn_leaf({4, 2}, rng);
    CHECK(gradcheck([&] { return sum_all(matmul(A, B)); }, {A, B}) < 5e-3);

    VarPtr x = randn_leaf({2, 3, 4}, rng);
    VarPtr W = randn_leaf({4, 5}, rng);
    VarPtr bias = randn_leaf({5}, rng);
    CHECK(gradcheck([&] { return sum_all(linear(x, W, bias)); }, {x, W, bias}) < 5e-3);

    VarPtr P = randn_leaf({2, 3, 4}, rng);
    VarPtr Q = randn_leaf({2, 4, 5}, rng);
    CHECK(gradcheck([&] { return sum_all(bmm(P, Q, false, false)); }, {P, Q}) < 5e-3);
    VarPtr Q2 = randn_leaf({2, 5, 4}, rng);
    CHECK(gradcheck([&] { return sum_all(bmm(P, Q2, false, true)); }, {P, Q2}) < 5e-3);
    VarPtr P2 = randn_leaf({2, 4, 3}, rng);
    CHECK(gradcheck([&] { return sum_all(bmm(P2, Q, true, false)); }, {P2, Q}) < 5e-3);
}

TEST_CASE("gradcheck: conv2d stride and padding variants") {
    Rng rng(4);
    VarPtr x = randn_leaf({2, 3, 6, 8}, rng);
    VarPtr w = randn_leaf({4, 3, 3, 3}, rng, 0.4f);
    VarPtr b = randn_leaf({4}, rng);
    CHECK(gradcheck([&] { return sum_all(conv2d(x, w, b, 1, 1, 1, 1)); }, {x, w, b}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(conv2d(x, w, b, 2, 2, 1, 1)); }, {x, w, b}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(conv2d(x, w, b, 2, 1, 1, 1)); }, {x, w, b}) < 5e-3);
    VarPtr w1 = randn_leaf({2, 3, 1, 1}, rng);
    VarPtr b1 = randn_leaf({2}, rng);
    CHECK(gradcheck([&] { return sum_all(conv2d(x, w1, b1, 1, 1, 0, 0)); }, {x, w1, b1}) < 5e-3);
}

TEST_CASE("gradcheck: norms, softmax, pooling, shape ops") {
    Rng rng(5);
    VarPtr x = randn_leaf({2, 4, 3, 5}, rng);
    VarPtr gamma = leaf(Tensor::full({4}, 1.2f), true);
    VarPtr beta = randn_leaf({4}, rng, 0.3f);
    CHECK(gradcheck([&] { return sum_all(mul(group_norm(x, gamma, beta, 2), x)); },
                    {x, gamma, beta}) < 5e-3);

    VarPtr t = randn_leaf({2, 3, 4}, rng);
    VarPtr lg = leaf(Tensor::full({4}, 0.9f), true);
    VarPtr lb = randn_leaf({4}, rng, 0.2f);
    CHECK(gradcheck([&] { return sum_all(mul(layer_norm_lastdim(t, lg, lb), t)); },
                    {t, lg, lb}) < 5e-3);

    VarPtr s = randn_leaf({2, 3, 4}, rng);
    VarPtr probe = randn_leaf({2, 3, 4}, rng);
    CHECK(gradcheck([&] { return sum_all(mul(softmax_lastdim(s), probe)); }, {s}) < 5e-3);
    Tensor mask({2, 4});
    for (int n = 0; n < 2; ++n)
        for (int k = 0; k < 4; ++k) mask.at2(n, k) = k < 3 ? 1.f : 0.f;
    CHECK(gradcheck([&] { return sum_all(mul(softmax_lastdim(s, &mask), probe)); }, {s}) < 5e-3);

    CHECK(gradcheck([&] { return sum_all(global_avg_pool(x)); }, {x}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(upsample_nearest2x(x)); }, {x}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(nchw_to_nlc(x)); }, {x}) < 5e-3);
    VarPtr l3 = randn_leaf({2, 15, 4}, rng);
    CHECK(gradcheck([&] { return sum_all(mul(nlc_to_nchw(l3, 3, 5), nlc_to_nchw(l3, 3, 5))); },
                    {l3}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(slice_lastdim(t, 1, 3)); }, {t}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(reverse_seq(t)); }, {t}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(seq_step(t, 1)); }, {t}) < 5e-3);
}

TEST_CASE("gradcheck: concat, stack, bias adds, gather") {
    Rng rng(6);
    VarPtr a = randn_leaf({2, 3, 2, 2}, rng);
    VarPtr b = randn_leaf({2, 2, 2, 2}, rng);
    CHECK(gradcheck([&] { return sum_all(concat_channels(a, b)); }, {a, b}) < 5e-3);

    VarPtr s1 = randn_leaf({2, 2, 3}, rng);
    VarPtr s2 = randn_leaf({2, 4, 3}, rng);
    CHECK(gradcheck([&] { return sum_all(concat_seq(s1, s2)); }, {s1, s2}) < 5e-3);

    VarPtr u = randn_leaf({2, 3}, rng);
    VarPtr v = randn_leaf({2, 3}, rng);
    CHECK(gradcheck([&] { return sum_all(stack_seq({u, v})); }, {u, v}) < 5e-3);

    VarPtr x4 = randn_leaf({2, 3, 2, 2}, rng);
    VarPtr cb = randn_leaf({3}, rng);
    CHECK(gradcheck([&] { return sum_all(add_channel_bias(x4, cb)); }, {x4, cb}) < 5e-3);
    VarPtr nc = randn_leaf({2, 3}, rng);
    CHECK(gradcheck([&] { return sum_all(add_channel_bias_nc(x4, nc)); }, {x4, nc}) < 5e-3);
    VarPtr tb = randn_leaf({2, 5, 3}, rng);
    VarPtr db = randn_leaf({3}, rng);
    CHECK(gradcheck([&] { return sum_all(add_bias(tb, db)); }, {tb, db}) < 5e-3);

    VarPtr table = randn_leaf({6, 3}, rng);
    std::vector<int> ids = {0, 2, 2, 5};
    CHECK(gradcheck([&] { return sum_all(gather_rows(table, ids)); }, {table}) < 5e-3);
}

TEST_CASE("gradcheck: losses and distances") {
    Rng rng(7);
    VarPtr logits = randn_leaf({4, 3}, rng);
    std::vector<int> labels = {0, 2, 1, 2};
    CHECK(gradcheck([&] { return cross_entropy(logits, labels); }, {logits}) < 5e-3);

    VarPtr pred = randn_leaf({2, 3, 2, 2}, rng);
    Tensor target = Tensor::randn({2, 3, 2, 2}, rng);
    CHECK(gradcheck([&] { return mse_loss(pred, target); }, {pred}) < 5e-3);

    VarPtr fa = randn_leaf({3, 4}, rng);
    VarPtr fb = randn_leaf({3, 4}, rng);
    CHECK(gradcheck([&] { return sum_all(p_distance(fa, fb, 2.f)); }, {fa, fb}) < 5e-3);
    CHECK(gradcheck([&] { return sum_all(p_distance(fa, fb, 3.f)); }, {fa, fb}) < 5e-3);
}

TEST_CASE("gradcheck: GRU and BiGRU") {
    Rng rng(8);
    GRU gru(3, 4, rng);
    VarPtr x = randn_leaf({2, 5, 3}, rng);
    NamedParams np;
    gru.collect("gru", np);
    std::vector<VarPtr> params = param_list(np);
    params.push_back(x);
    CHECK(gradcheck([&] { return sum_all(gru.fwd(x)); }, params) < 5e-3);

    BiGRU bi(3, 2, rng);
    NamedParams np2;
    bi.collect("bi", np2);
    auto params2 = param_list(np2);
    CHECK(gradcheck([&] { return sum_all(bi.fwd(x)); }, params2) < 5e-3);
}

TEST_CASE("adam minimizes a quadratic") {
    VarPtr w = leaf(Tensor({2}, {5.f, -3.f}), true);
    Adam opt({w}, 0.1f);
    for (int i = 0; i < 200; ++i) {
        VarPtr loss = mean_all(mul(w, w));
        opt.zero_grad();
        backward(loss);
        opt.step();
    }
    CHECK(std::abs(w->val.v[0]) < 0.05f);
    CHECK(std::abs(w->val.v[1]) < 0.05f);
}

TEST_CASE("adamw decoupled weight decay shrinks unused weights") {
    VarPtr w = leaf(Tensor({1}, {1.f}), true);
    VarPtr probe = leaf(Tensor({1}, {0.f}), true);
    Adam opt({w, probe}, 0.05f, 0.5f, /*decoupled=*/true);
    for (int i = 0; i < 50; ++i) {
        VarPtr loss = mean_all(mul(probe, probe));  // no gradient reaches w
        opt.zero_grad();
        backward(loss);
        probe->g();  // ensure step sees allocated grads
        w->g();
        opt.step();
    }
    CHECK(std::abs(w->val.v[0]) < 0.3f);
}

TEST_CASE("no-grad mode builds no tape") {
    VarPtr x = leaf(Tensor({2}, {1.f, 2.f}), true);
    NoGrad ng;
    VarPtr y = mul(x, x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}
