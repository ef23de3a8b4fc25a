#include <catch2/catch_amalgamated.hpp>

#include "badt2i/autograd.hpp"
#include "badt2i/nn.hpp"
#include "badt2i/rng.hpp"
#include "test_support.hpp"

using namespace badt2i;
using testsup::gradcheck;

namespace {

Var randn_leaf(std::vector<int> shape, Rng& rng, double std = 1.0) {
    return leaf(Tensor::gaussian(std::move(shape), rng, std));
}

}  // namespace

TEST_CASE("rng determinism and gaussian moments") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng g(7);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = g.gaussian();
        s += x;
        s2 += x * x;
    }
    REQUIRE(std::abs(s / n) < 0.01);
    REQUIRE(std::abs(s2 / n - 1.0) < 0.02);

    REQUIRE(derive_seed(1, "a") != derive_seed(1, "b"));
    REQUIRE(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
    REQUIRE(derive_seed(1, "a", 3, 4) == derive_seed(1, "a", 3, 4));
}

TEST_CASE("elementwise op gradients") {
    Rng rng(1);
    auto a = randn_leaf({3, 4}, rng);
    auto b = randn_leaf({3, 4}, rng);

    SECTION("add/sub/mul/scale/lincomb") {
        REQUIRE(gradcheck([&] { return mean_all(add(a, b)); }, {a, b}) < 1e-7);
        REQUIRE(gradcheck([&] { return mean_all(sub(a, b)); }, {a, b}) < 1e-7);
        REQUIRE(gradcheck([&] { return mean_all(mul(a, b)); }, {a, b}) < 1e-6);
        REQUIRE(gradcheck([&] { return mean_all(scale(a, -2.5)); }, {a}) < 1e-7);
        REQUIRE(gradcheck([&] { return mean_all(lincomb(0.3, a, 0.7, b)); }, {a, b}) < 1e-7);
    }
    SECTION("silu") {
        REQUIRE(gradcheck([&] { return mean_all(silu(a)); }, {a}) < 1e-6);
    }
    SECTION("mse") {
        REQUIRE(gradcheck([&] { return mse_loss(a, b); }, {a, b}) < 1e-6);
        REQUIRE(mse_loss(a, a)->value[0] == 0.0);
    }
}

TEST_CASE("matmul and linear gradients") {
    Rng rng(2);
    auto a = randn_leaf({3, 5}, rng);
    auto b = randn_leaf({5, 4}, rng);
    REQUIRE(gradcheck([&] { return mean_all(matmul(a, b)); }, {a, b}) < 1e-6);

    auto c = randn_leaf({6, 5}, rng);
    REQUIRE(gradcheck([&] { return mean_all(matmul_nt(a, c)); }, {a, c}) < 1e-6);

    auto x = randn_leaf({2, 3, 5}, rng);
    auto w = randn_leaf({4, 5}, rng);
    auto bias = randn_leaf({4}, rng);
    REQUIRE(gradcheck([&] { return mean_all(linear(x, w, bias)); }, {x, w, bias}) < 1e-6);

    // matmul against a hand-rolled reference
    Tensor ref({3, 4});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 5; ++k) s += a->value.at(i, k) * b->value.at(k, j);
            ref.at(i, j) = s;
        }
    Var mm = matmul(a, b);
    for (size_t i = 0; i < ref.size(); ++i)
        REQUIRE(mm->value[i] == Catch::Approx(ref[i]).margin(1e-12));
}

TEST_CASE("conv2d matches naive convolution and gradients pass") {
    Rng rng(3);
    for (int stride : {1, 2}) {
        auto x = randn_leaf({2, 3, 6, 6}, rng);
        auto w = randn_leaf({4, 3, 3, 3}, rng);
        auto b = randn_leaf({4}, rng);
        Var y = conv2d(x, w, b, stride, 1);
        int oh = (6 + 2 - 3) / stride + 1;
        REQUIRE(y->value.shape() == std::vector<int>({2, 4, oh, oh}));

        // naive reference
        for (int bi = 0; bi < 2; ++bi)
            for (int o = 0; o < 4; ++o)
                for (int i = 0; i < oh; ++i)
                    for (int j = 0; j < oh; ++j) {
                        double s = b->value[static_cast<size_t>(o)];
                        for (int c = 0; c < 3; ++c)
                            for (int ki = 0; ki < 3; ++ki)
                                for (int kj = 0; kj < 3; ++kj) {
                                    int ih = i * stride - 1 + ki, iw = j * stride - 1 + kj;
                                    if (ih < 0 || ih >= 6 || iw < 0 || iw >= 6) continue;
                                    s += x->value.at(bi, c, ih, iw) * w->value.at(o, c, ki, kj);
                                }
                        REQUIRE(y->value.at(bi, o, i, j) == Catch::Approx(s).margin(1e-10));
                    }

        REQUIRE(gradcheck([&] { return mean_all(conv2d(x, w, b, stride, 1)); }, {x, w, b}, 1e-5) <
                1e-5);
    }
}

TEST_CASE("structure op gradients") {
    Rng rng(4);
    SECTION("upsample2 / avg_pool_all") {
        auto x = randn_leaf({2, 3, 4, 4}, rng);
        REQUIRE(gradcheck([&] { return mean_all(upsample2(x)); }, {x}) < 1e-7);
        REQUIRE(gradcheck([&] { return mean_all(avg_pool_all(x)); }, {x}) < 1e-7);
    }
    SECTION("concat_ch") {
        auto a = randn_leaf({2, 2, 3, 3}, rng);
        auto b = randn_leaf({2, 3, 3, 3}, rng);
        REQUIRE(gradcheck([&] { return mean_all(mul(concat_ch(a, b), concat_ch(a, b))); }, {a, b}) <
                1e-6);
    }
    SECTION("nchw<->nlc round trip") {
        auto x = randn_leaf({2, 3, 4, 4}, rng);
        Var y = nlc_to_nchw(nchw_to_nlc(x), 4, 4);
        for (size_t i = 0; i < x->value.size(); ++i) REQUIRE(y->value[i] == x->value[i]);
        REQUIRE(gradcheck([&] { return mean_all(mul(nchw_to_nlc(x), nchw_to_nlc(x))); }, {x}) <
                1e-6);
    }
    SECTION("add_channel_bias / mean_rows / reshape") {
        auto x = randn_leaf({2, 3, 4, 4}, rng);
        auto v = randn_leaf({2, 3}, rng);
        REQUIRE(gradcheck([&] { return mean_all(mul(add_channel_bias(x, v), x)); }, {x, v}) < 1e-6);
        auto t = randn_leaf({2, 5, 3}, rng);
        REQUIRE(gradcheck([&] { return mean_all(mul(mean_rows(t), mean_rows(t))); }, {t}) < 1e-6);
        REQUIRE(gradcheck([&] { return mean_all(mul(reshape(x, {2, 48}), reshape(x, {2, 48}))); },
                          {x}) < 1e-6);
    }
    SECTION("l2_normalize_rows") {
        auto x = randn_leaf({3, 5}, rng);
        auto w = randn_leaf({3, 5}, rng);
        REQUIRE(gradcheck([&] { return mean_all(mul(l2_normalize_rows(x), w)); }, {x}) < 1e-6);
    }
}

TEST_CASE("normalization gradients") {
    Rng rng(5);
    SECTION("group_norm") {
        auto x = randn_leaf({2, 4, 3, 3}, rng);
        auto gamma = leaf(Tensor::full({4}, 1.0));
        auto beta = leaf(Tensor::zeros({4}));
        for (size_t i = 0; i < 4; ++i) {
            gamma->value[i] = 1.0 + 0.1 * static_cast<double>(i);
            beta->value[i] = 0.05 * static_cast<double>(i);
        }
        auto probe = randn_leaf({2, 4, 3, 3}, rng);
        auto fn = [&] { return mean_all(mul(group_norm(x, gamma, beta, 2), probe)); };
        REQUIRE(gradcheck(fn, {x, gamma, beta}, 1e-5) < 1e-5);
    }
    SECTION("layer_norm") {
        auto x = randn_leaf({4, 6}, rng);
        auto gamma = leaf(Tensor::full({6}, 1.3));
        auto beta = leaf(Tensor::full({6}, -0.2));
        auto probe = randn_leaf({4, 6}, rng);
        auto fn = [&] { return mean_all(mul(layer_norm(x, gamma, beta), probe)); };
        REQUIRE(gradcheck(fn, {x, gamma, beta}, 1e-5) < 1e-5);
    }
}

TEST_CASE("attention gradients and softmax rows") {
    Rng rng(6);
    auto q = randn_leaf({2, 3, 4}, rng);
    auto k = randn_leaf({2, 5, 4}, rng);
    auto v = randn_leaf({2, 5, 6}, rng);
    auto probe = randn_leaf({2, 3, 6}, rng);
    auto fn = [&] { return mean_all(mul(attention(q, k, v), probe)); };
    REQUIRE(gradcheck(fn, {q, k, v}, 1e-5) < 1e-5);
}

TEST_CASE("embedding and cross entropy gradients") {
    Rng rng(7);
    auto table = randn_leaf({10, 4}, rng);
    std::vector<int> ids = {1, 3, 3, 0, 9, 2};
    auto probe = randn_leaf({2, 3, 4}, rng);
    REQUIRE(gradcheck([&] { return mean_all(mul(embedding(table, ids, 2, 3), probe)); }, {table}) <
            1e-6);
    REQUIRE_THROWS_AS(embedding(table, {10}, 1, 1), DataError);

    auto logits = randn_leaf({4, 5}, rng);
    std::vector<int> targets = {0, 2, 4, 1};
    REQUIRE(gradcheck([&] { return cross_entropy_rows(logits, targets); }, {logits}) < 1e-6);
}

TEST_CASE("no-grad mode builds no graph") {
    Rng rng(8);
    auto a = randn_leaf({2, 2}, rng);
    {
        NoGradGuard ng;
        Var y = scale(a, 2.0);
        REQUIRE_FALSE(y->requires_grad);
        REQUIRE(y->parents.empty());
    }
    Var y = scale(a, 2.0);
    REQUIRE(y->requires_grad);
}

TEST_CASE("adam reduces a quadratic") {
    Rng rng(9);
    auto x = randn_leaf({8}, rng);
    ParamList params{{"x", x}};
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam opt(cfg);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 200; ++step) {
        zero_grads(params);
        Var loss = mse_loss(x, constant(Tensor::full({8}, 0.7)));
        backward(loss);
        if (step == 0) first = loss->value[0];
        last = loss->value[0];
        opt.step(params);
    }
    REQUIRE(last < 0.01 * first);
}

TEST_CASE("parameter copy and checksum") {
    Rng rng(10);
    Linear l1(4, 3, rng), l2(4, 3, rng);
    ParamList p1, p2;
    l1.collect(p1, "l");
    l2.collect(p2, "l");
    REQUIRE(params_checksum(p1) != params_checksum(p2));
    copy_param_values(p2, p1);
    REQUIRE(params_checksum(p1) == params_checksum(p2));
}
