#include <doctest.h>

#include <cmath>

#include "support/gradcheck.hpp"
#include "vsal/errors.hpp"
#include "vsal/graph.hpp"
#include "vsal/rng.hpp"

using namespace vsal;
using vsal::test::fd_check;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

struct Built {
    Graph g;
    std::vector<VarId> leaves;
    VarId loss;
};

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("forward values of basic ops") {
    Graph g;
    VarId x = g.leaf(Tensor::from({4}, {-1.0, 0.0, 0.5, 2.0}), false);
    CHECK(g.value(g.relu(x))[0] == 0.0);
    CHECK(g.value(g.relu(x))[3] == 2.0);
    CHECK(g.value(g.sigmoid(x))[1] == doctest::Approx(0.5));
    CHECK(g.value(g.tanh_(x))[3] == doctest::Approx(std::tanh(2.0)));
    CHECK(g.value(g.sum_all(x))[0] == doctest::Approx(1.5));
    CHECK(g.value(g.mean_all(x))[0] == doctest::Approx(0.375));

    VarId sm = g.softmax_groups(g.leaf(Tensor::from({4}, {0.0, 0.0, 0.0, 0.0}), false), 2);
    CHECK(g.value(sm)[0] == doctest::Approx(0.5));

    VarId sm2 = g.softmax_groups(g.leaf(Tensor::from({2}, {std::log(2.0), 0.0}), false), 2);
    CHECK(g.value(sm2)[0] == doctest::Approx(2.0 / 3.0));
    CHECK(g.value(sm2)[1] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("conv2d matches identity kernel by hand") {
    Graph g;
    Tensor x = Tensor::from({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor w = Tensor::from({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
    Tensor b = Tensor::from({1}, {0.5});
    VarId y = g.conv2d(g.leaf(x, false), g.leaf(w, false), g.leaf(b, false), 1, 1, 1);
    for (int i = 0; i < 9; ++i) CHECK(g.value(y)[i] == doctest::Approx(x[i] + 0.5));
}

TEST_CASE("conv2d stride and dilation shapes") {
    Graph g;
    Rng rng(1);
    VarId x = g.leaf(random_tensor({3, 8, 8}, rng), false);
    VarId w = g.leaf(random_tensor({5, 3, 3, 3}, rng), false);
    VarId b = g.leaf(random_tensor({5}, rng), false);
    CHECK(g.value(g.conv2d(x, w, b, 2, 1, 1)).shape() == std::vector<int>{5, 4, 4});
    CHECK(g.value(g.conv2d(x, w, b, 1, 2, 2)).shape() == std::vector<int>{5, 8, 8});
}

TEST_CASE("gradients of composite expression match central finite differences") {
    Rng rng(7);
    Tensor x = random_tensor({2, 5, 4}, rng, 0.7);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, 0.4);
    Tensor b = random_tensor({3}, rng, 0.2);
    Tensor gamma = random_tensor({3}, rng, 0.5);
    Tensor beta = random_tensor({3}, rng, 0.2);
    Tensor fcw = random_tensor({4, 3}, rng, 0.3);
    Tensor fcb = random_tensor({4}, rng, 0.3);
    Tensor target({2, 2, 2});
    Tensor mask({2, 2, 2});
    for (std::int64_t i = 0; i < target.size(); ++i) {
        target[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        mask[i] = rng.bernoulli(0.7) ? 1.0 : 0.0;
    }

    // One composite expression exercising most ops at once.
    auto build = [&]() {
        Built bt;
        Graph& g = bt.g;
        VarId vx = g.leaf(x, true);
        VarId vw = g.leaf(w, true);
        VarId vb = g.leaf(b, true);
        VarId vgamma = g.leaf(gamma, true);
        VarId vbeta = g.leaf(beta, true);
        VarId vfcw = g.leaf(fcw, true);
        VarId vfcb = g.leaf(fcb, true);
        bt.leaves = {vx, vw, vb, vgamma, vbeta, vfcw, vfcb};

        VarId c = g.conv2d(vx, vw, vb, 1, 1, 1);  // [3,5,4]
        VarId n = g.instance_norm(c, vgamma, vbeta);
        VarId r = g.relu(g.add_const(n, 0.05));
        VarId s = g.sigmoid(g.scale(r, 0.8));
        VarId t = g.tanh_(s);
        VarId up = g.upsample_bilinear(t, 7, 9);
        VarId gp = g.global_avg_pool(up);  // [3]
        VarId mp = g.global_max_pool(t);
        VarId fc = g.linear(g.add(gp, mp), vfcw, vfcb);  // [4]
        VarId sm = g.softmax_groups(fc, 2);
        VarId p0 = g.pick(sm, 1);
        VarId bc = g.broadcast_chw(g.slice0(sm, 0, 2), 3, 3);  // [2,3,3]
        VarId cc = g.concat(bc, bc);                           // [4,3,3]
        VarId os = g.outer_sc(g.reshape(g.slice0(cc, 0, 1), {3, 3}), g.slice0(fc, 0, 3));
        VarId ms = g.mul_scalar_var(os, p0);
        VarId sq = g.smooth_sqrt(g.sub(ms, g.scale(ms, 0.5)), 1e-6);
        VarId m2 = g.mul(sq, sq);
        VarId d1 = g.diff_x(g.reshape(g.slice0(m2, 0, 1), {3, 3}));
        VarId d2 = g.diff_y(g.reshape(g.slice0(m2, 1, 2), {3, 3}));
        VarId loss1 = g.wsum({g.sum_all(d1), g.mean_all(d2), g.sum_all(ms)}, {0.7, 1.3, 0.11});
        // separate head: gram + masked bce on conv output slice
        VarId e = g.slice0(c, 0, 2);
        VarId gr = g.gram(g.reshape(e, {2, 20}), g.reshape(g.scale(e, 0.9), {2, 20}));
        VarId pooled = g.reshape(g.slice0(g.reshape(gr, {400}), 0, 8), {2, 2, 2});
        VarId bce = g.bce_with_logits(pooled, target, &mask, true);
        bt.loss = g.wsum({loss1, bce}, {1.0, 2.0});
        return bt;
    };

    auto scalar_eval = [&]() {
        Built bt = build();
        return bt.g.value(bt.loss)[0];
    };

    Tensor* leaves[] = {&x, &w, &b, &gamma, &beta, &fcw, &fcb};
    const char* tags[] = {"x", "w", "b", "gamma", "beta", "fcw", "fcb"};
    for (int li = 0; li < 7; ++li) {
        Built bt = build();
        bt.g.backward(bt.loss);
        Tensor analytic = bt.g.grad(bt.leaves[static_cast<size_t>(li)]);
        auto res = fd_check(*leaves[li], scalar_eval, analytic, tags[li]);
        INFO(res.worst);
        CHECK(res.max_rel_err <= 1e-3);
    }
}

TEST_CASE("bce_with_logits closed forms") {
    Graph g;
    Tensor t0 = Tensor::from({2}, {1.0, 0.0});
    VarId logits = g.leaf(Tensor::from({2}, {0.0, 0.0}), false);
    VarId l = g.bce_with_logits(logits, t0, nullptr, true);
    CHECK(g.value(l)[0] == doctest::Approx(std::log(2.0)));

    VarId sat = g.leaf(Tensor::from({2}, {50.0, -50.0}), false);
    VarId l2 = g.bce_with_logits(sat, t0, nullptr, true);
    CHECK(g.value(l2)[0] <= 2e-7);

    Tensor zmask({2});  // empty mask -> 0
    VarId l3 = g.bce_with_logits(logits, t0, &zmask, true);
    CHECK(g.value(l3)[0] == 0.0);
}

TEST_CASE("strided and dilated conv gradcheck") {
    Rng rng(11);
    Tensor x = random_tensor({2, 6, 6}, rng, 0.5);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, 0.4);
    Tensor b = random_tensor({3}, rng, 0.1);
    Tensor w2 = random_tensor({2, 3, 3, 3}, rng, 0.4);
    Tensor b2 = random_tensor({2}, rng, 0.1);
    auto build = [&]() {
        Built bt;
        Graph& g = bt.g;
        VarId vx = g.leaf(x, true);
        VarId vw = g.leaf(w, true);
        VarId vb = g.leaf(b, true);
        bt.leaves = {vx, vw, vb};
        VarId y = g.conv2d(vx, vw, vb, 2, 1, 1);
        VarId y2 = g.conv2d(g.relu(y), g.leaf(w2, false), g.leaf(b2, false), 1, 2, 2);
        bt.loss = g.mean_all(g.mul(y2, y2));
        return bt;
    };
    auto scalar_eval = [&]() {
        Built bt = build();
        return bt.g.value(bt.loss)[0];
    };
    Built bt = build();
    bt.g.backward(bt.loss);
    CHECK(fd_check(x, scalar_eval, bt.g.grad(bt.leaves[0]), "x").max_rel_err <= 1e-3);
    CHECK(fd_check(w, scalar_eval, bt.g.grad(bt.leaves[1]), "w").max_rel_err <= 1e-3);
    CHECK(fd_check(b, scalar_eval, bt.g.grad(bt.leaves[2]), "b").max_rel_err <= 1e-3);
}

TEST_CASE("backward requires scalar root") {
    Graph g;
    VarId x = g.leaf(Tensor::from({2}, {1.0, 2.0}), true);
    CHECK_THROWS_AS(g.backward(x), ContractViolation);
}

}  // TEST_SUITE
