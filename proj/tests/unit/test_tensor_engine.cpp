#include <cmath>
#include <vector>

#include "doctest.h"
#include "rcl/error.hpp"
#include "rcl/gradcheck.hpp"
#include "rcl/ops.hpp"
#include "rcl/rng.hpp"

using namespace rcl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Entries kept at least `gap` away from zero so kinks and poles stay
// outside the finite-difference stencil.
Tensor away_from_zero(Shape shape, Rng& rng, double gap) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) {
        double u = rng.uniform(gap, 1.0);
        v = rng.bernoulli(0.5) ? u : -u;
    }
    return t;
}

}  // namespace

TEST_CASE("matmul with identity returns the input") {
    Tape tape;
    Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    Var i = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    Var out = ops::matmul(a, i);
    CHECK(bitwise_equal(out.value(), Tensor::matrix({{1, 2}, {3, 4}})));
}

TEST_CASE("relu and l2 normalisation on small cases") {
    Tape tape;
    Var r = ops::relu(tape.constant(Tensor::vector({-1, 0, 2})));
    CHECK(r.value().values() == std::vector<double>{0, 0, 2});
    Var n = ops::l2_normalize_rows(tape.constant(Tensor::matrix({{3, 4}})));
    CHECK(n.value()[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(n.value()[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("backward of sum of squares") {
    Tape tape;
    Var x = tape.variable(Tensor::vector({1, 2, 3}));
    Gradients g = tape.backward(ops::sum(ops::mul(x, x)));
    CHECK(g.at(x.id()).values() == std::vector<double>{2, 4, 6});
}

TEST_CASE("backward of an untracked output is empty") {
    Tape tape;
    Var c = tape.constant(Tensor::vector({1, 2}));
    CHECK(tape.backward(ops::sum(c)).empty());
}

TEST_CASE("backward rejects non-scalar outputs and a second pass") {
    Tape tape;
    Var x = tape.variable(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(tape.backward(ops::scale(x, 2.0)), ShapeError);
    Var s = ops::sum(x);
    tape.backward(s);
    CHECK_THROWS_AS(tape.backward(s), Error);
}

TEST_CASE("op errors: shape mismatch, division by zero, non-finite output, bad log") {
    Tape tape;
    Var a = tape.constant(Tensor::vector({1, 2}));
    Var b = tape.constant(Tensor::vector({1, 2, 3}));
    CHECK_THROWS_AS(ops::add(a, b), ShapeError);
    CHECK_THROWS_AS(ops::matmul(tape.constant(Tensor::zeros({2, 3})), tape.constant(Tensor::zeros({2, 3}))),
                    ShapeError);
    CHECK_THROWS_AS(ops::div(a, tape.constant(Tensor::vector({1, 0}))), NumericError);
    CHECK_THROWS_AS(ops::exp(tape.constant(Tensor::vector({1000.0}))), NumericError);
    CHECK_THROWS_AS(ops::log(tape.constant(Tensor::vector({0.0}))), NumericError);
    CHECK_THROWS_AS(ops::conv2d_3x3(tape.constant(Tensor::zeros({1, 4, 4})), tape.constant(Tensor::zeros({1, 1, 3, 3})),
                                    tape.constant(Tensor::zeros({1}))),
                    ShapeError);
    CHECK_THROWS_AS(ops::l2_normalize_rows(tape.constant(Tensor::zeros({1, 2}))), NumericError);
}

TEST_CASE("mean of relu of an affine map matches finite differences") {
    Rng rng(7);
    Tensor w = random_tensor({4, 3}, rng);
    Tensor x = random_tensor({5, 4}, rng);
    ScalarFn f = [&](Tape& t, Var wv) { return ops::mean(ops::relu(ops::matmul(t.constant(x), wv))); };
    CHECK(finite_diff_check(f, w, 1e-5) < 1e-4);
}

TEST_CASE("finite_diff_check on known functions") {
    Rng rng(3);
    Tensor x = random_tensor({10}, rng);
    CHECK(finite_diff_check([](Tape&, Var v) { return ops::sum(ops::mul(v, v)); }, x, 1e-5) < 1e-6);
    CHECK(finite_diff_check([](Tape& t, Var) { return t.constant(Tensor::scalar(3.0)); }, x, 1e-5) == 0.0);
    CHECK_THROWS_AS(finite_diff_check([](Tape&, Var v) { return ops::sum(v); }, x, 0.0), ConfigError);
    CHECK_THROWS_AS(finite_diff_check([](Tape&, Var v) { return ops::sum(ops::log(v)); }, Tensor::vector({1e-7}), 1e-5),
                    NumericError);
}

TEST_CASE("every primitive matches central differences over 100 seeds") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(derive_seed(1234, seed));
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
        Tensor m = random_tensor({4, 2}, rng);
        Tensor bias = random_tensor({4}, rng);
        Tensor kink = away_from_zero({3, 4}, rng, 0.05);
        Tensor img = random_tensor({2, 2, 4, 4}, rng);
        Tensor kern = random_tensor({3, 2, 3, 3}, rng);
        Tensor kb = random_tensor({3}, rng);
        Tensor mask = Tensor::full({3, 4}, 1.0);
        mask[1] = 0.0;
        mask[6] = 0.0;

        // Weighted sum so every output coordinate carries a distinct gradient.
        auto wsum = [&](Tape& t, Var v) {
            Rng wr(seed);
            return ops::sum(ops::mul(v, t.constant(random_tensor(v.shape(), wr))));
        };
        std::vector<std::pair<ScalarFn, Tensor>> cases = {
            {[&](Tape& t, Var v) { return wsum(t, ops::add(v, t.constant(b))); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::sub(t.constant(b), v)); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::mul(v, t.constant(b))); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::div(t.constant(b), v)); }, pos},
            {[&](Tape& t, Var v) { return wsum(t, ops::div(v, t.constant(pos))); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::matmul(v, t.constant(m))); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::matmul(t.constant(a), v)); }, m},
            {[&](Tape& t, Var v) { return wsum(t, ops::add_bias(t.constant(a), v)); }, bias},
            {[&](Tape& t, Var v) { return wsum(t, ops::transpose(v)); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::relu(v)); }, kink},
            {[&](Tape& t, Var v) { return wsum(t, ops::exp(v)); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::log(v)); }, pos},
            {[&](Tape&, Var v) { return ops::mean(ops::mul(v, v)); }, a},
            {[&](Tape& t, Var v) { return ops::max_reduce(ops::mul(v, t.constant(b))); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::l2_normalize_rows(v)); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::scale(v, -2.5)); }, a},
            {[&](Tape& t, Var v) {
                 Var parts[] = {v, t.constant(b), v};
                 return wsum(t, ops::concat_rows(parts));
             },
             a},
            {[&](Tape& t, Var v) { return wsum(t, ops::slice_rows(v, 1, 3)); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::log_softmax_rows(v)); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::log_softmax_rows(v, mask)); }, a},
            {[&](Tape& t, Var v) { return wsum(t, ops::conv2d_3x3(v, t.constant(kern), t.constant(kb))); }, img},
            {[&](Tape& t, Var v) { return wsum(t, ops::conv2d_3x3(t.constant(img), v, t.constant(kb))); }, kern},
            {[&](Tape& t, Var v) { return wsum(t, ops::conv2d_3x3(t.constant(img), t.constant(kern), v)); }, kb},
            {[&](Tape& t, Var v) { return wsum(t, ops::max_pool2x2(v)); }, img},
            {[&](Tape& t, Var v) { return wsum(t, ops::reshape(v, {4, 3})); }, a},
        };
        for (auto& [f, x] : cases) worst = std::max(worst, finite_diff_check(f, x, 1e-5));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("masked log-softmax entries are zero and excluded from the normaliser") {
    Tape tape;
    Tensor mask = Tensor::matrix({{1, 0, 1}});
    Var out = ops::log_softmax_rows(tape.constant(Tensor::matrix({{0, 50, 0}})), mask);
    CHECK(out.value()[1] == 0.0);
    CHECK(out.value()[0] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(ops::log_softmax_rows(tape.constant(Tensor::zeros({1, 3})), Tensor::zeros({1, 3})), Error);
}

TEST_CASE("backward is linear in the output") {
    Rng rng(11);
    Tensor x = random_tensor({6}, rng);
    const double a = 1.7, b = -0.3;
    auto f = [](Tape&, Var v) { return ops::sum(ops::exp(v)); };
    auto g = [](Tape&, Var v) { return ops::mean(ops::mul(v, v)); };
    Tensor gf = autodiff_gradient(f, x);
    Tensor gg = autodiff_gradient(g, x);
    Tensor gc = autodiff_gradient(
        [&](Tape& t, Var v) { return ops::add(ops::scale(f(t, v), a), ops::scale(g(t, v), b)); }, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) < 1e-10);
}

TEST_CASE("identical inputs give bitwise identical results") {
    auto run = [] {
        Rng rng(99);
        Tensor w = random_tensor({8, 5}, rng);
        Tensor x = random_tensor({4, 8}, rng);
        Tape tape;
        Var wv = tape.variable(w);
        Var out = ops::mean(ops::relu(ops::matmul(tape.constant(x), wv)));
        return tape.backward(out).at(wv.id());
    };
    CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("unreachable tracked leaves get zero gradients") {
    Tape tape;
    Var x = tape.variable(Tensor::vector({1, 2}));
    Var y = tape.variable(Tensor::vector({3}));
    Gradients g = tape.backward(ops::sum(x));
    CHECK(g.at(y.id()).values() == std::vector<double>{0});
}

TEST_CASE("rng streams are reproducible and derive_seed separates streams") {
    Rng a(5), b(5);
    for (int i = 0; i < 10; ++i) CHECK(a.normal() == b.normal());
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    Rng r(8);
    auto p = r.permutation(50);
    std::sort(p.begin(), p.end());
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == i);
}
