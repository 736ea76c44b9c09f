#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bccn/grad_check.hpp"
#include "bccn/ops.hpp"
#include "oracles.hpp"

using bccn::Tensor;
using oracles::max_abs_diff;

namespace {

// Random values kept away from zero so relu and max kinks sit far from the
// finite-difference probes.
Tensor away_from_kinks(std::vector<std::size_t> shape, bccn::Rng& rng) {
    std::vector<double> data(bccn::detail::shape_numel(shape));
    for (double& v : data) {
        const double mag = rng.uniform(0.15, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

TEST_CASE("backward on simple closed forms") {
    SECTION("d sum(p) / dp = 1") {
        Tensor p = Tensor::from_data({4}, {1, 2, 3, 4}, true);
        bccn::backward(bccn::sum(p));
        CHECK(p.grad() == std::vector<double>{1, 1, 1, 1});
    }
    SECTION("d sum(p*p)/2 / dp = p") {
        Tensor p = Tensor::from_data({3}, {0.5, -1.5, 2.0}, true);
        bccn::backward(bccn::scale(bccn::sum(bccn::mul(p, p)), 0.5));
        CHECK(max_abs_diff(p.grad(), p.data()) < 1e-12);
    }
    SECTION("shared subgraphs accumulate") {
        Tensor x = Tensor::from_data({1}, {3.0}, true);
        Tensor sq = bccn::mul(x, x);
        bccn::backward(bccn::sum(bccn::add(sq, sq)));  // d(2x^2)/dx = 4x
        CHECK(x.grad()[0] == Catch::Approx(12.0).margin(1e-12));
    }
    SECTION("repeated backward accumulates until zero_grad") {
        Tensor p = Tensor::from_data({2}, {1.0, 2.0}, true);
        bccn::backward(bccn::sum(p));
        bccn::backward(bccn::sum(p));
        CHECK(p.grad() == std::vector<double>{2, 2});
        p.zero_grad();
        CHECK(p.grad() == std::vector<double>{0, 0});
    }
    SECTION("inputs without requires_grad receive no tape") {
        Tensor data = Tensor::from_data({2}, {1.0, 2.0});
        Tensor w = Tensor::from_data({2}, {3.0, 4.0}, true);
        bccn::backward(bccn::sum(bccn::mul(data, w)));
        CHECK(w.grad() == std::vector<double>{1, 2});
    }
    SECTION("backward validates its argument") {
        Tensor p = Tensor::from_data({2}, {1.0, 2.0}, true);
        CHECK_THROWS_AS(bccn::backward(p), bccn::ShapeError);
        CHECK_THROWS_AS(bccn::backward(bccn::sum(Tensor::from_data({2}, {1.0, 2.0}))),
                        bccn::ValueError);
        CHECK_THROWS_AS(bccn::backward(Tensor{}), bccn::ValueError);
    }
}

TEST_CASE("gradient check covers every differentiable op") {
    const double tol = 1e-4;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        bccn::Rng rng(seed * 101);

        SECTION("elementwise and reductions, seed " + std::to_string(seed)) {
            Tensor a = away_from_kinks({3, 4}, rng);
            Tensor b = away_from_kinks({3, 4}, rng);
            auto fn = [&] {
                Tensor t = bccn::add(bccn::mul(a, b), bccn::scale(bccn::sub(a, b), 0.5));
                t = bccn::add(bccn::relu(t), bccn::sigmoid(t));
                t = bccn::add(t, bccn::tanh_op(a));
                return bccn::add(bccn::mean(t), bccn::sum(bccn::mul(t, t)));
            };
            CHECK(bccn::grad_check(fn, {a, b}).max_rel_error < tol);
        }

        SECTION("shape and indexing ops, seed " + std::to_string(seed)) {
            Tensor m = away_from_kinks({4, 3}, rng);
            auto fn = [&] {
                Tensor r = bccn::reshape(m, {3, 4});
                Tensor parts = bccn::concat_vec({bccn::gather_row(m, 1), bccn::gather_row(m, 3)});
                Tensor st = bccn::stack_rows({parts, bccn::scale(parts, 2.0)});
                Tensor mix = bccn::add(bccn::mean_rows(st), bccn::max_rows(st));
                return bccn::add(bccn::sum(mix), bccn::pick(r, 5));
            };
            CHECK(bccn::grad_check(fn, {m}).max_rel_error < tol);
        }

        SECTION("matrix ops, seed " + std::to_string(seed)) {
            Tensor a = away_from_kinks({3, 4}, rng);
            Tensor b = away_from_kinks({4, 2}, rng);
            Tensor w = away_from_kinks({2, 4}, rng);
            Tensor bias = away_from_kinks({2}, rng);
            Tensor x = away_from_kinks({4}, rng);
            Tensor p = away_from_kinks({3}, rng);
            auto fn = [&] {
                Tensor mm = bccn::matmul(a, b);
                Tensor af = bccn::affine(bccn::transpose(b), w, bias);
                Tensor mv = bccn::matvec(a, x);
                Tensor vm = bccn::vecmat(p, a);
                return bccn::add(bccn::add(bccn::sum(mm), bccn::sum(af)),
                                 bccn::add(bccn::sum(mv), bccn::sum(vm)));
            };
            CHECK(bccn::grad_check(fn, {a, b, w, bias, x, p}).max_rel_error < tol);
        }

        SECTION("softmax and cross entropy, seed " + std::to_string(seed)) {
            Tensor logits = away_from_kinks({5}, rng);
            Tensor m = away_from_kinks({3, 5}, rng);
            auto fn = [&] {
                Tensor ce = bccn::cross_entropy(logits, 2);
                Tensor sm = bccn::softmax(m, 1);
                return bccn::add(ce, bccn::add(bccn::pick(sm, 7), bccn::pick(sm, 11)));
            };
            CHECK(bccn::grad_check(fn, {logits, m}).max_rel_error < tol);
        }

        SECTION("conv3d and pooling, seed " + std::to_string(seed)) {
            Tensor in = away_from_kinks({2, 3, 4, 4}, rng);
            Tensor ker = away_from_kinks({3, 2, 2, 3, 3}, rng);
            Tensor bias = away_from_kinks({3}, rng);
            auto fn = [&] {
                Tensor y = bccn::conv3d(in, ker, bias, {1, 1, 1}, {0, 1, 1});
                return bccn::sum(bccn::global_avg_pool(bccn::relu(y)));
            };
            CHECK(bccn::grad_check(fn, {in, ker, bias}, 1e-5, 40).max_rel_error < tol);
        }

        SECTION("time-axis ops, seed " + std::to_string(seed)) {
            Tensor x = away_from_kinks({2, 6, 2, 2}, rng);
            Tensor k = away_from_kinks({2, 2, 2, 2}, rng);
            auto fn = [&] {
                Tensor g = bccn::gather_time(x, {1, 4});
                Tensor inf = bccn::inflate_time(k, {0, 0, 0, 1, 1, 1});
                Tensor cc = bccn::concat_channels({g, k});
                return bccn::add(bccn::sum(bccn::mul(inf, x)),
                                 bccn::add(bccn::sum(g), bccn::sum(cc)));
            };
            CHECK(bccn::grad_check(fn, {x, k}).max_rel_error < tol);
        }

        SECTION("lstm chain, seed " + std::to_string(seed)) {
            bccn::LstmParams p = bccn::LstmParams::init(3, 4, rng);
            Tensor x0 = away_from_kinks({3}, rng);
            Tensor x1 = away_from_kinks({3}, rng);
            Tensor x2 = away_from_kinks({3}, rng);
            auto fn = [&] {
                bccn::LstmState s{Tensor::zeros({4}), Tensor::zeros({4})};
                for (const Tensor* x : {&x0, &x1, &x2}) s = bccn::lstm_step(*x, s.h, s.c, p);
                return bccn::sum(s.h);
            };
            std::vector<Tensor> params = p.parameters();
            params.push_back(x0);
            params.push_back(x1);
            params.push_back(x2);
            CHECK(bccn::grad_check(fn, params).max_rel_error < tol);
        }
    }
}

TEST_CASE("composed network gradient") {
    bccn::Rng rng(99);
    Tensor in = away_from_kinks({1, 2, 4, 4}, rng);
    Tensor ker = away_from_kinks({2, 1, 2, 3, 3}, rng);
    Tensor bias = away_from_kinks({2}, rng);
    Tensor w = away_from_kinks({3, 2}, rng);
    Tensor b = away_from_kinks({3}, rng);
    auto fn = [&] {
        Tensor y = bccn::relu(bccn::conv3d(in, ker, bias, {1, 1, 1}, {0, 1, 1}));
        Tensor logits = bccn::add(bccn::matvec(w, bccn::global_avg_pool(y)), b);
        return bccn::cross_entropy(logits, 1);
    };
    CHECK(bccn::grad_check(fn, {in, ker, bias, w, b}, 1e-5, 40).max_rel_error < 1e-4);
}

TEST_CASE("backward survives long sequential chains") {
    bccn::Rng rng(7);
    bccn::LstmParams p = bccn::LstmParams::init(2, 4, rng);
    Tensor x = Tensor::from_data({2}, {0.3, -0.2});
    bccn::LstmState s{Tensor::zeros({4}), Tensor::zeros({4})};
    for (int t = 0; t < 600; ++t) s = bccn::lstm_step(x, s.h, s.c, p);
    bccn::backward(bccn::sum(s.h));
    for (const Tensor& t : p.parameters()) {
        for (double g : t.grad()) CHECK(std::isfinite(g));
    }
}
