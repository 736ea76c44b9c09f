#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bccn/ops.hpp"
#include "oracles.hpp"

using bccn::Tensor;
using bccn::Triple;
using oracles::max_abs_diff;
using oracles::random_tensor;

TEST_CASE("elementwise ops") {
    Tensor a = Tensor::from_data({2, 2}, {1.0, -2.0, 3.0, -4.0});
    Tensor b = Tensor::from_data({2, 2}, {0.5, 0.5, -1.0, 2.0});

    CHECK(bccn::add(a, b).data() == std::vector<double>{1.5, -1.5, 2.0, -2.0});
    CHECK(bccn::sub(a, b).data() == std::vector<double>{0.5, -2.5, 4.0, -6.0});
    CHECK(bccn::mul(a, b).data() == std::vector<double>{0.5, -1.0, -3.0, -8.0});
    CHECK(bccn::scale(a, 2.0).data() == std::vector<double>{2.0, -4.0, 6.0, -8.0});
    CHECK(bccn::relu(a).data() == std::vector<double>{1.0, 0.0, 3.0, 0.0});

    const Tensor s = bccn::sigmoid(Tensor::from_data({1}, {0.0}));
    CHECK(s.value() == Catch::Approx(0.5).margin(1e-15));
    const Tensor t = bccn::tanh_op(Tensor::from_data({1}, {0.5}));
    CHECK(t.value() == Catch::Approx(std::tanh(0.5)).margin(1e-15));

    CHECK(bccn::sum(a).value() == Catch::Approx(-2.0));
    CHECK(bccn::mean(a).value() == Catch::Approx(-0.5));

    CHECK_THROWS_AS(bccn::add(a, Tensor::from_data({3}, {1, 2, 3})), bccn::ShapeError);
}

TEST_CASE("reshape, pick, concat, stacking") {
    Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = bccn::reshape(a, {3, 2});
    CHECK(r.shape() == std::vector<std::size_t>{3, 2});
    CHECK(r.data() == a.data());
    CHECK_THROWS_AS(bccn::reshape(a, {4, 2}), bccn::ShapeError);

    CHECK(bccn::pick(a, 4).value() == 5.0);
    CHECK_THROWS_AS(bccn::pick(a, 6), bccn::ShapeError);

    Tensor c = bccn::concat_vec({Tensor::from_data({2}, {1, 2}), Tensor::from_data({1}, {3})});
    CHECK(c.data() == std::vector<double>{1, 2, 3});

    Tensor st = bccn::stack_rows({Tensor::from_data({2}, {1, 2}), Tensor::from_data({2}, {3, 4})});
    CHECK(st.shape() == std::vector<std::size_t>{2, 2});
    CHECK(st.data() == std::vector<double>{1, 2, 3, 4});

    CHECK(bccn::gather_row(a, 1).data() == std::vector<double>{4, 5, 6});
    CHECK_THROWS_AS(bccn::gather_row(a, 2), bccn::ShapeError);

    CHECK(bccn::mean_rows(a).data() == std::vector<double>{2.5, 3.5, 4.5});
    CHECK(bccn::max_rows(a).data() == std::vector<double>{4, 5, 6});
}

TEST_CASE("matmul family matches loop oracles") {
    bccn::Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(1, 6));
        const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform_int(1, 6));
        const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform_int(1, 6));
        Tensor a = random_tensor({n, k}, rng);
        Tensor b = random_tensor({k, m}, rng);
        CHECK(max_abs_diff(bccn::matmul(a, b).data(), oracles::matmul_oracle(a, b)) < 1e-12);

        Tensor at = bccn::transpose(a);
        REQUIRE(at.shape() == std::vector<std::size_t>{k, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j)
                CHECK(at.data()[j * n + i] == a.data()[i * k + j]);

        Tensor x = random_tensor({k}, rng);
        Tensor mv = bccn::matvec(a, x);
        Tensor mv_ref = bccn::matmul(a, bccn::reshape(x, {k, 1}));
        CHECK(max_abs_diff(mv.data(), mv_ref.data()) < 1e-12);

        Tensor p = random_tensor({n}, rng);
        Tensor vm = bccn::vecmat(p, a);
        Tensor vm_ref = bccn::matmul(bccn::reshape(p, {1, n}), a);
        CHECK(max_abs_diff(vm.data(), vm_ref.data()) < 1e-12);
    }
    CHECK_THROWS_AS(bccn::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                    bccn::ShapeError);
}

TEST_CASE("affine matches a double-loop oracle") {
    bccn::Rng rng(11);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(0, 7));
        const std::size_t din = 1 + static_cast<std::size_t>(rng.uniform_int(0, 7));
        const std::size_t dout = 1 + static_cast<std::size_t>(rng.uniform_int(0, 7));
        Tensor in = random_tensor({n, din}, rng);
        Tensor w = random_tensor({dout, din}, rng);
        Tensor b = random_tensor({dout}, rng);
        Tensor out = bccn::affine(in, w, b);
        REQUIRE(out.shape() == std::vector<std::size_t>{n, dout});
        CHECK(max_abs_diff(out.data(), oracles::affine_oracle(in, w, b)) < 1e-9);
    }
}

TEST_CASE("softmax") {
    SECTION("known values") {
        Tensor t = Tensor::from_data({3}, {1.0, 2.0, 3.0});
        Tensor s = bccn::softmax(t, 0);
        CHECK(s.data()[0] == Catch::Approx(0.09003057317038046).margin(1e-12));
        CHECK(s.data()[1] == Catch::Approx(0.24472847105479767).margin(1e-12));
        CHECK(s.data()[2] == Catch::Approx(0.66524095577482190).margin(1e-12));
    }
    SECTION("matches oracle on every axis, rows sum to 1, shift invariant") {
        bccn::Rng rng(3);
        for (int trial = 0; trial < 5; ++trial) {
            Tensor t = random_tensor({2, 4, 3}, rng, 5.0);
            for (std::size_t axis = 0; axis < 3; ++axis) {
                Tensor s = bccn::softmax(t, axis);
                CHECK(max_abs_diff(s.data(), oracles::softmax_oracle(t, axis)) < 1e-9);
                double total = 0.0;
                for (double v : s.data()) {
                    CHECK(v > 0.0);
                    total += v;
                }
                CHECK(total == Catch::Approx(static_cast<double>(t.numel()) /
                                             static_cast<double>(t.extent(axis)))
                                   .margin(1e-9));

                std::vector<double> shifted = t.data();
                for (double& v : shifted) v += 123.25;
                Tensor s2 = bccn::softmax(Tensor::from_data(t.shape(), shifted), axis);
                CHECK(max_abs_diff(s.data(), s2.data()) < 1e-9);
            }
        }
    }
    SECTION("large logits stay finite") {
        Tensor s = bccn::softmax(Tensor::from_data({2}, {1000.0, 1000.5}), 0);
        CHECK(std::isfinite(s.data()[0]));
        CHECK(s.data()[0] + s.data()[1] == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("cross entropy") {
    CHECK(bccn::cross_entropy(Tensor::from_data({2}, {0.0, 0.0}), 0).value() ==
          Catch::Approx(std::log(2.0)).margin(1e-12));
    bccn::Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor logits = random_tensor({6}, rng, 4.0);
        const std::size_t label = static_cast<std::size_t>(rng.uniform_int(0, 5));
        double mx = -1e300;
        for (double v : logits.data()) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : logits.data()) z += std::exp(v - mx);
        const double want = std::log(z) + mx - logits.data()[label];
        CHECK(bccn::cross_entropy(logits, label).value() == Catch::Approx(want).margin(1e-9));
    }
    CHECK_THROWS_AS(bccn::cross_entropy(Tensor::from_data({2}, {0.0, 0.0}), 2),
                    bccn::ValueError);
}

TEST_CASE("conv3d matches the naive seven-loop oracle") {
    bccn::Rng rng(17);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t ci = 1 + static_cast<std::size_t>(rng.uniform_int(0, 2));
        const std::size_t co = 1 + static_cast<std::size_t>(rng.uniform_int(0, 2));
        const Triple k = {1 + static_cast<std::size_t>(rng.uniform_int(0, 2)),
                          1 + static_cast<std::size_t>(rng.uniform_int(0, 2)),
                          1 + static_cast<std::size_t>(rng.uniform_int(0, 2))};
        const Triple stride = {1 + static_cast<std::size_t>(rng.uniform_int(0, 1)),
                               1 + static_cast<std::size_t>(rng.uniform_int(0, 1)),
                               1 + static_cast<std::size_t>(rng.uniform_int(0, 1))};
        const Triple pad = {static_cast<std::size_t>(rng.uniform_int(0, 1)),
                            static_cast<std::size_t>(rng.uniform_int(0, 1)),
                            static_cast<std::size_t>(rng.uniform_int(0, 1))};
        const std::size_t t_n = k[0] + static_cast<std::size_t>(rng.uniform_int(0, 4));
        const std::size_t h_n = k[1] + static_cast<std::size_t>(rng.uniform_int(0, 4));
        const std::size_t w_n = k[2] + static_cast<std::size_t>(rng.uniform_int(0, 4));

        Tensor in = random_tensor({ci, t_n, h_n, w_n}, rng);
        Tensor ker = random_tensor({co, ci, k[0], k[1], k[2]}, rng);
        Tensor bias = random_tensor({co}, rng);
        Tensor out = bccn::conv3d(in, ker, bias, stride, pad);
        REQUIRE(out.shape() ==
                std::vector<std::size_t>{co, oracles::conv_extent(t_n, k[0], stride[0], pad[0]),
                                         oracles::conv_extent(h_n, k[1], stride[1], pad[1]),
                                         oracles::conv_extent(w_n, k[2], stride[2], pad[2])});
        CHECK(max_abs_diff(out.data(), oracles::conv3d_oracle(in, ker, bias, stride, pad)) <
              1e-9);
    }
    SECTION("shape errors") {
        Tensor in = Tensor::zeros({2, 4, 4, 4});
        CHECK_THROWS_AS(bccn::conv3d(in, Tensor::zeros({3, 1, 1, 1, 1}), Tensor::zeros({3}),
                                     {1, 1, 1}, {0, 0, 0}),
                        bccn::ShapeError);
        CHECK_THROWS_AS(bccn::conv3d(in, Tensor::zeros({3, 2, 1, 1, 1}), Tensor::zeros({2}),
                                     {1, 1, 1}, {0, 0, 0}),
                        bccn::ShapeError);
        CHECK_THROWS_AS(bccn::conv3d(in, Tensor::zeros({3, 2, 5, 1, 1}), Tensor::zeros({3}),
                                     {1, 1, 1}, {0, 0, 0}),
                        bccn::ShapeError);
    }
}

TEST_CASE("lstm_step matches the scalar oracle") {
    bccn::Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t in_n = 1 + static_cast<std::size_t>(rng.uniform_int(0, 4));
        const std::size_t hid = 1 + static_cast<std::size_t>(rng.uniform_int(0, 4));
        bccn::LstmParams p = bccn::LstmParams::init(in_n, hid, rng);
        Tensor x = random_tensor({in_n}, rng);
        Tensor h = random_tensor({hid}, rng);
        Tensor c = random_tensor({hid}, rng);
        bccn::LstmState next = bccn::lstm_step(x, h, c, p);
        oracles::LstmOracleOut want = oracles::lstm_oracle(x, h, c, p);
        CHECK(max_abs_diff(next.h.data(), want.h) < 1e-9);
        CHECK(max_abs_diff(next.c.data(), want.c) < 1e-9);
    }
    SECTION("hand-computed single cell") {
        bccn::Rng rng2(1);
        bccn::LstmParams p = bccn::LstmParams::init(1, 1, rng2);
        p.w_i.leaf_data()[0] = 1.0;
        p.w_f.leaf_data()[0] = 1.0;
        p.w_g.leaf_data()[0] = 1.0;
        p.w_o.leaf_data()[0] = 1.0;
        for (Tensor* t : {&p.u_i, &p.u_f, &p.u_g, &p.u_o, &p.b_i, &p.b_f, &p.b_g, &p.b_o})
            t->leaf_data()[0] = 0.0;
        Tensor x = Tensor::from_data({1}, {0.5});
        Tensor h0 = Tensor::zeros({1});
        Tensor c0 = Tensor::zeros({1});
        bccn::LstmState next = bccn::lstm_step(x, h0, c0, p);
        const double sig05 = 1.0 / (1.0 + std::exp(-0.5));
        const double c1 = sig05 * std::tanh(0.5);
        CHECK(next.c.value() == Catch::Approx(c1).margin(1e-12));
        CHECK(next.h.value() == Catch::Approx(sig05 * std::tanh(c1)).margin(1e-12));
    }
    SECTION("forget bias starts at one") {
        bccn::Rng rng2(2);
        bccn::LstmParams p = bccn::LstmParams::init(3, 4, rng2);
        for (double v : p.b_f.data()) CHECK(v == 1.0);
        for (double v : p.b_i.data()) CHECK(v == 0.0);
    }
}

TEST_CASE("time-axis ops") {
    // 2 channels x 4 frames x 1 x 1, values encode (channel, frame).
    Tensor x = Tensor::from_data({2, 4, 1, 1}, {0, 1, 2, 3, 10, 11, 12, 13});

    SECTION("gather_time picks frames in order") {
        Tensor g = bccn::gather_time(x, {1, 3});
        CHECK(g.shape() == std::vector<std::size_t>{2, 2, 1, 1});
        CHECK(g.data() == std::vector<double>{1, 3, 11, 13});
        CHECK_THROWS_AS(bccn::gather_time(x, {4}), bccn::ShapeError);
        CHECK_THROWS_AS(bccn::gather_time(x, {}), bccn::ShapeError);
    }
    SECTION("inflate_time broadcasts segments") {
        Tensor k = Tensor::from_data({2, 2, 1, 1}, {5, 6, 7, 8});
        Tensor inf = bccn::inflate_time(k, {0, 0, 1, 1});
        CHECK(inf.shape() == std::vector<std::size_t>{2, 4, 1, 1});
        CHECK(inf.data() == std::vector<double>{5, 5, 6, 6, 7, 7, 8, 8});
        CHECK_THROWS_AS(bccn::inflate_time(k, {0, 0, 2, 2}), bccn::ShapeError);
    }
    SECTION("concat_channels stacks along channels") {
        Tensor a = Tensor::from_data({1, 2, 1, 1}, {1, 2});
        Tensor b = Tensor::from_data({2, 2, 1, 1}, {3, 4, 5, 6});
        Tensor c = bccn::concat_channels({a, b});
        CHECK(c.shape() == std::vector<std::size_t>{3, 2, 1, 1});
        CHECK(c.data() == std::vector<double>{1, 2, 3, 4, 5, 6});
        CHECK_THROWS_AS(bccn::concat_channels({a, Tensor::zeros({1, 3, 1, 1})}),
                        bccn::ShapeError);
    }
    SECTION("global_avg_pool averages per channel") {
        Tensor g = bccn::global_avg_pool(x);
        CHECK(g.shape() == std::vector<std::size_t>{2});
        CHECK(g.data() == std::vector<double>{1.5, 11.5});
    }
}

TEST_CASE("tensor factories validate input") {
    CHECK_THROWS_AS(Tensor::from_data({2}, {1.0}), bccn::ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), bccn::ValueError);
    bccn::Rng rng(1);
    Tensor u = Tensor::uniform({100}, 0.5, rng);
    for (double v : u.data()) {
        CHECK(v <= 0.5);
        CHECK(v >= -0.5);
    }
}
