// Copyright 2026 The qgst Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qgst/autodiff.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "grad_check.hpp"

using namespace qgst;
using namespace qgst::ad;
using qgst::testing::grad_check;
using qgst::testing::random_values;

TEST(Tensor, shape_validation) {
    EXPECT_THROW(Tensor::constant({2, 3}, std::vector<double>(5)), std::invalid_argument);
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL();
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2, 3]"), std::string::npos);
        EXPECT_NE(msg.find("[4, 2]"), std::string::npos);
    }
    EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), std::invalid_argument);
    EXPECT_THROW(reshape(a, {4}), std::invalid_argument);
    EXPECT_THROW(Tensor::zeros({2}).backward(), std::invalid_argument);
}

TEST(Ops, simple_values) {
    const Tensor s = softmax(Tensor::constant({5}, std::vector<double>(5, 3.3)));
    for (double v : s.values()) EXPECT_NEAR(v, 0.2, 1e-15);
    EXPECT_EQ(tanh(Tensor::scalar(0.0)).item(), 0.0);
    EXPECT_EQ(sigmoid(Tensor::scalar(0.0)).item(), 0.5);
    EXPECT_EQ(abs(Tensor::scalar(-2.0)).item(), 2.0);
    EXPECT_EQ(relu(Tensor::scalar(-2.0)).item(), 0.0);

    const Tensor r = softmax(Tensor::constant({3, 7}, random_values(21, 1, -5, 5)));
    for (int i = 0; i < 3; ++i) {
        double total = 0;
        for (int j = 0; j < 7; ++j) total += r[i * 7 + j];
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Ops, layer_norm_statistics) {
    // eps = 0 exposes the exact normalization; models use a small positive eps.
    const Tensor x = Tensor::constant({4, 9}, random_values(36, 2, -3, 5));
    const Tensor y = layer_norm(x, {}, {}, 0.0);
    for (int r = 0; r < 4; ++r) {
        double mu = 0, var = 0;
        for (int c = 0; c < 9; ++c) mu += y[r * 9 + c];
        mu /= 9;
        for (int c = 0; c < 9; ++c) var += (y[r * 9 + c] - mu) * (y[r * 9 + c] - mu);
        var /= 9;
        EXPECT_NEAR(mu, 0.0, 1e-10);
        EXPECT_NEAR(var, 1.0, 1e-10);
    }
}

TEST(Ops, transpose_concat_slice_values) {
    const Tensor x = Tensor::constant({2, 3, 4}, random_values(24, 3));
    const Tensor t = transpose(x, 0, 2);
    ASSERT_EQ(t.shape(), (Shape{4, 3, 2}));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 4; ++k) EXPECT_EQ(t[(k * 3 + j) * 2 + i], x[(i * 3 + j) * 4 + k]);
    const Tensor c = concat({slice(x, 1, 0, 1), slice(x, 1, 1, 3)}, 1);
    EXPECT_EQ(std::vector<double>(c.values().begin(), c.values().end()),
              std::vector<double>(x.values().begin(), x.values().end()));
    EXPECT_THROW(slice(x, 1, 2, 2), std::invalid_argument);
}

TEST(Backward, tanh_at_zero) {
    Tensor x = Tensor::parameter({}, {0.0});
    tanh(x).backward();
    EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Backward, matmul_matches_finite_differences) {
    Tensor a = Tensor::parameter({4, 3}, random_values(12, 4));
    Tensor b = Tensor::parameter({3, 2}, random_values(6, 5));
    const Tensor w = Tensor::constant({4, 2}, random_values(8, 6));
    const auto r = grad_check({a, b}, [&] { return sum(mul(matmul(a, b), w)); }, 0, 1);
    EXPECT_EQ(r.checked, 18);
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Backward, every_op_matches_finite_differences) {
    Tensor x = Tensor::parameter({2, 3, 4}, random_values(24, 7));
    Tensor y = Tensor::parameter({4}, random_values(4, 8));
    Tensor g = Tensor::parameter({4}, random_values(4, 9, 0.5, 1.5));
    Tensor bta = Tensor::parameter({4}, random_values(4, 10));
    Tensor table = Tensor::parameter({5, 4}, random_values(20, 11));
    Tensor bm = Tensor::parameter({2, 4, 3}, random_values(24, 12));
    const Tensor w = Tensor::constant({4, 3, 2}, random_values(24, 13));
    auto loss = [&] {
        Tensor h = add(mul(x, y), sub(Tensor::scalar(0.3), x));
        h = layer_norm(h, g, bta);
        h = add(softmax(scale(h, 1.7)), gelu(h));
        h = add(h, silu(sigmoid(tanh(h))));
        Tensor e = reshape(embedding_lookup(table, {1, 4, 1, 0, 2, 3}), {2, 3, 4});
        h = concat({slice(h, 1, 0, 2), slice(add(h, e), 1, 2, 3)}, 1);
        Tensor bmm = matmul(h, bm);  // [2, 3, 3]
        Tensor t = transpose(h, 0, 1);  // [3, 2, 4]
        Tensor pooled = mean(t, 1);     // [3, 4]
        Tensor a = abs(add_scalar(pooled, 0.05));
        return add(sum(mul(sum(t, 0), slice(a, 0, 0, 2))), add(mean(bmm), sum(mul(transpose(h, 0, 2), w))));
    };
    const auto r = grad_check({x, y, g, bta, table, bm}, loss, 0, 2);
    EXPECT_EQ(r.checked, 24 + 4 + 4 + 4 + 20 + 24);
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Backward, linearity_over_sum_of_losses) {
    Tensor x = Tensor::parameter({3, 3}, random_values(9, 20));
    const Tensor m = Tensor::constant({3, 3}, random_values(9, 21));
    auto l1 = [&] { return sum(tanh(matmul(x, m))); };
    auto l2 = [&] { return mean(softmax(x)); };
    x.zero_grad();
    l1().backward();
    std::vector<double> g1(x.grad().begin(), x.grad().end());
    x.zero_grad();
    l2().backward();
    std::vector<double> g2(x.grad().begin(), x.grad().end());
    x.zero_grad();
    add(l1(), l2()).backward();
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(x.grad()[i], g1[i] + g2[i], 1e-14);
}

TEST(Backward, unreachable_parameters_get_zero_and_inputs_are_untouched) {
    Tensor x = Tensor::parameter({3}, {1, 2, 3});
    Tensor unused = Tensor::parameter({2}, {5, 6});
    const std::vector<double> before(x.values().begin(), x.values().end());
    const Tensor l = sum(mul(x, x));
    l.backward();
    EXPECT_EQ(std::vector<double>(x.values().begin(), x.values().end()), before);
    EXPECT_EQ(unused.grad()[0], 0.0);
    EXPECT_EQ(unused.grad()[1], 0.0);
    EXPECT_EQ(x.grad()[2], 6.0);
}

TEST(Adam, zero_gradient_leaves_parameters) {
    Tensor x = Tensor::parameter({2}, {0.3, -0.7});
    Adam opt({x});
    opt.zero_grad();
    opt.step();
    EXPECT_EQ(x[0], 0.3);
    EXPECT_EQ(x[1], -0.7);
}

TEST(Adam, minimizes_scalar_quadratic) {
    Tensor x = Tensor::parameter({}, {1.0});
    Adam opt({x}, {.lr = 0.1});
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        mul(x, x).backward();
        opt.step();
    }
    // Independent recursion of the same update rule.
    double v = 1.0, m1 = 0, m2 = 0;
    for (int t = 1; t <= 200; ++t) {
        const double g = 2 * v;
        m1 = 0.9 * m1 + 0.1 * g;
        m2 = 0.999 * m2 + 0.001 * g * g;
        v -= 0.1 * (m1 / (1 - std::pow(0.9, t))) / (std::sqrt(m2 / (1 - std::pow(0.999, t))) + 1e-8);
    }
    EXPECT_NEAR(x.item(), v, 1e-12);
    EXPECT_LT(std::abs(x.item()), 1e-3);
}

TEST(Adam, missing_gradient_is_an_error) {
    Tensor x = Tensor::constant({1}, {1.0});
    Adam opt({x});
    EXPECT_THROW(opt.step(), std::logic_error);
}

TEST(Adam, deterministic_runs) {
    auto run = [] {
        std::mt19937_64 rng(99);
        Tensor w = Tensor::parameter({3, 3}, uniform_init(9, 3, rng));
        Adam opt({w});
        const Tensor x = Tensor::constant({2, 3}, random_values(6, 1));
        for (int i = 0; i < 10; ++i) {
            opt.zero_grad();
            sum(tanh(matmul(x, w))).backward();
            opt.step();
        }
        return std::vector<double>(w.values().begin(), w.values().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Checkpoint, round_trip_and_validation) {
    const auto dir = std::filesystem::temp_directory_path() / "qgst_ckpt_test";
    std::filesystem::remove_all(dir);
    ParameterStore a;
    a.add("w", {2, 3}, random_values(6, 1));
    a.add("b", {3}, random_values(3, 2));
    save_checkpoint(a, dir, {{"note", "x"}});

    ParameterStore b;
    b.add("w", {2, 3}, std::vector<double>(6, 0));
    b.add("b", {3}, std::vector<double>(3, 0));
    const auto manifest = load_checkpoint(b, dir);
    EXPECT_EQ(manifest["extra"]["note"], "x");
    for (int i = 0; i < 6; ++i) EXPECT_EQ(b.get("w")[i], a.get("w")[i]);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(b.get("b")[i], a.get("b")[i]);

    ParameterStore wrong_shape;
    wrong_shape.add("w", {3, 2}, std::vector<double>(6, 0));
    wrong_shape.add("b", {3}, std::vector<double>(3, 0));
    EXPECT_THROW(load_checkpoint(wrong_shape, dir), std::invalid_argument);
    ParameterStore wrong_name;
    wrong_name.add("w", {2, 3}, std::vector<double>(6, 0));
    wrong_name.add("c", {3}, std::vector<double>(3, 0));
    EXPECT_THROW(load_checkpoint(wrong_name, dir), std::invalid_argument);
    EXPECT_THROW(load_checkpoint(b, dir / "missing"), std::runtime_error);
    std::filesystem::remove_all(dir);
}
