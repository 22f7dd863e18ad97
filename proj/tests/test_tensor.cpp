#include "bidigen/tensor.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace bidigen;

namespace {

// finite differences through an arbitrary scalar graph over one parameter
double fd_grad(Tensor& param, std::size_t idx, const std::function<double()>& loss_fn, double eps = 1e-5) {
    double& theta = param.data()[idx];
    const double orig = theta;
    theta = orig + eps;
    const double up = loss_fn();
    theta = orig - eps;
    const double down = loss_fn();
    theta = orig;
    return (up - down) / (2.0 * eps);
}

void check_op_gradients(Tensor& param, const std::function<Tensor()>& graph, double tol = 1e-7) {
    param.zero_grad();
    Tensor loss = graph();
    backward(loss);
    const std::vector<double> analytic = param.grad();
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double fd = fd_grad(param, i, [&] { return graph().value(); });
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
        REQUIRE(std::abs(analytic[i] - fd) / denom < tol);
    }
}

}  // namespace

TEST_CASE("sum of a parameter backprops all-ones") {
    Tensor p = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    Tensor loss = sum(p);
    backward(loss);
    REQUIRE(loss.value() == 21.0);
    for (double g : p.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("zero-scaled graph contributes zero gradient") {
    Tensor p = Tensor::from_data({3}, {1, 2, 3}, true);
    Tensor loss = mul_scalar(sum(p), 0.0);
    backward(loss);
    for (double g : p.grad()) REQUIRE(g == 0.0);
}

TEST_CASE("gradients accumulate across backward calls") {
    Tensor p = Tensor::from_data({2}, {1, 1}, true);
    backward(sum(p));
    backward(sum(p));
    for (double g : p.grad()) REQUIRE(g == 2.0);
}

TEST_CASE("backward rejects non-scalar losses") {
    Tensor p = Tensor::from_data({2}, {1, 2}, true);
    REQUIRE_THROWS_AS(backward(p), std::invalid_argument);
}

TEST_CASE("matmul forward and gradient") {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4}, true);
    Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8}, true);
    Tensor c = matmul(a, b);
    REQUIRE(c.data() == std::vector<double>{19, 22, 43, 50});
    check_op_gradients(a, [&] { return sum(matmul(a, b)); });
    check_op_gradients(b, [&] { return sum(matmul(a, b)); });
}

TEST_CASE("matmul_nt matches matmul against the transpose") {
    std::mt19937_64 rng(7);
    Tensor a = Tensor::randn({3, 4}, 1.0, rng, true);
    Tensor b = Tensor::randn({5, 4}, 1.0, rng, true);
    Tensor c = matmul_nt(a, b);
    std::vector<double> bt(4 * 5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) bt[j * 5 + i] = b.data()[i * 4 + j];
    Tensor c2 = matmul(a, Tensor::from_data({4, 5}, bt));
    for (std::size_t i = 0; i < c.size(); ++i) REQUIRE(c.data()[i] == Catch::Approx(c2.data()[i]));
    check_op_gradients(a, [&] { return sum(matmul_nt(a, b)); });
    check_op_gradients(b, [&] { return sum(matmul_nt(a, b)); });
}

TEST_CASE("elementwise and shape op gradients") {
    std::mt19937_64 rng(11);
    Tensor x = Tensor::randn({3, 6}, 1.0, rng, true);
    Tensor bias = Tensor::randn({6}, 1.0, rng, true);

    SECTION("add") {
        Tensor y = Tensor::randn({3, 6}, 1.0, rng, false);
        check_op_gradients(x, [&] { return sum(add(x, y)); });
    }
    SECTION("add_bias_rows") {
        check_op_gradients(bias, [&] { return sum(add_bias_rows(x, bias)); });
        check_op_gradients(x, [&] { return sum(add_bias_rows(x, bias)); });
    }
    SECTION("slice and concat") {
        auto graph = [&] {
            Tensor left = slice_cols(x, 0, 2);
            Tensor right = slice_cols(x, 2, 6);
            return sum(matmul_nt(concat_cols({right, left}), concat_cols({right, left})));
        };
        check_op_gradients(x, graph);
    }
    SECTION("gather_rows") {
        std::vector<TokenId> ids{2, 0, 2, 1};
        check_op_gradients(x, [&] { return sum(gather_rows(x, ids)); });
        Tensor out = gather_rows(x, ids);
        REQUIRE(out.dim(0) == 4);
        for (std::size_t c = 0; c < 6; ++c) {
            REQUIRE(out.data()[0 * 6 + c] == x.data()[2 * 6 + c]);
            REQUIRE(out.data()[2 * 6 + c] == x.data()[2 * 6 + c]);
        }
        REQUIRE_THROWS_AS(gather_rows(x, std::vector<TokenId>{9}), std::out_of_range);
    }
    SECTION("gelu") {
        check_op_gradients(x, [&] { return sum(gelu(x)); });
        Tensor y = gelu(Tensor::from_data({1, 1}, {0.0}));
        REQUIRE(y.data()[0] == 0.0);
    }
    SECTION("layer_norm_rows") {
        Tensor gamma = Tensor::randn({6}, 1.0, rng, true);
        Tensor beta = Tensor::randn({6}, 1.0, rng, true);
        auto graph = [&] {
            Tensor h = layer_norm_rows(x, gamma, beta);
            return cross_entropy_rows(h, std::vector<TokenId>{1, 4, 0},
                                      std::vector<double>{1.0, 0.5, 2.0});
        };
        check_op_gradients(x, graph);
        check_op_gradients(gamma, graph);
        check_op_gradients(beta, graph);
    }
    SECTION("softmax_rows_masked") {
        std::vector<std::uint8_t> mask{1, 1, 0, 1, 1, 0};
        Tensor probs = softmax_rows_masked(x, mask);
        for (std::size_t r = 0; r < 3; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 6; ++c) s += probs.data()[r * 6 + c];
            REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
            REQUIRE(probs.data()[r * 6 + 2] == 0.0);
            REQUIRE(probs.data()[r * 6 + 5] == 0.0);
        }
        auto graph = [&] {
            Tensor p = softmax_rows_masked(x, mask);
            return cross_entropy_rows(matmul_nt(p, p), std::vector<TokenId>{0, 1, 2},
                                      std::vector<double>{1.0, 1.0, 1.0});
        };
        check_op_gradients(x, graph);
        REQUIRE_THROWS_AS(softmax_rows_masked(x, std::vector<std::uint8_t>(6, 0)), std::invalid_argument);
    }
}

TEST_CASE("cross entropy values") {
    SECTION("uniform logits give log V") {
        Tensor row = Tensor::from_data({10}, std::vector<double>(10, 0.37));
        REQUIRE(cross_entropy(row, 3).value() == Catch::Approx(std::log(10.0)).epsilon(1e-12));
    }
    SECTION("saturated one-hot logit gives ~0") {
        std::vector<double> z(10, 0.0);
        z[4] = 1000.0;
        REQUIRE(cross_entropy(Tensor::from_data({10}, z), 4).value() == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("hand-computed log-sum-exp") {
        // frozen: ln(1 + e) for logits [1, 2], target 0
        Tensor row = Tensor::from_data({2}, {1.0, 2.0});
        REQUIRE(cross_entropy(row, 0).value() == Catch::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-12));
        REQUIRE(cross_entropy(row, 0).value() == Catch::Approx(1.3132616875).epsilon(1e-9));
    }
    SECTION("out-of-range target") {
        Tensor row = Tensor::from_data({4}, {0, 0, 0, 0});
        REQUIRE_THROWS_AS(cross_entropy(row, 4), std::out_of_range);
    }
    SECTION("gradient") {
        std::mt19937_64 rng(3);
        Tensor row = Tensor::randn({7}, 1.0, rng, true);
        check_op_gradients(row, [&] { return cross_entropy(row, 5); });
    }
}

TEST_CASE("dropout scales kept entries and zeroes the rest") {
    std::mt19937_64 rng(5);
    Tensor x = Tensor::from_data({1, 1000}, std::vector<double>(1000, 2.0), true);
    Tensor y = dropout(x, 0.25, rng);
    std::size_t kept = 0;
    for (double v : y.data()) {
        if (v != 0.0) {
            REQUIRE(v == Catch::Approx(2.0 / 0.75));
            ++kept;
        }
    }
    REQUIRE(kept > 650);
    REQUIRE(kept < 850);
    backward(sum(y));
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y.data()[i] == 0.0)
            REQUIRE(x.grad()[i] == 0.0);
        else
            REQUIRE(x.grad()[i] == Catch::Approx(1.0 / 0.75));
    }
}

TEST_CASE("tensor invariants") {
    REQUIRE_THROWS_AS(Tensor::from_data({2, 2}, {1.0}), std::invalid_argument);
    Tensor t = Tensor::zeros({3, 4});
    REQUIRE(t.size() == 12);
    REQUIRE(shape_size(t.shape()) == t.size());
}
