#include "powercast/autodiff.hpp"

#include "powercast/errors.hpp"
#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace powercast;
using autodiff::Tensor;

namespace {

Tensor random_leaf(autodiff::Shape shape, std::uint64_t seed, bool requires_grad = true,
                   double lo = -1.0, double hi = 1.0) {
    return Tensor::from(shape, tests::random_signal(autodiff::shape_numel(shape), seed, lo, hi),
                        requires_grad);
}

} // namespace

TEST_CASE("Activation values at the origin", "[autodiff][forward]") {
    const Tensor x = Tensor::zeros({3});
    CHECK(autodiff::sigmoid(x).values() == std::vector<double>{0.5, 0.5, 0.5});
    CHECK(autodiff::tanh(x).values() == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(autodiff::relu(x).values() == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(autodiff::sin(x).values() == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("Softmax of a constant row is uniform", "[autodiff][forward]") {
    const Tensor x = Tensor::from({1, 3}, {1.0, 1.0, 1.0});
    const auto y = autodiff::softmax_lastdim(x).values();
    for (double v : y) CHECK(v == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("Softmax rows are a probability distribution", "[autodiff][property]") {
    const Tensor x = random_leaf({7, 11}, 5, false, -30.0, 30.0);
    const auto y = autodiff::softmax_lastdim(x).values();
    for (std::size_t r = 0; r < 7; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 11; ++c) {
            CHECK(y[r * 11 + c] >= 0.0);
            sum += y[r * 11 + c];
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("Valid convolution slides a sum", "[autodiff][forward]") {
    const Tensor x = Tensor::from({1, 4, 1}, {1.0, 2.0, 3.0, 4.0});
    const Tensor w = Tensor::from({2, 1, 1}, {1.0, 1.0});
    const auto y = autodiff::conv1d(x, w, autodiff::ConvPadding::valid);
    CHECK(y.shape() == autodiff::Shape{1, 3, 1});
    CHECK(y.values() == std::vector<double>{3.0, 5.0, 7.0});
}

TEST_CASE("Same padding preserves length", "[autodiff][forward]") {
    const Tensor x = random_leaf({2, 9, 3}, 6, false);
    const Tensor w = random_leaf({3, 3, 5}, 7, false);
    const auto y = autodiff::conv1d(x, w, autodiff::ConvPadding::same);
    CHECK(y.shape() == autodiff::Shape{2, 9, 5});
}

TEST_CASE("Layer norm output has zero mean and unit variance", "[autodiff][property]") {
    const Tensor x = random_leaf({5, 16}, 8, false, -3.0, 5.0);
    const auto y = autodiff::layer_norm(x, 1e-9).values();
    for (std::size_t r = 0; r < 5; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < 16; ++c) mean += y[r * 16 + c];
        mean /= 16.0;
        for (std::size_t c = 0; c < 16; ++c) {
            var += (y[r * 16 + c] - mean) * (y[r * 16 + c] - mean);
        }
        var /= 16.0;
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(var == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("Gradient of a sum is ones", "[autodiff][backward]") {
    Tensor x = Tensor::from({3}, {5.0, -2.0, 0.25}, true);
    autodiff::backward(autodiff::sum_all(x));
    CHECK(x.grad() == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("Gradient of sum(x*x) is 2x", "[autodiff][backward]") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    autodiff::backward(autodiff::sum_all(autodiff::mul(x, x)));
    CHECK(x.grad() == std::vector<double>{2.0, 4.0});
}

TEST_CASE("Backward requires a scalar loss", "[autodiff][backward][error]") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(autodiff::backward(autodiff::mul(x, x)), UsageError);
}

TEST_CASE("Two-layer MLP gradients match hand-rolled finite differences",
          "[autodiff][backward][oracle]") {
    const Tensor w1 = random_leaf({4, 5}, 100, false);
    const Tensor b1 = random_leaf({5}, 101, false);
    const Tensor w2 = random_leaf({5, 1}, 102, false);
    const std::vector<double> point = tests::random_signal(4, 103);

    const auto f = [&](const std::vector<double>& values) {
        autodiff::NoGradGuard guard;
        const Tensor x = Tensor::from({1, 4}, values);
        const Tensor h = autodiff::tanh(autodiff::affine(x, w1, b1));
        return autodiff::sum_all(autodiff::matmul(h, w2)).item();
    };

    Tensor x = Tensor::from({1, 4}, point, true);
    const Tensor h = autodiff::tanh(autodiff::affine(x, w1, b1));
    autodiff::backward(autodiff::sum_all(autodiff::matmul(h, w2)));
    const auto& analytic = x.grad();

    const double step = 1e-5;
    for (std::size_t i = 0; i < point.size(); ++i) {
        std::vector<double> plus = point, minus = point;
        plus[i] += step;
        minus[i] -= step;
        const double numeric = (f(plus) - f(minus)) / (2.0 * step);
        CHECK(analytic[i] == Catch::Approx(numeric).margin(1e-7));
    }
}

TEST_CASE("grad_check on x^2 is nearly exact", "[autodiff][gradcheck]") {
    const auto report = autodiff::grad_check(
        [](const Tensor& x) { return autodiff::sum_all(autodiff::mul(x, x)); },
        Tensor::from({1}, {3.0}), 1e-5);
    CHECK(report.all_finite);
    CHECK(report.max_rel_error < 1e-7);
}

TEST_CASE("Every primitive passes grad_check at random points", "[autodiff][gradcheck]") {
    struct Case {
        const char* name;
        autodiff::Shape shape;
        std::function<Tensor(const Tensor&)> f;
    };
    const Tensor rhs = random_leaf({4, 3}, 200, false);
    const Tensor mat = random_leaf({3, 6}, 201, false);
    const Tensor kernel = random_leaf({3, 2, 4}, 202, false);
    const Tensor gamma = random_leaf({6}, 203, false);
    const std::vector<double> mask{1, 0, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1};

    const std::vector<Case> cases{
        {"add", {4, 3}, [&](const Tensor& x) {
             return autodiff::sum_all(autodiff::mul(autodiff::add(x, rhs),
                                                    autodiff::add(x, rhs)));
         }},
        {"sub_broadcast", {4, 3}, [&](const Tensor& x) {
             const Tensor bias = Tensor::from({3}, {0.3, -0.2, 0.9});
             const Tensor d = autodiff::sub(x, bias);
             return autodiff::sum_all(autodiff::mul(d, d));
         }},
        {"mul_broadcast", {4, 3}, [&](const Tensor& x) {
             const Tensor g = Tensor::from({3}, {1.5, -0.7, 0.4});
             return autodiff::sum_all(autodiff::mul(autodiff::mul(x, g), x));
         }},
        {"scale", {5}, [](const Tensor& x) {
             return autodiff::sum_all(autodiff::mul(autodiff::scale(x, -2.5), x));
         }},
        {"sigmoid", {7}, [](const Tensor& x) {
             return autodiff::sum_all(autodiff::mul(autodiff::sigmoid(x),
                                                    autodiff::sigmoid(x)));
         }},
        {"tanh", {7}, [](const Tensor& x) {
             return autodiff::sum_all(autodiff::mul(autodiff::tanh(x), autodiff::tanh(x)));
         }},
        {"sin", {7}, [](const Tensor& x) {
             return autodiff::sum_all(autodiff::mul(autodiff::sin(x), autodiff::sin(x)));
         }},
        {"matmul", {4, 3}, [&](const Tensor& x) {
             const Tensor y = autodiff::matmul(x, mat);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"matmul_batched", {2, 4, 3}, [&](const Tensor& x) {
             const Tensor y = autodiff::matmul(x, autodiff::transpose_last(x));
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"softmax", {3, 5}, [](const Tensor& x) {
             const Tensor y = autodiff::softmax_lastdim(x);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"conv1d_same", {2, 6, 2}, [&](const Tensor& x) {
             const Tensor y = autodiff::conv1d(x, kernel, autodiff::ConvPadding::same);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"conv1d_valid", {2, 6, 2}, [&](const Tensor& x) {
             const Tensor y = autodiff::conv1d(x, kernel, autodiff::ConvPadding::valid);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"conv1d_kernel", {3, 2, 4}, [&](const Tensor& w) {
             const Tensor x = random_leaf({2, 6, 2}, 204, false);
             const Tensor y = autodiff::conv1d(x, w, autodiff::ConvPadding::same);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"layer_norm", {4, 6}, [&](const Tensor& x) {
             const Tensor y = autodiff::layer_norm(x, 1e-9);
             return autodiff::sum_all(autodiff::mul(autodiff::mul(y, gamma), y));
         }},
        {"dropout", {3, 4}, [&](const Tensor& x) {
             const Tensor y = autodiff::dropout(x, mask, 0.75);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"concat_slice", {3, 4}, [](const Tensor& x) {
             const Tensor left = autodiff::slice_lastdim(x, 0, 2);
             const Tensor right = autodiff::slice_lastdim(x, 2, 4);
             const Tensor parts[] = {right, left};
             const Tensor y = autodiff::concat_lastdim(parts);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"mean_axis", {3, 5, 2}, [](const Tensor& x) {
             const Tensor y = autodiff::mean_axis(x, 1);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"select_step", {3, 5, 2}, [](const Tensor& x) {
             const Tensor y = autodiff::select_step(x, 3);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"expand_batch", {4, 3}, [](const Tensor& x) {
             const Tensor y = autodiff::expand_batch(x, 5);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"transpose_last", {4, 3}, [](const Tensor& x) {
             const Tensor y = autodiff::transpose_last(x);
             return autodiff::sum_all(autodiff::mul(y, y));
         }},
        {"mse", {4, 3}, [&](const Tensor& x) { return autodiff::mse(x, rhs); }},
    };

    for (const Case& test_case : cases) {
        INFO(test_case.name);
        for (std::uint64_t trial = 0; trial < 3; ++trial) {
            const Tensor point =
                random_leaf(test_case.shape, 300 + 17 * trial, true, -1.5, 1.5);
            const auto report = autodiff::grad_check(test_case.f, point, 1e-5);
            CHECK(report.all_finite);
            CHECK(report.max_rel_error < 1e-6);
        }
    }
}

TEST_CASE("relu grad_check away from the kink", "[autodiff][gradcheck]") {
    // Resample so no coordinate sits within 1e-3 of the kink.
    std::vector<double> values = tests::random_signal(9, 400, -2.0, 2.0);
    for (double& v : values) {
        if (std::fabs(v) < 1e-3) v = 0.5;
    }
    const auto report = autodiff::grad_check(
        [](const Tensor& x) {
            const Tensor y = autodiff::relu(x);
            return autodiff::sum_all(autodiff::mul(y, y));
        },
        Tensor::from({9}, values), 1e-5);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("Shape errors report both shapes", "[autodiff][error]") {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({4, 5});
    try {
        autodiff::matmul(a, b);
        FAIL("matmul should have thrown");
    } catch (const ShapeError& error) {
        const std::string msg = error.what();
        CHECK(msg.find("(2,3)") != std::string::npos);
        CHECK(msg.find("(4,5)") != std::string::npos);
    }
    CHECK_THROWS_AS(autodiff::add(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), ShapeError);
}

TEST_CASE("Backward is deterministic", "[autodiff][property]") {
    const auto run = [] {
        Tensor x = random_leaf({6, 6}, 500, true);
        const Tensor w = random_leaf({6, 6}, 501, false);
        Tensor y = autodiff::matmul(x, w);
        y = autodiff::softmax_lastdim(y);
        y = autodiff::layer_norm(y, 1e-9);
        autodiff::backward(autodiff::sum_all(autodiff::mul(y, y)));
        return x.grad();
    };
    const auto first = run();
    const auto second = run();
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i] == second[i]);  // bit-identical
    }
}

TEST_CASE("Gradient accumulates when a tensor is reused", "[autodiff][backward]") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    const Tensor doubled = autodiff::add(x, x);
    autodiff::backward(autodiff::sum_all(doubled));
    CHECK(x.grad() == std::vector<double>{2.0, 2.0});
}

TEST_CASE("NoGradGuard suppresses graph recording", "[autodiff]") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    autodiff::NoGradGuard guard;
    const Tensor y = autodiff::mul(x, x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("Dropout scales by the keep probability", "[autodiff]") {
    const Tensor x = Tensor::from({4}, {1.0, 2.0, 3.0, 4.0});
    const std::vector<double> mask{1.0, 0.0, 1.0, 0.0};
    const auto y = autodiff::dropout(x, mask, 0.5).values();
    CHECK(y == std::vector<double>{2.0, 0.0, 6.0, 0.0});
    CHECK_THROWS_AS(autodiff::dropout(x, {1.0}, 0.5), ShapeError);
}

TEST_CASE("detach cuts the graph", "[autodiff]") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    const Tensor cut = autodiff::detach(autodiff::mul(x, x));
    CHECK_FALSE(cut.requires_grad());
    autodiff::backward(autodiff::sum_all(autodiff::mul(x, x)));
    CHECK(x.has_grad());
}
