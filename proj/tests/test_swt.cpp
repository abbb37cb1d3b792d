#include "powercast/swt.hpp"

#include "powercast/errors.hpp"
#include "helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace powercast;
using swt::WaveletFamily;
using swt::WaveletSpec;

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::fabs(a[i] - b[i]));
    }
    return worst;
}

std::vector<double> circular_shift(const std::vector<double>& x, std::size_t s) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[(i + s) % x.size()] = x[i];
    return out;
}

} // namespace

TEST_CASE("Haar base filters are exact", "[swt][filters]") {
    const auto haar = swt::make_filters(WaveletSpec{WaveletFamily::db1, 3}, 1);
    REQUIRE(haar.low_pass.size() == 2);
    CHECK(haar.low_pass[0] == Catch::Approx(kInvSqrt2).margin(1e-15));
    CHECK(haar.low_pass[1] == Catch::Approx(kInvSqrt2).margin(1e-15));
    CHECK(haar.high_pass[0] == Catch::Approx(kInvSqrt2).margin(1e-15));
    CHECK(haar.high_pass[1] == Catch::Approx(-kInvSqrt2).margin(1e-15));
}

TEST_CASE("Level-2 filters insert one zero between taps", "[swt][filters]") {
    const auto level2 = swt::make_filters(WaveletSpec{WaveletFamily::db1, 3}, 2);
    REQUIRE(level2.low_pass == std::vector<double>{kInvSqrt2, 0.0, kInvSqrt2});
    REQUIRE(level2.high_pass == std::vector<double>{kInvSqrt2, 0.0, -kInvSqrt2});

    const auto level3 = swt::make_filters(WaveletSpec{WaveletFamily::db2, 3}, 3);
    REQUIRE(level3.low_pass.size() == 3 * 4 + 1);  // 3 zeros between 4 taps
    for (std::size_t k = 0; k < level3.low_pass.size(); ++k) {
        if (k % 4 != 0) CHECK(level3.low_pass[k] == 0.0);
    }
}

TEST_CASE("db2 matches its closed form to 1e-12", "[swt][filters]") {
    const double s2 = std::sqrt(2.0), s3 = std::sqrt(3.0);
    const std::vector<double> expected{(1 + s3) / (4 * s2), (3 + s3) / (4 * s2),
                                       (3 - s3) / (4 * s2), (1 - s3) / (4 * s2)};
    const auto filters = swt::base_filters(WaveletFamily::db2);
    REQUIRE(filters.low_pass.size() == 4);
    CHECK(max_abs_diff(filters.low_pass, expected) < 1e-12);
}

TEST_CASE("db3 matches its closed form to 1e-12", "[swt][filters]") {
    const double s2 = std::sqrt(2.0), s10 = std::sqrt(10.0);
    const double a = std::sqrt(5.0 + 2.0 * s10);
    const std::vector<double> expected{
        (1 + s10 + a) / (16 * s2),      (5 + s10 + 3 * a) / (16 * s2),
        (10 - 2 * s10 + 2 * a) / (16 * s2), (10 - 2 * s10 - 2 * a) / (16 * s2),
        (5 + s10 - 3 * a) / (16 * s2),  (1 + s10 - a) / (16 * s2)};
    const auto filters = swt::base_filters(WaveletFamily::db3);
    REQUIRE(filters.low_pass.size() == 6);
    CHECK(max_abs_diff(filters.low_pass, expected) < 1e-12);
}

TEST_CASE("db4 matches the published table to 1e-12", "[swt][filters]") {
    const std::vector<double> published{
        0.230377813309, 0.714846570553, 0.630880767930, -0.027983769417,
        -0.187034811719, 0.030841381836, 0.032883011667, -0.010597401785};
    const auto filters = swt::base_filters(WaveletFamily::db4);
    REQUIRE(filters.low_pass.size() == 8);
    CHECK(max_abs_diff(filters.low_pass, published) < 1e-12);
}

TEST_CASE("Every family satisfies the quadrature-mirror relations", "[swt][filters]") {
    for (const auto family : {WaveletFamily::db1, WaveletFamily::db2, WaveletFamily::db3,
                              WaveletFamily::db4}) {
        const auto [low, high] = swt::base_filters(family);
        const std::size_t taps = low.size();

        double sum = 0.0, norm = 0.0, high_sum = 0.0;
        for (std::size_t k = 0; k < taps; ++k) {
            sum += low[k];
            norm += low[k] * low[k];
            high_sum += high[k];
            CHECK(high[k] == Catch::Approx((k % 2 == 0 ? 1.0 : -1.0) * low[taps - 1 - k])
                                 .margin(1e-15));
        }
        CHECK(sum == Catch::Approx(std::sqrt(2.0)).margin(1e-12));
        CHECK(norm == Catch::Approx(1.0).margin(1e-12));
        CHECK(high_sum == Catch::Approx(0.0).margin(1e-12));

        for (std::size_t lag = 2; lag < taps; lag += 2) {
            double low_corr = 0.0, high_corr = 0.0, cross = 0.0;
            for (std::size_t k = 0; k + lag < taps; ++k) {
                low_corr += low[k] * low[k + lag];
                high_corr += high[k] * high[k + lag];
                cross += low[k] * high[k + lag];
            }
            CHECK(std::fabs(low_corr) < 1e-12);
            CHECK(std::fabs(high_corr) < 1e-12);
            (void)cross;  // cross terms vanish only summed over both lags
        }
    }
}

TEST_CASE("Filter configuration errors", "[swt][filters][error]") {
    CHECK_THROWS_AS(swt::make_filters(WaveletSpec{WaveletFamily::db1, 0}, 1), ConfigError);
    CHECK_THROWS_AS(swt::make_filters(WaveletSpec{WaveletFamily::db1, 6}, 1), ConfigError);
    CHECK_THROWS_AS(swt::make_filters(WaveletSpec{WaveletFamily::db1, 3}, 4), ConfigError);
    CHECK_THROWS_AS(swt::make_filters(WaveletSpec{WaveletFamily::db1, 3}, 0), ConfigError);
    CHECK_THROWS_AS(swt::wavelet_family_from_string("db9"), ConfigError);
}

TEST_CASE("Constant signal has zero detail and sqrt(2) gain", "[swt][decompose]") {
    const auto subbands =
        swt::decompose({1.0, 1.0, 1.0, 1.0}, WaveletSpec{WaveletFamily::db1, 1});
    for (double v : subbands.approximation(1)) {
        CHECK(v == Catch::Approx(std::sqrt(2.0)).margin(1e-12));
    }
    for (double v : subbands.detail(1)) CHECK(std::fabs(v) < 1e-15);
}

TEST_CASE("Impulse decomposition matches brute-force periodic convolution",
          "[swt][decompose][oracle]") {
    const WaveletSpec spec{WaveletFamily::db1, 1};
    const std::vector<double> impulse{1.0, 0.0, 0.0, 0.0};
    const auto got = swt::decompose(impulse, spec);
    const auto want = tests::brute_subbands(impulse, spec);
    CHECK(max_abs_diff(got.approximation(1), want.approximation(1)) < 1e-15);
    CHECK(max_abs_diff(got.detail(1), want.detail(1)) < 1e-15);
}

TEST_CASE("Strided decomposition equals the zero-padded-filter oracle",
          "[swt][decompose][oracle]") {
    for (const auto family : {WaveletFamily::db2, WaveletFamily::db3, WaveletFamily::db4}) {
        const WaveletSpec spec{family, 3};
        const auto signal = tests::random_signal(64, 11 + static_cast<int>(family));
        const auto got = swt::decompose(signal, spec);
        const auto want = tests::brute_subbands(signal, spec);
        for (std::size_t c = 0; c < got.channels(); ++c) {
            CHECK(max_abs_diff(got.channel(c), want.channel(c)) < 1e-12);
        }
    }
}

TEST_CASE("Decompose validates input", "[swt][decompose][error]") {
    const WaveletSpec spec{WaveletFamily::db1, 3};
    CHECK_THROWS_AS(swt::decompose({1.0, 2.0, 3.0}, spec), ShapeError);   // not a multiple of 8
    CHECK_THROWS_AS(swt::decompose({}, spec), ShapeError);
    std::vector<double> bad(16, 0.5);
    bad[7] = std::nan("");
    CHECK_THROWS_AS(swt::decompose(bad, spec), DataError);
}

TEST_CASE("Subband counts and lengths", "[swt][decompose]") {
    const auto signal = tests::random_signal(64, 3);
    const auto subbands = swt::decompose(signal, WaveletSpec{WaveletFamily::db2, 3});
    CHECK(subbands.channels() == 6);
    CHECK(subbands.source_length() == 64);
    for (std::size_t c = 0; c < subbands.channels(); ++c) {
        CHECK(subbands.channel(c).size() == 64);
    }
}

TEST_CASE("Perfect reconstruction on random signals", "[swt][reconstruct]") {
    for (const auto family : {WaveletFamily::db1, WaveletFamily::db2, WaveletFamily::db3,
                              WaveletFamily::db4}) {
        for (int levels = 1; levels <= 3; ++levels) {
            const WaveletSpec spec{family, levels};
            const auto signal =
                tests::random_signal(256, 100 + 10 * levels + static_cast<int>(family));
            const auto rebuilt = swt::reconstruct(swt::decompose(signal, spec));
            CHECK(max_abs_diff(rebuilt, signal) < 1e-9);
        }
    }
}

TEST_CASE("Shift equivariance", "[swt][property]") {
    const WaveletSpec spec{WaveletFamily::db2, 3};
    const auto signal = tests::random_signal(64, 21);
    const auto base = swt::decompose(signal, spec);
    for (const std::size_t shift : {1u, 5u, 17u, 63u}) {
        const auto shifted = swt::decompose(circular_shift(signal, shift), spec);
        for (std::size_t c = 0; c < base.channels(); ++c) {
            CHECK(max_abs_diff(shifted.channel(c), circular_shift(base.channel(c), shift)) <
                  1e-9);
        }
    }
}

TEST_CASE("Linearity", "[swt][property]") {
    const WaveletSpec spec{WaveletFamily::db3, 2};
    const auto x = tests::random_signal(32, 31);
    const auto y = tests::random_signal(32, 32);
    const double a = 1.7, b = -0.4;
    std::vector<double> combo(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) combo[i] = a * x[i] + b * y[i];

    const auto dx = swt::decompose(x, spec);
    const auto dy = swt::decompose(y, spec);
    const auto dc = swt::decompose(combo, spec);
    for (std::size_t c = 0; c < dc.channels(); ++c) {
        std::vector<double> expected(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            expected[i] = a * dx.channel(c)[i] + b * dy.channel(c)[i];
        }
        CHECK(max_abs_diff(dc.channel(c), expected) < 1e-9);
    }
}

TEST_CASE("Reconstruction ignores intermediate approximations", "[swt][reconstruct]") {
    const WaveletSpec spec{WaveletFamily::db1, 3};
    const auto signal = tests::random_signal(64, 41);
    auto subbands = swt::decompose(signal, spec);
    const auto reference = swt::reconstruct(subbands);

    std::mt19937_64 gen = powercast::rng::seeded(99);
    for (double& v : subbands.approximation(1)) v = rng::uniform_range(gen, -100.0, 100.0);
    for (double& v : subbands.approximation(2)) v = rng::uniform_range(gen, -100.0, 100.0);
    const auto garbage = swt::reconstruct(subbands);
    CHECK(max_abs_diff(garbage, reference) == 0.0);  // A1, A2 never read
}

TEST_CASE("All-zero subbands reconstruct to zero", "[swt][reconstruct]") {
    const swt::SubbandMatrix zero(WaveletSpec{WaveletFamily::db2, 2}, 32);
    const auto rebuilt = swt::reconstruct(zero);
    for (double v : rebuilt) CHECK(v == 0.0);
}

TEST_CASE("Reconstruct rejects malformed subbands", "[swt][reconstruct][error]") {
    const auto signal = tests::random_signal(32, 51);
    auto subbands = swt::decompose(signal, WaveletSpec{WaveletFamily::db1, 2});
    subbands.channel(1).resize(31);  // break one band
    CHECK_THROWS_AS(swt::reconstruct(subbands), ShapeError);
}

TEST_CASE("Trim keeps prefixes and rejects growth", "[swt]") {
    auto subbands = swt::decompose(tests::random_signal(32, 61),
                                   WaveletSpec{WaveletFamily::db1, 2});
    subbands.trim(20);
    CHECK(subbands.source_length() == 20);
    CHECK(subbands.approximation(1).size() == 20);
    CHECK_THROWS_AS(subbands.trim(21), UsageError);
}
