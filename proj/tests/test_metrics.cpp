#include <doctest.h>

#include <cmath>

#include "mxpp/metrics.hpp"
#include "mxpp/rng.hpp"
#include "oracles.hpp"

using namespace mxpp;

namespace {

std::vector<float> random_image(Rng& rng, int n = 32 * 32) {
    std::vector<float> img(n);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    return img;
}


} // namespace

TEST_CASE("metric identities and symmetry") {
    Rng rng(1);
    auto a = random_image(rng);
    auto b = random_image(rng);
    CHECK(l1_metric(a, a) == 0.0);
    CHECK(rmse_metric(a, a) == 0.0);
    CHECK(ssim_metric(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l1_metric(a, b) == doctest::Approx(l1_metric(b, a)));
    CHECK(rmse_metric(a, b) == doctest::Approx(rmse_metric(b, a)));
    CHECK(ssim_metric(a, b) == doctest::Approx(ssim_metric(b, a)).epsilon(1e-12));
}

TEST_CASE("metric extremes and hand arithmetic") {
    std::vector<float> zeros(1024, 0.0f), ones(1024, 1.0f);
    CHECK(l1_metric(zeros, ones) == doctest::Approx(1.0));
    CHECK(rmse_metric(zeros, ones) == doctest::Approx(1.0));

    // Half the pixels differ by 0.5.
    std::vector<float> half = zeros;
    for (size_t i = 0; i < half.size() / 2; ++i) half[i] = 0.5f;
    CHECK(l1_metric(half, zeros) == doctest::Approx(0.25));
}

TEST_CASE("rmse dominates l1 on random pairs") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        auto a = random_image(rng);
        auto b = random_image(rng);
        CHECK(rmse_metric(a, b) >= l1_metric(a, b));
    }
}

TEST_CASE("ssim matches the brute-force window oracle to 1e-9") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        auto a = random_image(rng);
        auto b = random_image(rng);
        const double got = ssim_metric(a, b);
        const double expect = oracles::ssim_brute_force(a, b, 32, 32, 8);
        CHECK(std::abs(got - expect) < 1e-9);
    }
}

TEST_CASE("anti-correlated images score below one") {
    Rng rng(4);
    auto a = random_image(rng);
    std::vector<float> inv(a.size());
    for (size_t i = 0; i < a.size(); ++i) inv[i] = 1.0f - a[i];
    CHECK(ssim_metric(a, inv) < 1.0);
}

TEST_CASE("metric error paths") {
    std::vector<float> a(1024, 0.5f), small(16, 0.5f);
    CHECK_THROWS_AS(l1_metric(a, small), shape_error);
    CHECK_THROWS_AS(ssim_metric(small, small, 4, 4, 8), shape_error);
}
