#include <doctest.h>

#include "ifr/error.hpp"
#include "ifr/illumination.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace ifr;

namespace {

Vec3 random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (;;) {
        const Vec3 v{n(rng), n(rng), n(rng)};
        if (norm(v) > 1e-9) return normalized(v);
    }
}

// Textbook real SH in Cartesian form, written out independently.
ShBasis reference_basis(const Vec3& n) {
    const double pi = std::numbers::pi;
    const double c0 = 0.5 * std::sqrt(1 / pi);
    const double c1 = std::sqrt(3 / (4 * pi));
    const double c2 = 0.5 * std::sqrt(15 / pi);
    const double c3 = 0.25 * std::sqrt(5 / pi);
    const double c4 = 0.25 * std::sqrt(15 / pi);
    return {c0,         c1 * n.y,       c1 * n.z, c1 * n.x, c2 * n.x * n.y, c2 * n.y * n.z,
            c3 * (3 * n.z * n.z - 1), c2 * n.x * n.z, c4 * (n.x * n.x - n.y * n.y)};
}

} // namespace

TEST_CASE("basis at +z") {
    const auto h = sh_basis({0, 0, 1});
    const double want[9] = {0.282095, 0, 0.488603, 0, 0, 0, 0.630784, 0, 0};
    for (int k = 0; k < 9; ++k) CHECK(h[k] == doctest::Approx(want[k]).epsilon(1e-6));
}

TEST_CASE("constant band and reference form") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 1000; ++t) {
        const Vec3 n = random_direction(rng);
        const auto h = sh_basis(n);
        const auto r = reference_basis(n);
        CHECK(h[0] == doctest::Approx(0.282095).epsilon(1e-6));
        for (int k = 0; k < 9; ++k) CHECK(std::fabs(h[k] - r[k]) < 1e-6);
    }
}

TEST_CASE("monte carlo orthonormality") {
    std::mt19937_64 rng(17);
    constexpr int kSamples = 100000;
    std::array<double, 81> gram{};
    for (int s = 0; s < kSamples; ++s) {
        const auto h = sh_basis(random_direction(rng));
        for (int j = 0; j < 9; ++j)
            for (int k = 0; k < 9; ++k) gram[j * 9 + k] += h[j] * h[k];
    }
    const double area = 4 * std::numbers::pi / kSamples;
    for (int j = 0; j < 9; ++j)
        for (int k = 0; k < 9; ++k) CHECK(std::fabs(gram[j * 9 + k] * area - (j == k ? 1.0 : 0.0)) < 0.02);
}

TEST_CASE("rejects non-unit normals") {
    CHECK_THROWS_AS(sh_basis({0, 0, 2}), InvalidArgument);
    CHECK_THROWS_AS(sh_basis({0, 0, 0}), InvalidArgument);
}

TEST_CASE("irradiance examples") {
    ShCoefficients c{};
    c[0] = c[1] = c[2] = 1.0;
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        const auto e = irradiance(c, random_direction(rng));
        for (double v : e) CHECK(v == doctest::Approx(0.282095).epsilon(1e-6));
    }
    c[0] = c[1] = c[2] = 0.8;
    const auto e = irradiance(c, normalized(Vec3{0.3, -0.4, 0.8}));
    CHECK(e[0] == e[1]);
    CHECK(e[1] == e[2]);
}

TEST_CASE("irradiance matches summation oracle") {
    std::mt19937_64 rng(21);
    std::normal_distribution<double> nd(0.0, 0.5);
    for (int t = 0; t < 200; ++t) {
        ShCoefficients c;
        for (double& v : c) v = nd(rng);
        const Vec3 n = random_direction(rng);
        const auto h = sh_basis(n);
        const auto got = irradiance_unclamped(c, n);
        const auto clamped = irradiance(c, n);
        for (int ch = 0; ch < 3; ++ch) {
            long double s = 0;
            for (int k = 0; k < 9; ++k) s += static_cast<long double>(c[k * 3 + ch]) * h[k];
            CHECK(std::fabs(got[ch] - static_cast<double>(s)) < 1e-12);
            CHECK(clamped[ch] == std::max(0.0, got[ch]));
        }
    }
}
