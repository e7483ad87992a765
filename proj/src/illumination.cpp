#include "ifr/illumination.hpp"

#include "ifr/error.hpp"

#include <algorithm>
#include <cmath>

namespace ifr {

namespace {

// Basis without the unit-length precondition; the renderer normalizes itself.
ShBasis eval_basis(const Vec3& n) {
    const double x = n.x, y = n.y, z = n.z;
    return {0.282095,
            0.488603 * y,
            0.488603 * z,
            0.488603 * x,
            1.092548 * x * y,
            1.092548 * y * z,
            0.315392 * (3 * z * z - 1),
            1.092548 * x * z,
            0.546274 * (x * x - y * y)};
}

} // namespace

ShBasis sh_basis(const Vec3& n) {
    if (!(std::abs(norm(n) - 1.0) <= 1e-6)) throw InvalidArgument("sh_basis requires a unit normal");
    return eval_basis(n);
}

Rgb irradiance_unclamped(const ShCoefficients& coeffs, const Vec3& n) {
    const ShBasis h = sh_basis(n);
    Rgb out{0, 0, 0};
    for (int k = 0; k < kShBands; ++k)
        for (int c = 0; c < 3; ++c) out[c] += coeffs[k * 3 + c] * h[k];
    return out;
}

Rgb irradiance(const ShCoefficients& coeffs, const Vec3& n) {
    Rgb out = irradiance_unclamped(coeffs, n);
    for (double& c : out) c = std::max(c, 0.0);
    return out;
}

} // namespace ifr
