#pragma once

#include "ifr/face_model.hpp"
#include "ifr/geometry.hpp"

#include <array>
#include <span>

namespace ifr {

// Nine RGB triples, band-major: (k=0: r,g,b), (k=1: r,g,b), ...
using ShCoefficients = std::array<double, kIlluminationSize>;
using ShBasis = std::array<double, kShBands>;
using Rgb = std::array<double, 3>;

// Real second-order SH basis H_1..H_9 at a unit normal.
// Throws InvalidArgument when |n| deviates from 1 by more than 1e-6.
ShBasis sh_basis(const Vec3& n);

// Per-channel sum_k coeffs[k][c] * H_k(n), unclamped.
Rgb irradiance_unclamped(const ShCoefficients& coeffs, const Vec3& n);

// irradiance_unclamped clamped to >= 0 per channel.
Rgb irradiance(const ShCoefficients& coeffs, const Vec3& n);

} // namespace ifr
