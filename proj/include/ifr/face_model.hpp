#pragma once

#include "ifr/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace ifr {

inline constexpr int kShBands = 9;
inline constexpr int kIlluminationSize = 3 * kShBands;
inline constexpr int kRotationSize = 3;

// Dimensions of the parametric face space and the procedural template mesh.
struct ModelSpec {
    std::uint32_t n_shape = 16;
    std::uint32_t n_expr = 8;
    std::uint32_t n_refl = 16;
    std::uint32_t grid_rows = 48;
    std::uint32_t grid_cols = 48;
    std::uint64_t rng_seed = 7;

    std::size_t n_vertices() const { return std::size_t{grid_rows} * grid_cols; }
    // Length of the flattened parameter vector.
    std::size_t m() const { return kRotationSize + n_shape + n_expr + n_refl + kIlluminationSize; }

    // Throws InvalidArgument when the spec cannot produce a valid model.
    void validate() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Offsets of each parameter group inside the flattened vector.
struct ParameterLayout {
    std::size_t n_shape = 0, n_expr = 0, n_refl = 0;

    ParameterLayout() = default;
    explicit ParameterLayout(const ModelSpec& s) : n_shape(s.n_shape), n_expr(s.n_expr), n_refl(s.n_refl) {}
    ParameterLayout(std::size_t s, std::size_t e, std::size_t r) : n_shape(s), n_expr(e), n_refl(r) {}

    std::size_t rotation() const { return 0; }
    std::size_t shape() const { return kRotationSize; }
    std::size_t expression() const { return shape() + n_shape; }
    std::size_t reflectance() const { return expression() + n_expr; }
    std::size_t illumination() const { return reflectance() + n_refl; }
    std::size_t m() const { return illumination() + kIlluminationSize; }

    friend bool operator==(const ParameterLayout&, const ParameterLayout&) = default;
};

// theta = (R, shape, expression, reflectance, illumination). Rotation holds
// Euler angles in radians; illumination holds 9 RGB triples, band-major.
struct ParameterVector {
    std::array<double, kRotationSize> rotation{};
    std::vector<double> shape;
    std::vector<double> expression;
    std::vector<double> reflectance;
    std::array<double, kIlluminationSize> illumination{};

    static ParameterVector zeros(const ModelSpec& spec);
    static ParameterVector zeros(const ParameterLayout& layout);
    // Inverse of flatten(); throws DimensionMismatch on a length mismatch.
    static ParameterVector from_flat(std::span<const double> flat, const ParameterLayout& layout);

    ParameterLayout layout() const { return {shape.size(), expression.size(), reflectance.size()}; }
    std::size_t size() const { return layout().m(); }
    std::vector<double> flatten() const;
    bool all_finite() const;

    // Illumination coefficient k (0-based band), channel c.
    double& light(int k, int c) { return illumination[k * 3 + c]; }
    double light(int k, int c) const { return illumination[k * 3 + c]; }

    friend bool operator==(const ParameterVector&, const ParameterVector&) = default;
};

struct FaceModel {
    ModelSpec spec;
    std::vector<double> mean_geometry;    // 3V, mm
    std::vector<double> mean_reflectance; // 3V, RGB in [0,1]
    std::vector<double> shape_basis;      // N_s rows of 3V
    std::vector<double> expr_basis;       // N_e rows of 3V
    std::vector<double> refl_basis;       // N_r rows of 3V
    std::vector<double> shape_sigma;
    std::vector<double> expr_sigma;
    std::vector<double> refl_sigma;
    std::vector<std::array<std::uint32_t, 3>> triangles;

    std::size_t n_vertices() const { return spec.n_vertices(); }

    std::span<const double> shape_mode(std::size_t i) const { return row(shape_basis, i); }
    std::span<const double> expr_mode(std::size_t j) const { return row(expr_basis, j); }
    std::span<const double> refl_mode(std::size_t i) const { return row(refl_basis, i); }

    // Centroid of the mean geometry; the renderer pivots rotations here.
    Vec3 mean_centroid() const;

    friend bool operator==(const FaceModel&, const FaceModel&) = default;

private:
    std::span<const double> row(const std::vector<double>& b, std::size_t i) const {
        const std::size_t n = 3 * n_vertices();
        return std::span<const double>(b).subspan(i * n, n);
    }
};

// Deterministic procedural face model. All stored values are representable
// in f32, so save/load reproduces the model exactly.
FaceModel generate_model(const ModelSpec& spec);

// a_g + sum_i b_s,i sigma_s,i theta_s,i + sum_j b_e,j sigma_e,j theta_e,j (unposed).
std::vector<double> evaluate_geometry(const FaceModel& model, const ParameterVector& theta);

// a_r + sum_i b_r,i sigma_r,i theta_r,i, clamped to [0,1].
std::vector<double> evaluate_reflectance(const FaceModel& model, const ParameterVector& theta);

// Same as evaluate_reflectance without the final clamp.
std::vector<double> evaluate_reflectance_unclamped(const FaceModel& model, const ParameterVector& theta);

// R = Rz(gamma) * Ry(beta) * Rx(alpha).
Mat3 rotation_matrix(double alpha, double beta, double gamma);
Mat3 rotation_matrix(const ParameterVector& theta);

// Throws DimensionMismatch when theta does not fit the model.
void check_dimensions(const FaceModel& model, const ParameterVector& theta);

void write_model(const FaceModel& model, std::ostream& out);
FaceModel read_model(std::istream& in, const std::string& source = "<stream>");
void save_model(const FaceModel& model, const std::filesystem::path& path);
FaceModel load_model(const std::filesystem::path& path);

} // namespace ifr
