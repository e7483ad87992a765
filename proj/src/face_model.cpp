#include "ifr/face_model.hpp"

#include "ifr/binary_io.hpp"
#include "ifr/error.hpp"
#include "ifr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>

namespace ifr {

namespace {

constexpr std::uint32_t kModelVersion = 1;

// Procedural shell dimensions (mm).
constexpr double kHalfWidth = 70.0;
constexpr double kHalfHeight = 95.0;
constexpr double kDepth = 80.0;
constexpr double kNoseHeight = 25.0;
constexpr double kNoseWidth = 12.0;
constexpr double kEyeDepth = 6.0;
constexpr double kEyeWidth = 10.0;
constexpr double kEyeOffsetX = 32.0;
constexpr double kEyeOffsetY = 25.0;

constexpr int kSmoothingPasses = 10;

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_all_f32(std::vector<double>& v) {
    for (auto& x : v) x = round_f32(x);
}

using Adjacency = std::vector<std::vector<std::uint32_t>>;

Adjacency build_adjacency(std::size_t n_vertices, const std::vector<std::array<std::uint32_t, 3>>& tris) {
    Adjacency adj(n_vertices);
    auto link = [&](std::uint32_t a, std::uint32_t b) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    };
    for (const auto& t : tris) {
        link(t[0], t[1]);
        link(t[1], t[2]);
        link(t[2], t[0]);
    }
    for (auto& n : adj) {
        std::sort(n.begin(), n.end());
        n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    return adj;
}

// One pass averages each vertex with its neighbours; `stride` scalars per vertex.
void laplacian_smooth(std::vector<double>& field, std::size_t stride, const Adjacency& adj, int passes) {
    std::vector<double> next(field.size());
    for (int p = 0; p < passes; ++p) {
        for (std::size_t v = 0; v < adj.size(); ++v) {
            for (std::size_t c = 0; c < stride; ++c) {
                double s = field[v * stride + c];
                for (auto n : adj[v]) s += field[n * stride + c];
                next[v * stride + c] = s / static_cast<double>(adj[v].size() + 1);
            }
        }
        field.swap(next);
    }
}

// Modified Gram-Schmidt (two sweeps) against all rows already in `basis`.
void orthonormalize_into(std::vector<double>& basis, std::vector<double> v, std::size_t n) {
    const std::size_t rows = basis.size() / n;
    for (int sweep = 0; sweep < 2; ++sweep) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* b = basis.data() + r * n;
            double d = 0;
            for (std::size_t k = 0; k < n; ++k) d += b[k] * v[k];
            for (std::size_t k = 0; k < n; ++k) v[k] -= d * b[k];
        }
    }
    double len = 0;
    for (double x : v) len += x * x;
    len = std::sqrt(len);
    if (len < 1e-12) throw NumericalError("basis generation produced a degenerate vector");
    for (double& x : v) x /= len;
    basis.insert(basis.end(), v.begin(), v.end());
}

std::vector<double> smooth_gaussian_field(std::mt19937_64& rng, std::size_t n_vertices, std::size_t stride,
                                          const Adjacency& adj) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> f(n_vertices * stride);
    for (auto& x : f) x = normal(rng);
    laplacian_smooth(f, stride, adj, kSmoothingPasses);
    return f;
}

std::vector<double> power_law_sigma(std::size_t n, double leading) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = round_f32(leading * std::pow(static_cast<double>(i + 1), -0.7));
    return s;
}

void accumulate_modes(std::vector<double>& out, const std::vector<double>& basis,
                      const std::vector<double>& sigma, const std::vector<double>& coeff) {
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < coeff.size(); ++i) {
        const double s = sigma[i] * coeff[i];
        if (s == 0.0) continue;
        const double* b = basis.data() + i * n;
        for (std::size_t k = 0; k < n; ++k) out[k] += b[k] * s;
    }
}

} // namespace

void ModelSpec::validate() const {
    if (grid_rows < 8 || grid_cols < 8) throw InvalidArgument("model grid must be at least 8x8");
    const std::size_t dim = 3 * n_vertices();
    if (dim < std::size_t{n_shape} + n_expr)
        throw InvalidArgument("3V < n_shape + n_expr: geometry bases cannot be orthonormal");
    if (dim < n_refl) throw InvalidArgument("3V < n_refl: reflectance basis cannot be orthonormal");
}

ParameterVector ParameterVector::zeros(const ModelSpec& spec) { return zeros(ParameterLayout(spec)); }

ParameterVector ParameterVector::zeros(const ParameterLayout& layout) {
    ParameterVector p;
    p.shape.assign(layout.n_shape, 0.0);
    p.expression.assign(layout.n_expr, 0.0);
    p.reflectance.assign(layout.n_refl, 0.0);
    return p;
}

ParameterVector ParameterVector::from_flat(std::span<const double> flat, const ParameterLayout& layout) {
    if (flat.size() != layout.m())
        throw DimensionMismatch("parameter vector has length " + std::to_string(flat.size()) + ", expected " +
                                std::to_string(layout.m()));
    ParameterVector p = zeros(layout);
    std::copy_n(flat.begin() + layout.rotation(), kRotationSize, p.rotation.begin());
    std::copy_n(flat.begin() + layout.shape(), layout.n_shape, p.shape.begin());
    std::copy_n(flat.begin() + layout.expression(), layout.n_expr, p.expression.begin());
    std::copy_n(flat.begin() + layout.reflectance(), layout.n_refl, p.reflectance.begin());
    std::copy_n(flat.begin() + layout.illumination(), kIlluminationSize, p.illumination.begin());
    return p;
}

std::vector<double> ParameterVector::flatten() const {
    std::vector<double> out;
    out.reserve(size());
    out.insert(out.end(), rotation.begin(), rotation.end());
    out.insert(out.end(), shape.begin(), shape.end());
    out.insert(out.end(), expression.begin(), expression.end());
    out.insert(out.end(), reflectance.begin(), reflectance.end());
    out.insert(out.end(), illumination.begin(), illumination.end());
    return out;
}

bool ParameterVector::all_finite() const {
    const auto v = flatten();
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vec3 FaceModel::mean_centroid() const {
    Vec3 c;
    const std::size_t n = n_vertices();
    for (std::size_t v = 0; v < n; ++v)
        c += Vec3{mean_geometry[3 * v], mean_geometry[3 * v + 1], mean_geometry[3 * v + 2]};
    return c * (1.0 / static_cast<double>(n));
}

FaceModel generate_model(const ModelSpec& spec) {
    spec.validate();
    FaceModel model;
    model.spec = spec;
    const std::size_t rows = spec.grid_rows, cols = spec.grid_cols;
    const std::size_t nv = spec.n_vertices();
    const std::size_t dim = 3 * nv;

    // Square grid mapped onto the elliptical face outline; row 0 is the top.
    model.mean_geometry.resize(dim);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double u = -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(cols - 1);
            const double v = 1.0 - 2.0 * static_cast<double>(r) / static_cast<double>(rows - 1);
            const double dx = u * std::sqrt(1.0 - 0.5 * v * v);
            const double dy = v * std::sqrt(1.0 - 0.5 * u * u);
            const double x = kHalfWidth * dx;
            const double y = kHalfHeight * dy;
            double z = kDepth * std::sqrt(std::max(0.0, 1.0 - dx * dx - dy * dy));
            z += kNoseHeight * std::exp(-(x * x + y * y) / (2 * kNoseWidth * kNoseWidth));
            for (double side : {-1.0, 1.0}) {
                const double ex = x - side * kEyeOffsetX, ey = y - kEyeOffsetY;
                z -= kEyeDepth * std::exp(-(ex * ex + ey * ey) / (2 * kEyeWidth * kEyeWidth));
            }
            const std::size_t i = r * cols + c;
            model.mean_geometry[3 * i] = x;
            model.mean_geometry[3 * i + 1] = y;
            model.mean_geometry[3 * i + 2] = z;
        }
    }

    // Diagonals mirror about the centre column so the mesh is left/right symmetric.
    const double mid = 0.5 * static_cast<double>(cols - 2);
    for (std::uint32_t r = 0; r + 1 < rows; ++r) {
        for (std::uint32_t c = 0; c + 1 < cols; ++c) {
            const std::uint32_t a = r * cols + c, b = a + 1, d = a + cols, e = d + 1;
            if (static_cast<double>(c) < mid) {
                model.triangles.push_back({a, d, e});
                model.triangles.push_back({a, e, b});
            } else {
                model.triangles.push_back({a, d, b});
                model.triangles.push_back({b, d, e});
            }
        }
    }
    const Adjacency adj = build_adjacency(nv, model.triangles);

    std::mt19937_64 geo_rng(mix_seed(spec.rng_seed, {1}));
    std::vector<double> geo_basis;
    geo_basis.reserve((spec.n_shape + spec.n_expr) * dim);
    for (std::size_t i = 0; i < std::size_t{spec.n_shape} + spec.n_expr; ++i)
        orthonormalize_into(geo_basis, smooth_gaussian_field(geo_rng, nv, 3, adj), dim);
    model.shape_basis.assign(geo_basis.begin(), geo_basis.begin() + spec.n_shape * dim);
    model.expr_basis.assign(geo_basis.begin() + spec.n_shape * dim, geo_basis.end());

    std::mt19937_64 refl_rng(mix_seed(spec.rng_seed, {2}));
    for (std::size_t i = 0; i < spec.n_refl; ++i)
        orthonormalize_into(model.refl_basis, smooth_gaussian_field(refl_rng, nv, 3, adj), dim);

    model.shape_sigma = power_law_sigma(spec.n_shape, 10.0);
    model.expr_sigma = power_law_sigma(spec.n_expr, 6.0);
    model.refl_sigma = power_law_sigma(spec.n_refl, 0.05);

    std::mt19937_64 albedo_rng(mix_seed(spec.rng_seed, {3}));
    std::vector<double> tint = smooth_gaussian_field(albedo_rng, nv, 1, adj);
    const double peak = std::max(1e-12, std::abs(*std::max_element(tint.begin(), tint.end(), [](double a, double b) {
        return std::abs(a) < std::abs(b);
    })));
    constexpr std::array<double, 3> base{0.75, 0.55, 0.45};
    model.mean_reflectance.resize(dim);
    for (std::size_t v = 0; v < nv; ++v)
        for (int c = 0; c < 3; ++c) model.mean_reflectance[3 * v + c] = base[c] + 0.05 * tint[v] / peak;

    round_all_f32(model.mean_geometry);
    round_all_f32(model.mean_reflectance);
    round_all_f32(model.shape_basis);
    round_all_f32(model.expr_basis);
    round_all_f32(model.refl_basis);
    return model;
}

void check_dimensions(const FaceModel& model, const ParameterVector& theta) {
    if (theta.shape.size() != model.spec.n_shape || theta.expression.size() != model.spec.n_expr ||
        theta.reflectance.size() != model.spec.n_refl)
        throw DimensionMismatch("parameter vector (m=" + std::to_string(theta.size()) +
                                ") does not match the face model (m=" + std::to_string(model.spec.m()) + ")");
}

std::vector<double> evaluate_geometry(const FaceModel& model, const ParameterVector& theta) {
    check_dimensions(model, theta);
    std::vector<double> out = model.mean_geometry;
    accumulate_modes(out, model.shape_basis, model.shape_sigma, theta.shape);
    accumulate_modes(out, model.expr_basis, model.expr_sigma, theta.expression);
    return out;
}

std::vector<double> evaluate_reflectance_unclamped(const FaceModel& model, const ParameterVector& theta) {
    check_dimensions(model, theta);
    std::vector<double> out = model.mean_reflectance;
    accumulate_modes(out, model.refl_basis, model.refl_sigma, theta.reflectance);
    return out;
}

std::vector<double> evaluate_reflectance(const FaceModel& model, const ParameterVector& theta) {
    auto out = evaluate_reflectance_unclamped(model, theta);
    for (double& x : out) x = std::clamp(x, 0.0, 1.0);
    return out;
}

Mat3 rotation_matrix(double alpha, double beta, double gamma) {
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    const double cb = std::cos(beta), sb = std::sin(beta);
    const double cg = std::cos(gamma), sg = std::sin(gamma);
    Mat3 rx{{1, 0, 0, 0, ca, -sa, 0, sa, ca}};
    Mat3 ry{{cb, 0, sb, 0, 1, 0, -sb, 0, cb}};
    Mat3 rz{{cg, -sg, 0, sg, cg, 0, 0, 0, 1}};
    return rz * (ry * rx);
}

Mat3 rotation_matrix(const ParameterVector& theta) {
    return rotation_matrix(theta.rotation[0], theta.rotation[1], theta.rotation[2]);
}

void write_model(const FaceModel& model, std::ostream& out) {
    binary::Writer w(out);
    const auto& s = model.spec;
    w.magic("IFNM");
    w.put<std::uint32_t>(kModelVersion);
    w.put<std::uint32_t>(s.n_shape);
    w.put<std::uint32_t>(s.n_expr);
    w.put<std::uint32_t>(s.n_refl);
    w.put<std::uint32_t>(kIlluminationSize);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.n_vertices()));
    w.put<std::uint32_t>(s.grid_rows);
    w.put<std::uint32_t>(s.grid_cols);
    w.put<std::uint64_t>(s.rng_seed);
    w.put_f32_array(model.mean_geometry);
    w.put_f32_array(model.mean_reflectance);
    w.put_f32_array(model.shape_basis);
    w.put_f32_array(model.expr_basis);
    w.put_f32_array(model.refl_basis);
    w.put_f32_array(model.shape_sigma);
    w.put_f32_array(model.expr_sigma);
    w.put_f32_array(model.refl_sigma);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.triangles.size()));
    for (const auto& t : model.triangles) w.put_array<std::uint32_t>(t);
}

FaceModel read_model(std::istream& in, const std::string& source) {
    binary::Reader r(in, source);
    r.expect_magic("IFNM");
    const auto version = r.get<std::uint32_t>();
    if (version != kModelVersion) throw FormatError(source + ": unsupported model version " + std::to_string(version));
    FaceModel model;
    auto& s = model.spec;
    s.n_shape = r.get<std::uint32_t>();
    s.n_expr = r.get<std::uint32_t>();
    s.n_refl = r.get<std::uint32_t>();
    const auto n_illum = r.get<std::uint32_t>();
    const auto n_vertices = r.get<std::uint32_t>();
    s.grid_rows = r.get<std::uint32_t>();
    s.grid_cols = r.get<std::uint32_t>();
    s.rng_seed = r.get<std::uint64_t>();
    if (n_illum != kIlluminationSize || n_vertices != s.n_vertices())
        throw FormatError(source + ": inconsistent model header");
    try {
        s.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(source + ": " + e.what());
    }
    const std::size_t dim = 3 * s.n_vertices();
    model.mean_geometry = r.get_f32_array(dim);
    model.mean_reflectance = r.get_f32_array(dim);
    model.shape_basis = r.get_f32_array(s.n_shape * dim);
    model.expr_basis = r.get_f32_array(s.n_expr * dim);
    model.refl_basis = r.get_f32_array(s.n_refl * dim);
    model.shape_sigma = r.get_f32_array(s.n_shape);
    model.expr_sigma = r.get_f32_array(s.n_expr);
    model.refl_sigma = r.get_f32_array(s.n_refl);
    model.triangles.resize(r.get<std::uint32_t>());
    for (auto& t : model.triangles) {
        r.get_array<std::uint32_t>(t);
        for (auto idx : t)
            if (idx >= n_vertices) throw FormatError(source + ": triangle index out of range");
    }
    return model;
}

void save_model(const FaceModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    write_model(model, out);
}

FaceModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    return read_model(in, path.string());
}

} // namespace ifr
