#include "ifr/renderer.hpp"

#include "ifr/error.hpp"
#include "ifr/illumination.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace ifr {

namespace {

struct Fragment {
    std::int32_t triangle = -1;
    double depth = std::numeric_limits<double>::infinity();
    // Perspective-correct barycentrics.
    double b0 = 0, b1 = 0, b2 = 0;
};

std::vector<Vec3> smooth_normals(const FaceModel& model, const std::vector<double>& geometry) {
    std::vector<Vec3> normals(model.n_vertices());
    auto at = [&](std::uint32_t i) { return Vec3{geometry[3 * i], geometry[3 * i + 1], geometry[3 * i + 2]}; };
    for (const auto& t : model.triangles) {
        const Vec3 a = at(t[0]);
        // |cross| is twice the triangle area, giving area weighting for free.
        const Vec3 n = cross(at(t[1]) - a, at(t[2]) - a);
        for (auto idx : t) normals[idx] += n;
    }
    for (auto& n : normals) n = normalized(n);
    return normals;
}

bool top_left(double dx, double dy) { return dy < 0 || (dy == 0 && dx > 0); }

std::uint8_t quantize(double c) {
    return static_cast<std::uint8_t>(std::floor(255.0 * std::clamp(c, 0.0, 1.0) + 0.5));
}

} // namespace

void CameraSpec::validate() const {
    if (width == 0 || height == 0) throw InvalidArgument("camera resolution must be positive");
    if (width != height) throw InvalidArgument("camera images must be square");
    if (!(vertical_fov_deg > 5.0 && vertical_fov_deg < 90.0))
        throw InvalidArgument("camera vertical_fov must lie in (5, 90) degrees");
    if (!(face_distance_mm > 0.0)) throw InvalidArgument("camera face_distance must be positive");
}

double CameraSpec::focal_px() const {
    return 0.5 * height / std::tan(0.5 * vertical_fov_deg * std::numbers::pi / 180.0);
}

Projection project(const CameraSpec& camera, const Vec3& p) {
    if (!(p.z < 0.0)) throw ProjectionError("point at or behind the camera plane (z=" + std::to_string(p.z) + ")");
    const double f = camera.focal_px();
    const double depth = -p.z;
    return {0.5 * camera.width + f * p.x / depth, 0.5 * camera.height - f * p.y / depth, depth};
}

std::size_t RenderedSample::mask_area() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<Vec3> posed_vertices(const FaceModel& model, const CameraSpec& camera, const ParameterVector& theta) {
    const auto geometry = evaluate_geometry(model, theta);
    const Mat3 rot = rotation_matrix(theta);
    const Vec3 centroid = model.mean_centroid();
    const Vec3 offset{0, 0, -camera.face_distance_mm};
    std::vector<Vec3> out(model.n_vertices());
    for (std::size_t v = 0; v < out.size(); ++v)
        out[v] = rot * (Vec3{geometry[3 * v], geometry[3 * v + 1], geometry[3 * v + 2]} - centroid) + offset;
    return out;
}

RenderedSample render(const FaceModel& model, const CameraSpec& camera, const ParameterVector& theta) {
    camera.validate();
    check_dimensions(model, theta);

    const auto geometry = evaluate_geometry(model, theta);
    const auto reflectance = evaluate_reflectance(model, theta);
    const Mat3 rot = rotation_matrix(theta);
    const Vec3 centroid = model.mean_centroid();
    const Vec3 offset{0, 0, -camera.face_distance_mm};
    const std::size_t nv = model.n_vertices();

    std::vector<Vec3> posed(nv);
    std::vector<Projection> screen(nv);
    for (std::size_t v = 0; v < nv; ++v) {
        posed[v] = rot * (Vec3{geometry[3 * v], geometry[3 * v + 1], geometry[3 * v + 2]} - centroid) + offset;
        screen[v] = project(camera, posed[v]);
    }
    std::vector<Vec3> normals = smooth_normals(model, geometry);
    for (auto& n : normals) n = rot * n;

    const int width = static_cast<int>(camera.width);
    const int height = static_cast<int>(camera.height);
    std::vector<Fragment> frags(static_cast<std::size_t>(width) * height);

    for (std::size_t t = 0; t < model.triangles.size(); ++t) {
        const auto& tri = model.triangles[t];
        const Vec3 face_n = cross(posed[tri[1]] - posed[tri[0]], posed[tri[2]] - posed[tri[0]]);
        if (dot(face_n, posed[tri[0]]) >= 0.0) continue; // back-facing or edge-on

        std::array<std::uint32_t, 3> idx = tri;
        auto area_of = [&](const std::array<std::uint32_t, 3>& i) {
            const auto &a = screen[i[0]], &b = screen[i[1]], &c = screen[i[2]];
            return (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
        };
        double area = area_of(idx);
        if (area == 0.0) continue;
        if (area < 0.0) {
            std::swap(idx[1], idx[2]);
            area = -area;
        }
        const Projection &a = screen[idx[0]], &b = screen[idx[1]], &c = screen[idx[2]];

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.u, b.u, c.u}) - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.u, b.u, c.u}) - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.v, b.v, c.v}) - 0.5)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.v, b.v, c.v}) - 0.5)));

        // Edge i is opposite vertex i.
        const std::array<const Projection*, 3> p{&a, &b, &c};
        std::array<bool, 3> tl{};
        for (int e = 0; e < 3; ++e) {
            const Projection& s = *p[(e + 1) % 3];
            const Projection& d = *p[(e + 2) % 3];
            tl[e] = top_left(d.u - s.u, d.v - s.v);
        }

        for (int y = y0; y <= y1; ++y) {
            const double py = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5;
                std::array<double, 3> w{};
                bool inside = true;
                for (int e = 0; e < 3 && inside; ++e) {
                    const Projection& s = *p[(e + 1) % 3];
                    const Projection& d = *p[(e + 2) % 3];
                    w[e] = (d.u - s.u) * (py - s.v) - (d.v - s.v) * (px - s.u);
                    inside = w[e] > 0.0 || (w[e] == 0.0 && tl[e]);
                }
                if (!inside) continue;
                const double l0 = w[0] / area, l1 = w[1] / area, l2 = w[2] / area;
                const double q0 = l0 / a.depth, q1 = l1 / b.depth, q2 = l2 / c.depth;
                const double inv = q0 + q1 + q2;
                const double depth = 1.0 / inv;
                Fragment& f = frags[static_cast<std::size_t>(y) * width + x];
                if (depth < f.depth) {
                    f.depth = depth;
                    f.triangle = static_cast<std::int32_t>(t);
                    // Map barycentrics back to the original vertex order.
                    std::array<double, 3> bary{q0 * depth, q1 * depth, q2 * depth};
                    std::array<double, 3> ordered{};
                    for (int k = 0; k < 3; ++k) {
                        for (int j = 0; j < 3; ++j)
                            if (tri[j] == idx[k]) ordered[j] = bary[k];
                    }
                    f.b0 = ordered[0];
                    f.b1 = ordered[1];
                    f.b2 = ordered[2];
                }
            }
        }
    }

    RenderedSample out;
    out.width = camera.width;
    out.height = camera.height;
    out.params = theta;
    out.image.assign(frags.size() * 3, 0);
    out.mask.assign(frags.size(), 0);
    out.depth.assign(frags.size(), 0.0);
    for (std::size_t i = 0; i < frags.size(); ++i) {
        const Fragment& f = frags[i];
        if (f.triangle < 0) continue;
        const auto& tri = model.triangles[static_cast<std::size_t>(f.triangle)];
        const std::array<double, 3> bary{f.b0, f.b1, f.b2};
        Vec3 n;
        Rgb albedo{0, 0, 0};
        for (int k = 0; k < 3; ++k) {
            n += normals[tri[k]] * bary[k];
            for (int c = 0; c < 3; ++c) albedo[c] += reflectance[3 * tri[k] + c] * bary[k];
        }
        if (norm(n) < 1e-12) {
            n = cross(posed[tri[1]] - posed[tri[0]], posed[tri[2]] - posed[tri[0]]);
        }
        n = normalized(n);
        const Rgb e = irradiance(theta.illumination, n);
        for (int c = 0; c < 3; ++c) out.image[3 * i + c] = quantize(albedo[c] * e[c]);
        out.mask[i] = 1;
        out.depth[i] = f.depth;
    }
    return out;
}

} // namespace ifr
