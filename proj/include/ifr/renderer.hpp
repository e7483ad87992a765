#pragma once

#include "ifr/face_model.hpp"

#include <cstdint>
#include <vector>

namespace ifr {

struct CameraSpec {
    std::uint32_t width = 128;
    std::uint32_t height = 128;
    double vertical_fov_deg = 30.0;
    double face_distance_mm = 600.0;

    void validate() const;
    double focal_px() const;

    friend bool operator==(const CameraSpec&, const CameraSpec&) = default;
};

struct Projection {
    double u = 0, v = 0; // pixels, v grows downwards
    double depth = 0;    // mm in front of the camera
};

// Pinhole camera at the origin looking down -z, y up.
// Throws ProjectionError for points with z >= 0.
Projection project(const CameraSpec& camera, const Vec3& p);

// Row-major RGB8 image plus coverage mask. Pixels outside the mask are black.
struct RenderedSample {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> image; // H*W*3, interleaved
    std::vector<std::uint8_t> mask;  // H*W, 0 or 1
    std::vector<double> depth;       // H*W, 0 outside the mask
    ParameterVector params;

    std::size_t pixel_count() const { return std::size_t{width} * height; }
    std::size_t mask_area() const;
};

RenderedSample render(const FaceModel& model, const CameraSpec& camera, const ParameterVector& theta);

// Posed camera-space vertex positions (before projection).
std::vector<Vec3> posed_vertices(const FaceModel& model, const CameraSpec& camera, const ParameterVector& theta);

} // namespace ifr
