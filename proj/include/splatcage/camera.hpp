#pragma once

#include "splatcage/types.hpp"

#include <filesystem>

namespace splatcage {

/// Pinhole look-at camera. Basis: z forward (towards look_at), x right,
/// y down; square pixels with focal length from fov_y.
struct CameraPose {
    Vec3 position = Vec3::Zero();
    Vec3 look_at = Vec3::UnitZ();
    Vec3 up = Vec3::UnitY();
    double fov_y = 1.0; // radians
    int width = 256;
    int height = 256;

    void validate() const {
        if ((position - look_at).norm() <= 0)
            throw Error("camera: position equals look_at");
        if (!(fov_y > 0 && fov_y < std::numbers::pi))
            throw Error("camera: fov_y must be in (0, pi)");
        if (width <= 0 || height <= 0) throw Error("camera: non-positive image size");
    }

    Mat3 basis() const { // columns: right, down, forward
        const Vec3 fwd = (look_at - position).normalized();
        Vec3 right = fwd.cross(-up);
        if (right.norm() < 1e-9)
            right = fwd.cross(std::abs(fwd[0]) > 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0));
        right.normalize();
        const Vec3 down = fwd.cross(right).normalized();
        Mat3 b;
        b.col(0) = right;
        b.col(1) = down;
        b.col(2) = fwd;
        return b;
    }

    double focal() const { return 0.5 * height / std::tan(0.5 * fov_y); }

    /// Unit world direction through the center of pixel (ix, iy), plus the
    /// cosine against the forward axis (z-depth = ray distance * cosine).
    std::pair<Vec3, double> pixel_ray(int ix, int iy, const Mat3& b) const {
        const double f = focal();
        const Vec3 dir_cam((ix + 0.5 - 0.5 * width) / f, (iy + 0.5 - 0.5 * height) / f, 1.0);
        const double inv_len = 1.0 / dir_cam.norm();
        return {b * (dir_cam * inv_len), inv_len};
    }

    /// Projects a world point; returns false when behind the camera.
    /// On success fills pixel indices and the z-depth.
    bool project(const Vec3& p, const Mat3& b, int& ix, int& iy, double& z) const {
        const Vec3 q = b.transpose() * (p - position);
        if (!(q[2] > 0)) return false;
        z = q[2];
        const double f = focal();
        ix = static_cast<int>(std::floor(f * q[0] / q[2] + 0.5 * width));
        iy = static_cast<int>(std::floor(f * q[1] / q[2] + 0.5 * height));
        return true;
    }
};

/// Row-major depth image; 0 marks "no hit" (infinite depth semantics).
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> depth;
    CameraPose pose;

    double at(int ix, int iy) const { return depth[static_cast<std::size_t>(iy) * width + ix]; }
    double& at(int ix, int iy) { return depth[static_cast<std::size_t>(iy) * width + ix]; }
};

/// Debug dump: PFM, 32-bit little-endian floats, rows bottom-to-top.
void save_pfm(const std::filesystem::path& path, const DepthMap& map);

} // namespace splatcage
