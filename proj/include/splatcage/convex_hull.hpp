#pragma once

#include "splatcage/types.hpp"

namespace splatcage {

/// Triangulated convex hull with outward-oriented faces and the matching
/// half-space planes (unit normal n, offset d; inside means n.x - d <= 0).
struct ConvexHull {
    std::vector<Vec3> vertices;
    std::vector<Index3> faces;
    std::vector<Eigen::Vector4d> planes;

    double max_signed_distance(const Vec3& p) const {
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& pl : planes)
            worst = std::max(worst, pl.head<3>().dot(p) - pl[3]);
        return worst;
    }
    bool contains(const Vec3& p, double tol) const { return max_signed_distance(p) <= tol; }
};

/// Quickhull. Throws Error when the points are degenerate (all collinear or
/// coplanar within tolerance).
ConvexHull convex_hull(const std::vector<Vec3>& points);

} // namespace splatcage
