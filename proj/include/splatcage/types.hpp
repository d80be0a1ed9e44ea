#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace splatcage {

using Scalar = double;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Index3 = Eigen::Vector3i;

/// Error type for everything this library raises on bad input or I/O.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Axis-aligned bounding box of a point set; diag() is the scale used by
/// relative tolerances throughout.
struct Aabb {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void expand(const Vec3& p) {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    bool empty() const { return (max.array() < min.array()).any(); }
    Vec3 extent() const { return empty() ? Vec3::Zero() : Vec3(max - min); }
    double diag() const { return extent().norm(); }
    Vec3 center() const { return 0.5 * (min + max); }
};

template <typename Range>
Aabb bounding_box(const Range& points) {
    Aabb box;
    for (const auto& p : points) box.expand(p);
    return box;
}

} // namespace splatcage
