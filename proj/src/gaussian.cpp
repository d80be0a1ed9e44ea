#include "splatcage/gaussian.hpp"

#include <Eigen/Eigenvalues>

namespace splatcage {

Mat3 covariance_of(const Gaussian& g) {
    const Mat3 r = g.rotation_matrix();
    const Vec3 s2 = g.scales().array().square();
    return r * s2.asDiagonal() * r.transpose();
}

RotationScale refit_rotation_scale(const Mat3& sigma) {
    if (!sigma.allFinite()) throw Error("refit_rotation_scale: non-finite covariance");

    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (sigma + sigma.transpose()));
    if (es.info() != Eigen::Success)
        throw Error("refit_rotation_scale: eigendecomposition failed");

    // Eigen returns ascending order; we want descending.
    Mat3 basis;
    Vec3 lambda;
    for (int i = 0; i < 3; ++i) {
        lambda[i] = es.eigenvalues()[2 - i];
        basis.col(i) = es.eigenvectors().col(2 - i);
    }
    if (basis.determinant() < 0) basis.col(2) = -basis.col(2);

    const double floor = std::max(1e-12 * sigma.trace(), 1e-300);
    Vec3 log_scale;
    for (int i = 0; i < 3; ++i)
        log_scale[i] = 0.5 * std::log(std::max(lambda[i], floor));

    Eigen::Quaterniond q(basis);
    q.normalize();
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    return RotationScale{Vec4(q.w(), q.x(), q.y(), q.z()), log_scale};
}

Vec3 third_axis_from_pair(const Vec3& a1, const Vec3& a2) {
    const double n1 = a1.norm();
    const double n2 = a2.norm();
    if (!(n1 > 0) || !(n2 > 0) || !a1.allFinite() || !a2.allFinite())
        throw Error("third_axis_from_pair: degenerate tangential axis");
    const Vec3 cross = (a1 / n1).cross(a2 / n2);
    const double cn = cross.norm();
    if (!(cn >= 1e-12))
        throw Error("third_axis_from_pair: tangential axes are parallel");
    return cross / cn;
}

GaussianScene convert_2dgs_scene(const GaussianScene& scene) {
    GaussianScene out = scene;
    for (std::size_t i = 0; i < out.gaussians.size(); ++i) {
        Gaussian& g = out.gaussians[i];
        const Mat3 r = g.rotation_matrix();
        if (!r.allFinite())
            throw Error("convert_2dgs_scene: non-finite rotation at primitive " + std::to_string(i));
        Vec3 a3;
        try {
            a3 = third_axis_from_pair(r.col(0), r.col(1));
        } catch (const Error& e) {
            throw Error("convert_2dgs_scene: primitive " + std::to_string(i) + ": " + e.what());
        }
        Mat3 frame;
        frame.col(0) = r.col(0);
        frame.col(1) = a3.cross(r.col(0)).normalized();
        frame.col(2) = a3;
        Eigen::Quaterniond q(frame);
        q.normalize();
        if (q.w() < 0) q.coeffs() = -q.coeffs();
        g.rotation = Vec4(q.w(), q.x(), q.y(), q.z());
        g.log_scale[2] = std::log(kDiskThirdAxisLength);
    }
    return out;
}

} // namespace splatcage
