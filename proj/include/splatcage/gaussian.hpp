#pragma once

#include "splatcage/types.hpp"

namespace splatcage {

/// One splat primitive, stored in raw (pre-activation) checkpoint space:
/// scales are logs, opacity is a logit, the quaternion is unnormalized as
/// read from file. Activation accessors convert lazily so round-trips stay
/// lossless.
struct Gaussian {
    Vec3 mean = Vec3::Zero();
    Vec3 normal = Vec3::Zero();     // nx/ny/nz slots of the checkpoint, carried through
    Vec4 rotation = Vec4(1, 0, 0, 0); // (w, x, y, z), raw
    Vec3 log_scale = Vec3::Zero();
    double logit_opacity = 0.0;
    VecX sh;                        // f_dc (3) followed by f_rest, file order

    double opacity() const { return sigmoid(logit_opacity); }
    Vec3 scales() const { return log_scale.array().exp(); }

    Eigen::Quaterniond quat() const {
        Eigen::Quaterniond q(rotation[0], rotation[1], rotation[2], rotation[3]);
        q.normalize();
        return q;
    }
    Mat3 rotation_matrix() const { return quat().toRotationMatrix(); }
};

struct GaussianScene {
    std::vector<Gaussian> gaussians;
    int sh_degree = 0;

    std::size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
    Aabb bounds() const {
        Aabb box;
        for (const auto& g : gaussians) box.expand(g.mean);
        return box;
    }
};

/// Number of SH coefficients per color channel for a degree.
inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Sigma = R S S R^T with S = diag(exp(log_scale)).
Mat3 covariance_of(const Gaussian& g);

/// Eigendecomposition refit of a (possibly sheared) covariance back to a
/// rotation + log-scale pair. Eigenvalues are ordered descending and clamped
/// below at 1e-12 * trace before sqrt/log; the rotation is made right-handed
/// by flipping the third eigenvector when needed, and the quaternion sign is
/// canonicalized to w >= 0.
struct RotationScale {
    Vec4 rotation;  // (w, x, y, z), unit
    Vec3 log_scale;
};
RotationScale refit_rotation_scale(const Mat3& sigma);

/// Unit third axis completing a tangential pair; throws when the inputs are
/// parallel (cross-product norm below 1e-12 after normalization).
Vec3 third_axis_from_pair(const Vec3& a1, const Vec3& a2);

/// Turns flat-disk primitives into volumetric ones by synthesizing the
/// missing axis as the cross product of the two tangential axes with length
/// kDiskThirdAxisLength.
inline constexpr double kDiskThirdAxisLength = 1e-5;
GaussianScene convert_2dgs_scene(const GaussianScene& scene);

} // namespace splatcage
