#pragma once

#include "splatcage/mesh.hpp"

namespace splatcage {

using WeightMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Mean value coordinates of x with respect to a closed triangular cage,
/// normalized so they sum to one. Interior points reproduce x as the
/// weighted vertex sum; the coordinates are also defined (possibly negative
/// or unbounded near the surface) for exterior points.
VecX mvc_weights(const Vec3& x, const CageMesh& cage);

/// Row i holds mvc_weights(points[i], cage); rows are computed independently
/// and bitwise match the scalar path.
WeightMatrix mvc_weights_batch(const std::vector<Vec3>& points, const CageMesh& cage,
                               int threads = 1);

/// x' = sum_j w_j v'_j over the deformed cage vertices.
Vec3 mvc_apply(const VecX& weights, const CageMesh& cage_d);
Vec3 mvc_apply(const Eigen::Ref<const Eigen::RowVectorXd>& weights, const CageMesh& cage_d);

struct MvcLossConfig {
    double mu = 100.0;   // negative-weight penalty strength
    double rho = 1e-4;   // anchor to the pre-refinement positions
};

struct MvcLossValue {
    double loss = 0;
    double penalty = 0;      // mu-term alone
    int skipped_samples = 0; // samples on the cage surface
};

struct MvcLossGradient {
    double loss = 0;
    MatX3 gradient;              // d loss / d vertex positions
    int skipped_samples = 0;
    std::vector<int> skipped;    // indices of surface samples
};

/// Negative-MVC penalty plus anchor term:
///   mu/(|V||S|) * sum_i sum_j |min(phi_ji, 0)|^2 + rho * ||V - V0||^2.
MvcLossValue mvc_loss(const std::vector<Vec3>& samples, const CageMesh& cage,
                      const MatX3& rest_positions, const MvcLossConfig& cfg,
                      int threads = 1);

/// Analytic (reverse-mode) gradient of mvc_loss with respect to the cage
/// vertex positions. Samples that land on the cage surface have no defined
/// gradient; they are skipped and reported.
MvcLossGradient mvc_loss_gradient(const std::vector<Vec3>& samples, const CageMesh& cage,
                                  const MatX3& rest_positions, const MvcLossConfig& cfg,
                                  int threads = 1);

namespace detail {

/// Per-thread scratch for repeated weight evaluations against one cage.
struct MvcScratch {
    std::vector<double> dist;
    std::vector<Vec3> unit;
};

enum class MvcPointClass { Generic, OnVertex, OnFace };

/// Unvalidated kernel: writes |V| normalized weights to out. bbox_diag sets
/// the vertex-snap tolerance.
MvcPointClass mvc_weights_into(const Vec3& x, const std::vector<Vec3>& vertices,
                               const std::vector<Index3>& faces, double bbox_diag,
                               MvcScratch& scratch, double* out);

} // namespace detail

} // namespace splatcage
