#pragma once

#include "splatcage/convex_hull.hpp"
#include "splatcage/gaussian.hpp"
#include "splatcage/mesh.hpp"
#include "splatcage/mvc.hpp"

#include <filesystem>
#include <optional>

namespace splatcage {

/// Ellipsoid-as-points: the center plus the six intersections of the
/// principal axes with the 1-sigma surface.
struct ProxyPointSet {
    Vec3 c, x1, y1, z1, x2, y2, z2;

    static constexpr int kPointCount = 7;

    Vec3& point(int i) {
        switch (i) {
            case 0: return c;
            case 1: return x1;
            case 2: return y1;
            case 3: return z1;
            case 4: return x2;
            case 5: return y2;
            default: return z2;
        }
    }
    const Vec3& point(int i) const { return const_cast<ProxyPointSet*>(this)->point(i); }

    // side 0 -> *1, side 1 -> *2
    Vec3& axis_endpoint(int axis, int side) { return point(1 + axis + 3 * side); }
    const Vec3& axis_endpoint(int axis, int side) const { return point(1 + axis + 3 * side); }
};

/// Columns [x1-c, y1-c, z1-c, x2-c, y2-c, z2-c].
using AxisMatrix = Eigen::Matrix<double, 3, 6>;
AxisMatrix axis_matrix(const ProxyPointSet& p);

enum class SplitMode { PreMvc, PostMvcSimplified };

struct DeformConfig {
    double split_threshold_deg = 175.0;
    double min_split_axis_len = 1e-2; // source semi-axis shorter than this never splits
    double split_factor_k = 0.5;
    int max_split_rounds = 3;
    bool hull_gate = true;
    SplitMode split_mode = SplitMode::PreMvc;
    int threads = 1;

    void validate() const;
};

struct DeformStats {
    std::size_t splits = 0;
    std::size_t admitted = 0;
    double preprocess_ms = 0;
    double deform_ms = 0;
};

/// Per-scene preprocessing for real-time replay: the MVC weight rows of all
/// admitted proxy points, the hull admission mask, and the source-side least
/// squares factor of each Gaussian. Keyed by a content hash of (scene,
/// source cage, hull_gate).
struct DeformCache {
    std::uint64_t key = 0;
    std::vector<std::uint8_t> admitted;        // per gaussian
    std::vector<std::int64_t> row_offset;      // per gaussian; -1 when not admitted
    WeightMatrix weights;                      // 7 rows per admitted gaussian
    std::vector<Eigen::Matrix<double, 6, 3>> pinv; // per admitted gaussian, dense order

    void save(const std::filesystem::path& path) const;
    static DeformCache load(const std::filesystem::path& path);
};

ProxyPointSet proxy_points(const Gaussian& g);

/// T = Dd Ds^T (Ds Ds^T)^-1 with a 1e-12 * trace diagonal regularizer.
Mat3 estimate_transform(const AxisMatrix& ds, const AxisMatrix& dd);

/// Source-side factor Ds^T (Ds Ds^T)^-1 so T = Dd * factor.
Eigen::Matrix<double, 6, 3> transform_factor(const AxisMatrix& ds);

/// New mean c_d, covariance T Sigma T^T refit to rotation + scale; opacity
/// and SH copied verbatim.
Gaussian transform_gaussian(const Gaussian& g, const Mat3& t, const Vec3& c_d);

/// True when the deformed axis bent below the angle threshold and the source
/// semi-axis is long enough to be worth splitting.
bool detect_bend(const ProxyPointSet& deformed, int axis, double source_axis_len,
                 const DeformConfig& cfg);

/// Source-space split: both children have every log-scale shifted by ln(k)
/// and sit at c +- k * sigma_axis * axis_dir, meeting at the parent center.
std::pair<Gaussian, Gaussian> split_gaussian(const Gaussian& g, int axis, double k);

/// Admission mask: mean inside the convex hull of the source cage vertices
/// (signed distances <= 1e-9 * cage bbox diagonal).
std::vector<std::uint8_t> hull_filter(const GaussianScene& scene, const CageMesh& cage_s);

DeformCache precompute_cache(const GaussianScene& scene, const CageMesh& cage_s,
                             const DeformConfig& cfg);

/// Full pipeline: proxies -> MVC -> bend detection / splitting -> transform
/// estimation -> transformed Gaussians. Children are emitted in parent order
/// (x before y before z); non-admitted Gaussians are copied untouched.
GaussianScene deform_scene(const GaussianScene& scene, const CageMesh& cage_s,
                           const CageMesh& cage_d, const DeformConfig& cfg,
                           const DeformCache* cache = nullptr, DeformStats* stats = nullptr);

} // namespace splatcage
