#pragma once

#include "splatcage/camera.hpp"
#include "splatcage/gaussian.hpp"
#include "splatcage/mesh.hpp"
#include "splatcage/volume.hpp"

#include <filesystem>

namespace splatcage {

struct CageBuildConfig {
    int num_rings = 6;
    int cameras_per_ring = 12;
    double expand_factor = 1.25;  // camera sphere radius over scene radius
    int image_width = 256;
    int image_height = 256;
    int voxel_resolution = 128;
    double tsdf_truncation_voxels = 4.0;
    int closing_radius_voxels = 3;
    double carve_margin_voxels = 1.0;
    int target_vertex_count = 160;
    // alternating decimation
    int collapses_per_cycle = 10;
    int gd_steps_per_cycle = 10;
    int alternate_start_vertices = 1000;
    int sample_count = 256;
    double mvc_penalty_mu = 100.0;
    double mvc_anchor_rho = 1e-4;
    double learning_rate = 0.005;
    bool two_stage = true;
    // depth rendering
    double opacity_cutoff = 0.5; // alpha_min
    double iso_sigmas = 2.0;     // k_sigma
    // bilateral smoothing (sigma_s in units of mean edge length, sigma_n
    // relative to sigma_s)
    int bilateral_iterations = 5;
    double bilateral_sigma_s = 2.0;
    double bilateral_sigma_n = 0.3;
    // baseline voxelizer
    double baseline_threshold = 1e-6;
    int baseline_knn = 16;

    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

/// n_r * n_c ring cameras plus two poles on a sphere of radius
/// expand_factor * max mean distance, all looking at the mean of means.
std::vector<CameraPose> synthesize_cameras(const GaussianScene& scene,
                                           const CageBuildConfig& cfg);

/// Opaque iso-ellipsoid raycast: per pixel, the z-depth of the nearest
/// intersection with any {x : (x-mu)^T Sigma^-1 (x-mu) = k_sigma^2} over
/// gaussians with activated opacity >= opacity_cutoff; 0 where nothing hits.
DepthMap render_depth(const GaussianScene& scene, const CameraPose& pose,
                      const CageBuildConfig& cfg);
std::vector<DepthMap> render_depths(const GaussianScene& scene,
                                    const std::vector<CameraPose>& cameras,
                                    const CageBuildConfig& cfg);

/// Volume placement shared by the reconstruction and the baseline: cube
/// around the mean of means, sized so the object plus the closing margin
/// fits at the requested resolution.
GridGeometry volume_geometry(const GaussianScene& scene, const CageBuildConfig& cfg);

/// KinectFusion-style weighted fusion. Per voxel and view: signed distance
/// along the camera axis (pixel depth - voxel depth), truncated to
/// +-(truncation_voxels * voxel_size), normalized to [-1, 1], averaged with
/// per-view weight 1. Voxels behind the surface beyond truncation are left
/// untouched.
void tsdf_integrate(TsdfVolume& volume, const std::vector<DepthMap>& depths,
                    double truncation_voxels, int threads = 1);

/// Occupied iff the cell was observed (weight > 0) and its 6-neighborhood
/// spans a sign change of the tsdf.
VoxelGrid extract_surface_voxels(const TsdfVolume& volume);

/// Ray march with trilinear sampling at half-voxel steps; first positive to
/// non-positive crossing, linearly interpolated. A first valid sample that
/// is already non-positive hits immediately.
DepthMap tsdf_render_depth(const TsdfVolume& volume, const CameraPose& pose);
std::vector<DepthMap> tsdf_render_depths(const TsdfVolume& volume,
                                         const std::vector<CameraPose>& cameras, int threads = 1);

/// Space carving: a voxel stays occupied iff every camera whose frustum
/// contains it both hits a surface at its pixel and places that surface in
/// front of (or at) the voxel minus the margin. Free-space or no-hit
/// observations carve; voxels in no frustum stay occupied.
VoxelGrid depth_carve(const std::vector<DepthMap>& depths, const GridGeometry& geom,
                      double margin_voxels, int threads = 1);

/// Bitwise OR of two grids with identical geometry.
VoxelGrid merge_voxels(const VoxelGrid& a, const VoxelGrid& b);

/// Dilation then erosion by the discrete Euclidean ball of the radius
/// (offsets with |d|^2 <= r^2), computed with exact distance transforms.
VoxelGrid morphological_close(const VoxelGrid& grid, int radius);
VoxelGrid dilate_voxels(const VoxelGrid& grid, int radius);
VoxelGrid erode_voxels(const VoxelGrid& grid, int radius);

/// Classic 256-case marching cubes on the binary field (iso 0.5), with the
/// grid padded by one empty layer so the result is closed and outward
/// oriented. Vertices land on lattice-edge midpoints and are shared exactly.
CageMesh marching_cubes(const VoxelGrid& grid);

/// Feature-preserving vertex smoothing along the normal. sigma_s is the
/// spatial kernel width in world units (also the per-iteration displacement
/// clamp); sigma_n scales the range kernel relative to sigma_s.
CageMesh bilateral_filter(const CageMesh& mesh, int iterations, double sigma_s, double sigma_n);

struct DecimateConfig {
    int target_vertex_count = 160;
    int collapses_per_cycle = 10;
    int gd_steps_per_cycle = 10;
    int alternate_start_vertices = 1000;
    double mvc_penalty_mu = 100.0;
    double mvc_anchor_rho = 1e-4;
    double learning_rate = 0.005;
    bool two_stage = true;
    int threads = 1;
};

struct DecimateStats {
    int collapses = 0;
    int qp_skipped = 0;                  // edges dropped after repeated infeasibility
    double min_constraint_slack = std::numeric_limits<double>::infinity();
    bool reached_target = true;
    int stage2_cycles = 0;
    bool stage2_monotone = true;         // per-cycle loss never increased
    double final_loss = 0;
};

/// Two-stage constrained decimation: priority-queue edge collapse of the
/// constrained quadric error (new vertex kept outside every face plane of
/// the edge neighborhood), alternated with Adam refinement of all vertex
/// positions against the negative-MVC penalty on the object samples.
CageMesh decimate_two_stage(const CageMesh& mesh, const std::vector<Vec3>& samples,
                            const DecimateConfig& cfg, DecimateStats* stats = nullptr);

/// Object surface samples: means with activated opacity >= cutoff,
/// farthest-point subsampled to the requested count.
std::vector<Vec3> surface_samples(const GaussianScene& scene, double opacity_cutoff, int count,
                                  std::uint64_t seed);

struct CageBuildReport {
    std::size_t cameras = 0;
    std::size_t raw_vertices = 0, raw_faces = 0;
    DecimateStats decimate;
    double render_ms = 0, tsdf_ms = 0, carve_ms = 0, close_ms = 0, mesh_ms = 0, decimate_ms = 0;
};

/// End-to-end pipeline: cameras -> depth render -> tsdf fusion -> surface
/// voxels + carved interior -> closing -> marching cubes -> bilateral
/// smoothing -> two-stage decimation. debug_dir, when non-empty, receives
/// per-stage dumps (pfm depths, voxel grids, tsdf, raw mesh).
CageMesh build_cage(const GaussianScene& scene, const CageBuildConfig& cfg,
                    CageBuildReport* report = nullptr,
                    const std::filesystem::path& debug_dir = {});

/// Opacity-field baseline: voxel occupied iff the opacity-weighted density
/// summed over the K nearest gaussians exceeds the threshold.
VoxelGrid baseline_voxelize(const GaussianScene& scene, const CageBuildConfig& cfg);

} // namespace splatcage
