#include "splatcage/cage_builder.hpp"

#include <numbers>

namespace splatcage {

void CageBuildConfig::validate() const {
    if (num_rings <= 0 || cameras_per_ring <= 0) throw Error("config: camera counts must be positive");
    if (!(expand_factor > 0)) throw Error("config: expand factor must be positive");
    if (image_width <= 0 || image_height <= 0) throw Error("config: image size must be positive");
    if (voxel_resolution < 16) throw Error("config: voxel resolution must be at least 16");
    if (!(tsdf_truncation_voxels > 0)) throw Error("config: tsdf truncation must be positive");
    if (closing_radius_voxels < 0) throw Error("config: closing radius must be >= 0");
    if (carve_margin_voxels < 0) throw Error("config: carve margin must be >= 0");
    if (target_vertex_count < 4) throw Error("config: target vertex count must be at least 4");
    if (collapses_per_cycle <= 0 || gd_steps_per_cycle < 0)
        throw Error("config: alternation counts must be positive");
    if (alternate_start_vertices < 4) throw Error("config: alternation start must be >= 4");
    if (sample_count <= 0) throw Error("config: sample count must be positive");
    if (!(mvc_penalty_mu >= 0) || !(mvc_anchor_rho >= 0))
        throw Error("config: penalty weights must be non-negative");
    if (!(learning_rate > 0)) throw Error("config: learning rate must be positive");
    if (!(opacity_cutoff >= 0 && opacity_cutoff < 1))
        throw Error("config: opacity cutoff must be in [0, 1)");
    if (!(iso_sigmas > 0)) throw Error("config: iso sigma count must be positive");
    if (bilateral_iterations < 0) throw Error("config: bilateral iterations must be >= 0");
    if (!(baseline_threshold > 0)) throw Error("config: baseline threshold must be positive");
    if (baseline_knn <= 0) throw Error("config: baseline knn must be positive");
}

namespace {

struct SceneSphere {
    Vec3 center;
    double radius; // max mean distance from the center
};

SceneSphere scene_sphere(const GaussianScene& scene) {
    if (scene.empty()) throw Error("synthesize_cameras: empty scene");
    Vec3 center = Vec3::Zero();
    for (const Gaussian& g : scene.gaussians) center += g.mean;
    center /= static_cast<double>(scene.size());
    double radius = 0;
    for (const Gaussian& g : scene.gaussians)
        radius = std::max(radius, (g.mean - center).norm());
    return {center, radius};
}

} // namespace

std::vector<CameraPose> synthesize_cameras(const GaussianScene& scene,
                                           const CageBuildConfig& cfg) {
    cfg.validate();
    const SceneSphere sphere = scene_sphere(scene);
    if (!(sphere.radius > 0))
        throw Error("synthesize_cameras: degenerate scene (all means coincident)");
    const double r = cfg.expand_factor * sphere.radius;

    // Wide enough to see past the object silhouette with margin, so the
    // carving step observes free space around the whole volume.
    const double tangent_half = std::asin(std::min(1.0, 1.0 / cfg.expand_factor));
    const double fov_y = std::min(2.0 * (tangent_half + 0.26), 2.8);

    std::vector<CameraPose> cameras;
    cameras.reserve(static_cast<std::size_t>(cfg.num_rings) * cfg.cameras_per_ring + 2);
    for (int ring = 0; ring < cfg.num_rings; ++ring) {
        // latitudes evenly spaced in (-90, 90) exclusive; poles are separate
        const double lat = -0.5 * std::numbers::pi +
                           std::numbers::pi * (ring + 1) / (cfg.num_rings + 1);
        for (int k = 0; k < cfg.cameras_per_ring; ++k) {
            const double az = 2.0 * std::numbers::pi * k / cfg.cameras_per_ring;
            CameraPose cam;
            cam.position = sphere.center +
                           r * Vec3(std::cos(lat) * std::cos(az), std::cos(lat) * std::sin(az),
                                    std::sin(lat));
            cam.look_at = sphere.center;
            cam.up = Vec3(0, 0, 1);
            cam.fov_y = fov_y;
            cam.width = cfg.image_width;
            cam.height = cfg.image_height;
            cam.validate();
            cameras.push_back(cam);
        }
    }
    for (const double sign : {1.0, -1.0}) {
        CameraPose cam;
        cam.position = sphere.center + sign * r * Vec3(0, 0, 1);
        cam.look_at = sphere.center;
        cam.up = Vec3(1, 0, 0); // world z is the viewing axis at the poles
        cam.fov_y = fov_y;
        cam.width = cfg.image_width;
        cam.height = cfg.image_height;
        cam.validate();
        cameras.push_back(cam);
    }
    return cameras;
}

GridGeometry volume_geometry(const GaussianScene& scene, const CageBuildConfig& cfg) {
    const SceneSphere sphere = scene_sphere(scene);
    if (!(sphere.radius > 0)) throw Error("volume_geometry: degenerate scene");
    // object plus closing growth must stay clear of the grid boundary
    const double pad_cells = 2.0 * (cfg.closing_radius_voxels + 4);
    const double denom = std::max(0.2, 1.0 - pad_cells / cfg.voxel_resolution);
    const double half = 1.1 * sphere.radius / denom;
    GridGeometry geom;
    geom.dims = Index3::Constant(cfg.voxel_resolution);
    geom.voxel_size = 2.0 * half / cfg.voxel_resolution;
    geom.origin = sphere.center - Vec3::Constant(half);
    return geom;
}

} // namespace splatcage
