#include "splatcage/cage_builder.hpp"

#include "splatcage/parallel.hpp"

namespace splatcage {

void tsdf_integrate(TsdfVolume& volume, const std::vector<DepthMap>& depths,
                    double truncation_voxels, int threads) {
    if (volume.geom.cell_count() == 0) throw Error("tsdf_integrate: zero-sized volume");
    if (depths.empty()) throw Error("tsdf_integrate: need at least one depth map");
    const double trunc = truncation_voxels * volume.geom.voxel_size;

    struct View {
        Mat3 basis;
        const DepthMap* map;
    };
    std::vector<View> views;
    views.reserve(depths.size());
    for (const DepthMap& d : depths) views.push_back({d.pose.basis(), &d});

    const Index3 dims = volume.geom.dims;
    const std::size_t slabs = static_cast<std::size_t>(dims[2]);
    parallel_for(slabs, threads, [&](std::size_t zi) {
        const int z = static_cast<int>(zi);
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) {
                const Vec3 p = volume.geom.center(x, y, z);
                const std::size_t idx = volume.geom.index(x, y, z);
                float f = volume.tsdf[idx];
                float w = volume.weight[idx];
                for (const View& view : views) {
                    int px, py;
                    double depth_p;
                    if (!view.map->pose.project(p, view.basis, px, py, depth_p)) continue;
                    if (px < 0 || py < 0 || px >= view.map->width || py >= view.map->height)
                        continue;
                    const double d_pix = view.map->at(px, py);
                    if (!(d_pix > 0)) continue; // no surface observation on this ray
                    const double sdf = d_pix - depth_p;
                    if (sdf < -trunc) continue; // occluded beyond truncation
                    const float val = static_cast<float>(std::min(1.0, sdf / trunc));
                    f = (f * w + val) / (w + 1.0f);
                    w += 1.0f;
                }
                volume.tsdf[idx] = f;
                volume.weight[idx] = w;
            }
    });
}

VoxelGrid extract_surface_voxels(const TsdfVolume& volume) {
    VoxelGrid out = VoxelGrid::empty_like(volume.geom);
    const Index3 d = volume.geom.dims;
    auto sign_pos = [](float v) { return v > 0; };
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                const std::size_t idx = volume.geom.index(x, y, z);
                if (!(volume.weight[idx] > 0)) continue;
                const bool self_pos = sign_pos(volume.tsdf[idx]);
                const int nb[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z},
                                      {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
                bool crossing = false;
                for (const auto& n : nb) {
                    if (!volume.geom.inside(n[0], n[1], n[2])) continue;
                    const std::size_t ni = volume.geom.index(n[0], n[1], n[2]);
                    if (!(volume.weight[ni] > 0)) continue;
                    if (sign_pos(volume.tsdf[ni]) != self_pos) {
                        crossing = true;
                        break;
                    }
                }
                if (crossing) out.set(idx, true);
            }
    return out;
}

namespace {

// Trilinear sample over cell centers; valid only when all 8 corners carry
// fusion weight.
bool sample_tsdf(const TsdfVolume& v, const Vec3& p, double& value) {
    const Vec3 g = (p - v.geom.origin) / v.geom.voxel_size - Vec3::Constant(0.5);
    const int bx = static_cast<int>(std::floor(g[0]));
    const int by = static_cast<int>(std::floor(g[1]));
    const int bz = static_cast<int>(std::floor(g[2]));
    if (bx < 0 || by < 0 || bz < 0 || bx + 1 >= v.geom.dims[0] || by + 1 >= v.geom.dims[1] ||
        bz + 1 >= v.geom.dims[2])
        return false;
    const double fx = g[0] - bx, fy = g[1] - by, fz = g[2] - bz;
    double acc = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const std::size_t idx = v.geom.index(bx + dx, by + dy, bz + dz);
                if (!(v.weight[idx] > 0)) return false;
                const double wgt = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                acc += wgt * v.tsdf[idx];
            }
    value = acc;
    return true;
}

} // namespace

DepthMap tsdf_render_depth(const TsdfVolume& volume, const CameraPose& pose) {
    pose.validate();
    DepthMap map;
    map.width = pose.width;
    map.height = pose.height;
    map.pose = pose;
    map.depth.assign(static_cast<std::size_t>(pose.width) * pose.height, 0.0);

    const Mat3 basis = pose.basis();
    const Vec3 lo = volume.geom.origin;
    const Vec3 hi = volume.geom.origin +
                    volume.geom.voxel_size * volume.geom.dims.cast<double>();
    const double step = 0.5 * volume.geom.voxel_size;

    for (int y = 0; y < pose.height; ++y)
        for (int x = 0; x < pose.width; ++x) {
            const auto [dir, cosang] = pose.pixel_ray(x, y, basis);
            // slab intersection with the volume box
            double t0 = 0, t1 = std::numeric_limits<double>::infinity();
            bool miss = false;
            for (int a = 0; a < 3 && !miss; ++a) {
                if (std::abs(dir[a]) < 1e-15) {
                    if (pose.position[a] < lo[a] || pose.position[a] > hi[a]) miss = true;
                    continue;
                }
                double near = (lo[a] - pose.position[a]) / dir[a];
                double far = (hi[a] - pose.position[a]) / dir[a];
                if (near > far) std::swap(near, far);
                t0 = std::max(t0, near);
                t1 = std::min(t1, far);
                if (t0 > t1) miss = true;
            }
            if (miss) continue;

            double prev_val = 0, prev_t = 0;
            bool prev_valid = false;
            // start a fraction of a step in so an immediate hit (camera
            // already inside the surface) still yields a nonzero depth
            for (double t = std::max(t0, 0.25 * step); t <= t1; t += step) {
                double val;
                if (!sample_tsdf(volume, pose.position + t * dir, val)) {
                    prev_valid = false;
                    continue;
                }
                if (!prev_valid) {
                    if (val <= 0) { // entered straight into the surface
                        map.at(x, y) = t * cosang;
                        break;
                    }
                    prev_val = val;
                    prev_t = t;
                    prev_valid = true;
                    continue;
                }
                if (prev_val > 0 && val <= 0) {
                    const double alpha = prev_val / (prev_val - val);
                    map.at(x, y) = (prev_t + alpha * (t - prev_t)) * cosang;
                    break;
                }
                prev_val = val;
                prev_t = t;
            }
        }
    return map;
}

std::vector<DepthMap> tsdf_render_depths(const TsdfVolume& volume,
                                         const std::vector<CameraPose>& cameras, int threads) {
    std::vector<DepthMap> maps(cameras.size());
    parallel_for(cameras.size(), threads,
                 [&](std::size_t i) { maps[i] = tsdf_render_depth(volume, cameras[i]); });
    return maps;
}

VoxelGrid depth_carve(const std::vector<DepthMap>& depths, const GridGeometry& geom,
                      double margin_voxels, int threads) {
    VoxelGrid out = VoxelGrid::empty_like(geom);
    const double margin = margin_voxels * geom.voxel_size;

    struct View {
        Mat3 basis;
        const DepthMap* map;
    };
    std::vector<View> views;
    for (const DepthMap& d : depths) views.push_back({d.pose.basis(), &d});

    const Index3 dims = geom.dims;
    parallel_for(static_cast<std::size_t>(dims[2]), threads, [&](std::size_t zi) {
        const int z = static_cast<int>(zi);
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x) {
                const Vec3 p = geom.center(x, y, z);
                bool occupied = true; // vacuous when no frustum covers the voxel
                for (const View& view : views) {
                    int px, py;
                    double depth_p;
                    if (!view.map->pose.project(p, view.basis, px, py, depth_p)) continue;
                    if (px < 0 || py < 0 || px >= view.map->width || py >= view.map->height)
                        continue;
                    const double d_pix = view.map->at(px, py);
                    if (!(d_pix > 0) || depth_p < d_pix - margin) {
                        occupied = false; // observed in free space
                        break;
                    }
                }
                if (occupied) out.set(geom.index(x, y, z), true);
            }
    });
    return out;
}

VoxelGrid merge_voxels(const VoxelGrid& a, const VoxelGrid& b) {
    if (!a.geom.same_as(b.geom)) throw Error("merge_voxels: grid geometry mismatch");
    VoxelGrid out = a;
    for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] |= b.bits[i];
    return out;
}

} // namespace splatcage
