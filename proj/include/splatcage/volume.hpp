#pragma once

#include "splatcage/types.hpp"

#include <filesystem>

namespace splatcage {

struct GridGeometry {
    Vec3 origin = Vec3::Zero(); // world position of the (0,0,0) voxel corner
    double voxel_size = 1.0;
    Index3 dims = Index3::Zero();

    std::size_t cell_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
    }
    bool inside(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
    }
    Vec3 center(int x, int y, int z) const {
        return origin + voxel_size * Vec3(x + 0.5, y + 0.5, z + 0.5);
    }
    bool same_as(const GridGeometry& o) const {
        return origin == o.origin && voxel_size == o.voxel_size && dims == o.dims;
    }
};

/// Truncated signed distance volume, values in [-1, 1], per-voxel fusion
/// weights >= 0 (0 = never observed).
struct TsdfVolume {
    GridGeometry geom;
    std::vector<float> tsdf;
    std::vector<float> weight;

    static TsdfVolume make(const Vec3& center, double half_extent, int resolution);
};

/// Binary occupancy grid (bit-packed).
struct VoxelGrid {
    GridGeometry geom;
    std::vector<std::uint8_t> bits;

    static VoxelGrid empty_like(const GridGeometry& geom) {
        VoxelGrid v;
        v.geom = geom;
        v.bits.assign((geom.cell_count() + 7) / 8, 0);
        return v;
    }
    bool get(std::size_t i) const { return (bits[i >> 3] >> (i & 7)) & 1; }
    void set(std::size_t i, bool value) {
        if (value)
            bits[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
        else
            bits[i >> 3] &= static_cast<std::uint8_t>(~(1u << (i & 7)));
    }
    bool get(int x, int y, int z) const { return get(geom.index(x, y, z)); }
    void set(int x, int y, int z, bool value) { set(geom.index(x, y, z), value); }
    std::size_t count() const {
        std::size_t total = 0;
        for (std::size_t i = 0; i < geom.cell_count(); ++i) total += get(i) ? 1 : 0;
        return total;
    }
};

/// 6-connected components of the occupied set.
int voxel_components(const VoxelGrid& grid);

/// Raw debug dumps. Header: origin f32 x3, voxel_size f32, dims u32 x3
/// (28 bytes), then bit-packed occupancy / f32 (tsdf, weight) pairs.
void save_voxel_grid(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid load_voxel_grid(const std::filesystem::path& path);
void save_tsdf(const std::filesystem::path& path, const TsdfVolume& volume);

} // namespace splatcage
