#include "splatcage/cage_builder.hpp"

namespace splatcage {

namespace {

constexpr double kInf = 1e30;

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void dt1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z, int n) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

// Squared Euclidean distance to the nearest seed voxel (center to center, in
// voxel units).
std::vector<double> distance_squared(const VoxelGrid& grid, bool seed_value) {
    const Index3 dims = grid.geom.dims;
    const std::size_t n = grid.geom.cell_count();
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = grid.get(i) == seed_value ? 0.0 : kInf;

    const int max_dim = dims.maxCoeff();
    std::vector<double> f(max_dim), d(max_dim), z(max_dim + 1);
    std::vector<int> v(max_dim);

    // x pass
    for (int zc = 0; zc < dims[2]; ++zc)
        for (int y = 0; y < dims[1]; ++y) {
            const std::size_t base = grid.geom.index(0, y, zc);
            for (int x = 0; x < dims[0]; ++x) f[x] = dist[base + x];
            dt1d(f, d, v, z, dims[0]);
            for (int x = 0; x < dims[0]; ++x) dist[base + x] = d[x];
        }
    // y pass
    for (int zc = 0; zc < dims[2]; ++zc)
        for (int x = 0; x < dims[0]; ++x) {
            for (int y = 0; y < dims[1]; ++y) f[y] = dist[grid.geom.index(x, y, zc)];
            dt1d(f, d, v, z, dims[1]);
            for (int y = 0; y < dims[1]; ++y) dist[grid.geom.index(x, y, zc)] = d[y];
        }
    // z pass
    for (int y = 0; y < dims[1]; ++y)
        for (int x = 0; x < dims[0]; ++x) {
            for (int zc = 0; zc < dims[2]; ++zc) f[zc] = dist[grid.geom.index(x, y, zc)];
            dt1d(f, d, v, z, dims[2]);
            for (int zc = 0; zc < dims[2]; ++zc) dist[grid.geom.index(x, y, zc)] = d[zc];
        }
    return dist;
}

} // namespace

VoxelGrid dilate_voxels(const VoxelGrid& grid, int radius) {
    if (radius <= 0) return grid;
    VoxelGrid out = VoxelGrid::empty_like(grid.geom);
    const std::vector<double> dist = distance_squared(grid, true);
    const double r2 = static_cast<double>(radius) * radius;
    for (std::size_t i = 0; i < grid.geom.cell_count(); ++i)
        if (dist[i] <= r2) out.set(i, true);
    return out;
}

VoxelGrid erode_voxels(const VoxelGrid& grid, int radius) {
    if (radius <= 0) return grid;
    VoxelGrid out = VoxelGrid::empty_like(grid.geom);
    const std::vector<double> dist = distance_squared(grid, false);
    const double r2 = static_cast<double>(radius) * radius;
    const Index3 d = grid.geom.dims;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                const std::size_t i = grid.geom.index(x, y, z);
                if (!grid.get(i)) continue;
                // outside the grid counts as empty
                const int wall = std::min({x + 1, d[0] - x, y + 1, d[1] - y, z + 1, d[2] - z});
                if (dist[i] > r2 && static_cast<double>(wall) * wall > r2) out.set(i, true);
            }
    return out;
}

VoxelGrid morphological_close(const VoxelGrid& grid, int radius) {
    return erode_voxels(dilate_voxels(grid, radius), radius);
}

} // namespace splatcage
