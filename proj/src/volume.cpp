#include "splatcage/volume.hpp"

#include <fstream>
#include <vector>

namespace splatcage {

TsdfVolume TsdfVolume::make(const Vec3& center, double half_extent, int resolution) {
    if (resolution <= 0 || !(half_extent > 0))
        throw Error("tsdf: volume must have positive size");
    TsdfVolume v;
    v.geom.dims = Index3::Constant(resolution);
    v.geom.voxel_size = 2.0 * half_extent / resolution;
    v.geom.origin = center - Vec3::Constant(half_extent);
    v.tsdf.assign(v.geom.cell_count(), 1.0f);
    v.weight.assign(v.geom.cell_count(), 0.0f);
    return v;
}

int voxel_components(const VoxelGrid& grid) {
    const Index3 d = grid.geom.dims;
    std::vector<std::int32_t> label(grid.geom.cell_count(), -1);
    int components = 0;
    std::vector<std::size_t> stack;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                const std::size_t seed = grid.geom.index(x, y, z);
                if (!grid.get(seed) || label[seed] >= 0) continue;
                label[seed] = components;
                stack.assign(1, seed);
                while (!stack.empty()) {
                    const std::size_t cur = stack.back();
                    stack.pop_back();
                    const int cz = static_cast<int>(cur / (static_cast<std::size_t>(d[0]) * d[1]));
                    const int cy = static_cast<int>(cur / d[0] % d[1]);
                    const int cx = static_cast<int>(cur % d[0]);
                    const int nb[6][3] = {{cx - 1, cy, cz}, {cx + 1, cy, cz}, {cx, cy - 1, cz},
                                          {cx, cy + 1, cz}, {cx, cy, cz - 1}, {cx, cy, cz + 1}};
                    for (const auto& n : nb) {
                        if (!grid.geom.inside(n[0], n[1], n[2])) continue;
                        const std::size_t ni = grid.geom.index(n[0], n[1], n[2]);
                        if (grid.get(ni) && label[ni] < 0) {
                            label[ni] = components;
                            stack.push_back(ni);
                        }
                    }
                }
                ++components;
            }
    return components;
}

namespace {

void write_header(std::ofstream& out, const GridGeometry& g) {
    const float origin[3] = {static_cast<float>(g.origin[0]), static_cast<float>(g.origin[1]),
                             static_cast<float>(g.origin[2])};
    const float voxel = static_cast<float>(g.voxel_size);
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(g.dims[0]),
                                   static_cast<std::uint32_t>(g.dims[1]),
                                   static_cast<std::uint32_t>(g.dims[2])};
    out.write(reinterpret_cast<const char*>(origin), 12);
    out.write(reinterpret_cast<const char*>(&voxel), 4);
    out.write(reinterpret_cast<const char*>(dims), 12);
}

GridGeometry read_header(std::ifstream& in) {
    float origin[3], voxel;
    std::uint32_t dims[3];
    in.read(reinterpret_cast<char*>(origin), 12);
    in.read(reinterpret_cast<char*>(&voxel), 4);
    in.read(reinterpret_cast<char*>(dims), 12);
    GridGeometry g;
    g.origin = Vec3(origin[0], origin[1], origin[2]);
    g.voxel_size = voxel;
    g.dims = Index3(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                    static_cast<int>(dims[2]));
    return g;
}

} // namespace

void save_voxel_grid(const std::filesystem::path& path, const VoxelGrid& grid) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("voxel dump: cannot open '" + path.string() + "'");
    write_header(out, grid.geom);
    out.write(reinterpret_cast<const char*>(grid.bits.data()),
              static_cast<std::streamsize>(grid.bits.size()));
    if (!out) throw Error("voxel dump: write failed");
}

VoxelGrid load_voxel_grid(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("voxel dump: cannot open '" + path.string() + "'");
    VoxelGrid grid;
    grid.geom = read_header(in);
    grid.bits.resize((grid.geom.cell_count() + 7) / 8);
    in.read(reinterpret_cast<char*>(grid.bits.data()),
            static_cast<std::streamsize>(grid.bits.size()));
    if (!in) throw Error("voxel dump: truncated file");
    return grid;
}

void save_tsdf(const std::filesystem::path& path, const TsdfVolume& volume) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("tsdf dump: cannot open '" + path.string() + "'");
    write_header(out, volume.geom);
    for (std::size_t i = 0; i < volume.tsdf.size(); ++i) {
        out.write(reinterpret_cast<const char*>(&volume.tsdf[i]), 4);
        out.write(reinterpret_cast<const char*>(&volume.weight[i]), 4);
    }
    if (!out) throw Error("tsdf dump: write failed");
}

} // namespace splatcage
