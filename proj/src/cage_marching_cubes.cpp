#include "splatcage/cage_builder.hpp"

#include <unordered_map>

namespace splatcage {

namespace {

#include "mc_tables.inc"

// Bourke cube layout relative to the cell base lattice point: rings 0-3 and
// 4-7 wind in the xz plane, +y between rings.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
                               {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

} // namespace

CageMesh marching_cubes(const VoxelGrid& grid) {
    const Index3 d = grid.geom.dims;
    auto occupied = [&](int x, int y, int z) {
        return grid.geom.inside(x, y, z) && grid.get(x, y, z);
    };
    if (grid.count() == 0) throw Error("marching_cubes: empty grid");

    CageMesh mesh;
    // Vertices are de-duplicated by lattice edge: key packs the lattice point
    // in padded coordinates plus the edge axis.
    std::unordered_map<std::uint64_t, int> edge_vertex;
    const std::uint64_t w0 = static_cast<std::uint64_t>(d[0]) + 3;
    const std::uint64_t w1 = static_cast<std::uint64_t>(d[1]) + 3;

    auto vertex_on_edge = [&](int px, int py, int pz, int qx, int qy, int qz) {
        int axis;
        int bx = px, by = py, bz = pz;
        if (qx != px) {
            axis = 0;
            bx = std::min(px, qx);
        } else if (qy != py) {
            axis = 1;
            by = std::min(py, qy);
        } else {
            axis = 2;
            bz = std::min(pz, qz);
        }
        const std::uint64_t key =
            ((static_cast<std::uint64_t>(bz + 1) * w1 + (by + 1)) * w0 + (bx + 1)) * 4 +
            static_cast<std::uint64_t>(axis);
        const auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<int>(mesh.vertices.size()));
        if (inserted) {
            // binary field: the crossing sits at the edge midpoint
            const Vec3 a = grid.geom.center(px, py, pz);
            const Vec3 b = grid.geom.center(qx, qy, qz);
            mesh.vertices.push_back(0.5 * (a + b));
        }
        return it->second;
    };

    // cells over the lattice padded by one empty layer
    for (int z = -1; z < d[2]; ++z)
        for (int y = -1; y < d[1]; ++y)
            for (int x = -1; x < d[0]; ++x) {
                int cube_index = 0;
                for (int c = 0; c < 8; ++c)
                    if (!occupied(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]))
                        cube_index |= 1 << c; // empty corners are below the iso level
                if (kEdgeTable[cube_index] == 0) continue;

                int edge_ids[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(kEdgeTable[cube_index] & (1 << e))) continue;
                    const int* ca = kCorner[kEdgeCorner[e][0]];
                    const int* cb = kCorner[kEdgeCorner[e][1]];
                    edge_ids[e] = vertex_on_edge(x + ca[0], y + ca[1], z + ca[2], x + cb[0],
                                                 y + cb[1], z + cb[2]);
                }
                for (const int* t = kTriTable[cube_index]; *t != -1; t += 3)
                    mesh.faces.push_back({edge_ids[t[0]], edge_ids[t[1]], edge_ids[t[2]]});
            }

    // the tables wind for "inside is below iso"; flip if the enclosed volume
    // came out negative so normals face outward
    if (mesh.signed_volume() < 0)
        for (auto& f : mesh.faces) std::swap(f[1], f[2]);
    return mesh;
}

} // namespace splatcage
