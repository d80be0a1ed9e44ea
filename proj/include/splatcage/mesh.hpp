#pragma once

#include "splatcage/types.hpp"

#include <map>
#include <utility>

namespace splatcage {

/// Closed triangular surface mesh, counter-clockwise outward orientation.
struct CageMesh {
    std::vector<Vec3> vertices;
    std::vector<Index3> faces;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
    Aabb bounds() const { return bounding_box(vertices); }

    double face_area(std::size_t f) const {
        const Index3& t = faces[f];
        return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
    }
    Vec3 face_normal(std::size_t f) const {
        const Index3& t = faces[f];
        Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
        const double len = n.norm();
        return len > 0 ? Vec3(n / len) : Vec3::Zero();
    }
    Vec3 face_centroid(std::size_t f) const {
        const Index3& t = faces[f];
        return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
    }
    double mean_edge_length() const;
    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    double signed_volume() const;
};

/// Map from undirected edge to the faces using it.
using EdgeFaceMap = std::map<std::pair<int, int>, std::vector<int>>;
EdgeFaceMap edge_face_map(const CageMesh& m);

/// Every face index in range and no zero-area faces beyond
/// 1e-12 * squared bbox diagonal; throws with a description otherwise.
void validate_mesh(const CageMesh& m);

/// True iff every undirected edge is used by exactly two faces with opposite
/// direction (consistent orientation, watertight).
bool is_closed_mesh(const CageMesh& m);

/// Throws when the cage is not closed.
void require_closed(const CageMesh& m, const char* who);

} // namespace splatcage
