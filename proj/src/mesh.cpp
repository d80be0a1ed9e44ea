#include "splatcage/mesh.hpp"

#include <set>

namespace splatcage {

double CageMesh::mean_edge_length() const {
    std::set<std::pair<int, int>> seen;
    double total = 0;
    for (const Index3& f : faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            if (seen.insert({a, b}).second) total += (vertices[a] - vertices[b]).norm();
        }
    }
    return seen.empty() ? 0.0 : total / static_cast<double>(seen.size());
}

double CageMesh::signed_volume() const {
    double v = 0;
    for (const Index3& f : faces)
        v += vertices[f[0]].dot(vertices[f[1]].cross(vertices[f[2]]));
    return v / 6.0;
}

EdgeFaceMap edge_face_map(const CageMesh& m) {
    EdgeFaceMap map;
    for (std::size_t fi = 0; fi < m.faces.size(); ++fi) {
        const Index3& f = m.faces[fi];
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            map[{a, b}].push_back(static_cast<int>(fi));
        }
    }
    return map;
}

void validate_mesh(const CageMesh& m) {
    const int n = static_cast<int>(m.vertices.size());
    const double d = m.bounds().diag();
    const double min_area = 1e-12 * d * d;
    for (std::size_t fi = 0; fi < m.faces.size(); ++fi) {
        const Index3& f = m.faces[fi];
        for (int k = 0; k < 3; ++k)
            if (f[k] < 0 || f[k] >= n)
                throw Error("mesh: face " + std::to_string(fi) + " index out of range");
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            throw Error("mesh: face " + std::to_string(fi) + " repeats a vertex");
        if (m.face_area(fi) <= min_area)
            throw Error("mesh: face " + std::to_string(fi) + " is degenerate (area below tolerance)");
    }
}

bool is_closed_mesh(const CageMesh& m) {
    if (m.faces.empty()) return false;
    std::map<std::pair<int, int>, int> directed;
    for (const Index3& f : m.faces) {
        for (int k = 0; k < 3; ++k) {
            const int a = f[k], b = f[(k + 1) % 3];
            if (a == b) return false;
            if (++directed[{a, b}] > 1) return false; // duplicate orientation
        }
    }
    for (const auto& [edge, count] : directed) {
        (void)count;
        if (directed.find({edge.second, edge.first}) == directed.end()) return false;
    }
    return true;
}

void require_closed(const CageMesh& m, const char* who) {
    if (!is_closed_mesh(m))
        throw Error(std::string(who) + ": cage mesh is not closed/consistently oriented");
}

} // namespace splatcage
