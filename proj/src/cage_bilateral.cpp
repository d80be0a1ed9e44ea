#include "splatcage/cage_builder.hpp"

#include <set>

namespace splatcage {

CageMesh bilateral_filter(const CageMesh& mesh, int iterations, double sigma_s, double sigma_n) {
    if (iterations <= 0) return mesh;
    if (!(sigma_s > 0) || !(sigma_n > 0))
        throw Error("bilateral_filter: sigmas must be positive");

    const std::size_t n = mesh.vertices.size();
    std::vector<std::vector<int>> neighbors(n);
    {
        std::set<std::pair<int, int>> seen;
        for (const Index3& f : mesh.faces)
            for (int k = 0; k < 3; ++k) {
                int a = f[k], b = f[(k + 1) % 3];
                if (seen.insert({std::min(a, b), std::max(a, b)}).second) {
                    neighbors[a].push_back(b);
                    neighbors[b].push_back(a);
                }
            }
    }

    CageMesh out = mesh;
    const double sigma_r = sigma_n * sigma_s;
    std::vector<Vec3> normals(n);
    std::vector<double> offsets(n);

    for (int it = 0; it < iterations; ++it) {
        for (auto& nm : normals) nm.setZero();
        for (const Index3& f : mesh.faces) {
            const Vec3 a = out.vertices[f[0]], b = out.vertices[f[1]], c = out.vertices[f[2]];
            const Vec3 weighted = (b - a).cross(c - a); // area-weighted normal
            for (int k = 0; k < 3; ++k) normals[f[k]] += weighted;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double len = normals[i].norm();
            if (len > 0) normals[i] /= len;
        }
        for (std::size_t i = 0; i < n; ++i) {
            double num = 0, den = 0;
            for (int j : neighbors[i]) {
                const Vec3 t = out.vertices[j] - out.vertices[i];
                const double h = t.dot(normals[i]);
                const double w = std::exp(-t.squaredNorm() / (2 * sigma_s * sigma_s)) *
                                 std::exp(-h * h / (2 * sigma_r * sigma_r));
                num += w * h;
                den += w;
            }
            offsets[i] = den > 0 ? std::clamp(num / den, -sigma_s, sigma_s) : 0.0;
        }
        for (std::size_t i = 0; i < n; ++i) out.vertices[i] += offsets[i] * normals[i];
    }
    return out;
}

} // namespace splatcage
