#include "splatcage/hash.hpp"

namespace splatcage {

std::uint64_t hash_scene(const GaussianScene& scene) {
    ContentHash h;
    h.add(static_cast<std::uint64_t>(scene.size()));
    h.add(static_cast<std::uint64_t>(scene.sh_degree));
    for (const Gaussian& g : scene.gaussians) {
        h.add(g.mean);
        h.add(g.normal);
        h.add(g.rotation);
        h.add(g.log_scale);
        h.add(g.logit_opacity);
        h.bytes(g.sh.data(), static_cast<std::size_t>(g.sh.size()) * sizeof(double));
    }
    return h.state;
}

std::uint64_t hash_mesh(const CageMesh& mesh) {
    ContentHash h;
    h.add(static_cast<std::uint64_t>(mesh.vertices.size()));
    h.add(static_cast<std::uint64_t>(mesh.faces.size()));
    for (const Vec3& v : mesh.vertices) h.add(v);
    for (const Index3& f : mesh.faces) h.bytes(f.data(), 3 * sizeof(int));
    return h.state;
}

} // namespace splatcage
