#pragma once

#include "splatcage/gaussian.hpp"
#include "splatcage/mesh.hpp"

#include <cstring>

namespace splatcage {

/// FNV-1a over raw bytes; used for cache keying, not security.
struct ContentHash {
    std::uint64_t state = 0xcbf29ce484222325ull;

    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state ^= p[i];
            state *= 0x100000001b3ull;
        }
    }
    void add(double v) { bytes(&v, sizeof v); }
    void add(std::uint64_t v) { bytes(&v, sizeof v); }
    void add(const Vec3& v) { bytes(v.data(), 3 * sizeof(double)); }
    void add(const Vec4& v) { bytes(v.data(), 4 * sizeof(double)); }
};

std::uint64_t hash_scene(const GaussianScene& scene);
std::uint64_t hash_mesh(const CageMesh& mesh);

} // namespace splatcage
