#include "splatcage/camera.hpp"

#include <fstream>

namespace splatcage {

void save_pfm(const std::filesystem::path& path, const DepthMap& map) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("pfm: cannot open '" + path.string() + "'");
    out << "Pf\n" << map.width << " " << map.height << "\n-1.0\n";
    for (int y = map.height - 1; y >= 0; --y) // PFM stores rows bottom-up
        for (int x = 0; x < map.width; ++x) {
            const float v = static_cast<float>(map.at(x, y));
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
    if (!out) throw Error("pfm: write failed");
}

} // namespace splatcage
