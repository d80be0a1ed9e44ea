#include "splatcage/ply_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace splatcage {

namespace {

std::size_t ply_type_size(const std::string& type) {
    if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
    if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
    if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
        type == "float" || type == "float32")
        return 4;
    if (type == "double" || type == "float64") return 8;
    return 0;
}

bool is_float32(const std::string& type) { return type == "float" || type == "float32"; }

struct VertexLayout {
    std::size_t stride = 0;
    std::size_t count = 0;
    // property name -> byte offset within a vertex record (float32 props only)
    std::map<std::string, std::size_t> offsets;

    std::size_t require(const std::string& name) const {
        auto it = offsets.find(name);
        if (it == offsets.end())
            throw Error("ply: missing required float property '" + name + "'");
        return it->second;
    }
    bool has(const std::string& name) const { return offsets.count(name) != 0; }
};

float read_f32(const char* base, std::size_t offset) {
    float v;
    std::memcpy(&v, base + offset, sizeof(float));
    return v;
}

void write_f32(std::string& out, float v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

} // namespace

GaussianScene load_gaussian_ply(const std::filesystem::path& path, const PlyLoadOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("ply: cannot open '" + path.string() + "'");

    std::string line;
    auto next_line = [&]() -> std::string {
        if (!std::getline(in, line)) throw Error("ply: unexpected end of header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply") throw Error("ply: missing magic line");
    if (next_line() != "format binary_little_endian 1.0")
        throw Error("ply: expected 'format binary_little_endian 1.0', got '" + line + "'");

    VertexLayout layout;
    bool in_vertex = false;
    bool saw_vertex = false;
    while (true) {
        next_line();
        if (line == "end_header") break;
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "comment" || tok == "obj_info") continue;
        if (tok == "element") {
            std::string name;
            std::size_t count = 0;
            ss >> name >> count;
            if (name != "vertex")
                throw Error("ply: unsupported element '" + name + "' in splat file");
            if (saw_vertex) throw Error("ply: duplicate vertex element");
            saw_vertex = true;
            in_vertex = true;
            layout.count = count;
            continue;
        }
        if (tok == "property") {
            if (!in_vertex) throw Error("ply: property before element: '" + line + "'");
            std::string type, name;
            ss >> type;
            if (type == "list") throw Error("ply: list property not supported in vertex element");
            ss >> name;
            const std::size_t size = ply_type_size(type);
            if (size == 0) throw Error("ply: unknown property type '" + type + "'");
            if (is_float32(type)) layout.offsets[name] = layout.stride;
            layout.stride += size;
            continue;
        }
        throw Error("ply: unrecognized header line '" + line + "'");
    }
    if (!saw_vertex) throw Error("ply: no vertex element");

    // Required properties.
    const char* base_names[] = {"x", "y", "z", "nx", "ny", "nz",
                                "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
                                "rot_0", "rot_1", "rot_2", "rot_3",
                                "scale_0", "scale_1"};
    for (const char* n : base_names) layout.require(n);
    const bool has_scale2 = layout.has("scale_2");
    if (!has_scale2 && !opts.allow_two_scales)
        throw Error("ply: missing required float property 'scale_2'");

    // f_rest_* must be 0..m-1 with no gaps.
    std::size_t rest_count = 0;
    for (const auto& [name, off] : layout.offsets) {
        (void)off;
        if (name.rfind("f_rest_", 0) == 0) ++rest_count;
    }
    for (std::size_t i = 0; i < rest_count; ++i)
        if (!layout.has("f_rest_" + std::to_string(i)))
            throw Error("ply: f_rest_* indices are not contiguous (count " +
                        std::to_string(rest_count) + ", missing f_rest_" + std::to_string(i) + ")");
    if (rest_count % 3 != 0)
        throw Error("ply: f_rest count " + std::to_string(rest_count) + " not divisible by 3");
    const std::size_t coeffs = rest_count / 3 + 1;
    const int deg = static_cast<int>(std::lround(std::sqrt(static_cast<double>(coeffs)))) - 1;
    if (static_cast<std::size_t>(sh_coeff_count(deg)) != coeffs)
        throw Error("ply: f_rest count " + std::to_string(rest_count) +
                    " does not correspond to a full SH degree");

    const std::size_t header_end = static_cast<std::size_t>(in.tellg());
    std::string payload(layout.count * layout.stride, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
    const std::size_t got = static_cast<std::size_t>(in.gcount());
    if (got != payload.size())
        throw Error("ply: truncated payload: expected " + std::to_string(payload.size()) +
                    " bytes after header (offset " + std::to_string(header_end) + "), got " +
                    std::to_string(got));

    GaussianScene scene;
    scene.sh_degree = deg;
    scene.gaussians.resize(layout.count);

    const std::size_t off_xyz[3] = {layout.require("x"), layout.require("y"), layout.require("z")};
    const std::size_t off_n[3] = {layout.require("nx"), layout.require("ny"), layout.require("nz")};
    const std::size_t off_dc[3] = {layout.require("f_dc_0"), layout.require("f_dc_1"),
                                   layout.require("f_dc_2")};
    const std::size_t off_op = layout.require("opacity");
    std::vector<std::size_t> off_scale = {layout.require("scale_0"), layout.require("scale_1")};
    if (has_scale2) off_scale.push_back(layout.require("scale_2"));
    const std::size_t off_rot[4] = {layout.require("rot_0"), layout.require("rot_1"),
                                    layout.require("rot_2"), layout.require("rot_3")};
    std::vector<std::size_t> off_rest(rest_count);
    for (std::size_t i = 0; i < rest_count; ++i)
        off_rest[i] = layout.require("f_rest_" + std::to_string(i));

    for (std::size_t v = 0; v < layout.count; ++v) {
        const char* rec = payload.data() + v * layout.stride;
        Gaussian& g = scene.gaussians[v];
        for (int i = 0; i < 3; ++i) g.mean[i] = read_f32(rec, off_xyz[i]);
        for (int i = 0; i < 3; ++i) g.normal[i] = read_f32(rec, off_n[i]);
        g.sh.resize(3 + static_cast<Eigen::Index>(rest_count));
        for (int i = 0; i < 3; ++i) g.sh[i] = read_f32(rec, off_dc[i]);
        for (std::size_t i = 0; i < rest_count; ++i)
            g.sh[3 + static_cast<Eigen::Index>(i)] = read_f32(rec, off_rest[i]);
        g.logit_opacity = read_f32(rec, off_op);
        g.log_scale[0] = read_f32(rec, off_scale[0]);
        g.log_scale[1] = read_f32(rec, off_scale[1]);
        g.log_scale[2] = has_scale2 ? read_f32(rec, off_scale[2]) : std::log(kDiskThirdAxisLength);
        for (int i = 0; i < 4; ++i) g.rotation[i] = read_f32(rec, off_rot[i]);
    }
    return scene;
}

void save_gaussian_ply(const std::filesystem::path& path, const GaussianScene& scene) {
    if (scene.empty()) throw Error("save_gaussian_ply: empty scene");

    const std::size_t rest_count = 3 * (sh_coeff_count(scene.sh_degree) - 1);
    for (std::size_t i = 0; i < scene.size(); ++i)
        if (scene.gaussians[i].sh.size() != static_cast<Eigen::Index>(3 + rest_count))
            throw Error("save_gaussian_ply: gaussian " + std::to_string(i) +
                        " has wrong SH size for degree " + std::to_string(scene.sh_degree));

    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n"
           << "element vertex " << scene.size() << "\n";
    for (const char* n : {"x", "y", "z", "nx", "ny", "nz"})
        header << "property float " << n << "\n";
    for (int i = 0; i < 3; ++i) header << "property float f_dc_" << i << "\n";
    for (std::size_t i = 0; i < rest_count; ++i) header << "property float f_rest_" << i << "\n";
    header << "property float opacity\n";
    for (int i = 0; i < 3; ++i) header << "property float scale_" << i << "\n";
    for (int i = 0; i < 4; ++i) header << "property float rot_" << i << "\n";
    header << "end_header\n";

    std::string body;
    body.reserve(scene.size() * (17 + rest_count) * 4);
    for (const Gaussian& g : scene.gaussians) {
        for (int i = 0; i < 3; ++i) write_f32(body, static_cast<float>(g.mean[i]));
        for (int i = 0; i < 3; ++i) write_f32(body, static_cast<float>(g.normal[i]));
        for (Eigen::Index i = 0; i < g.sh.size(); ++i) write_f32(body, static_cast<float>(g.sh[i]));
        write_f32(body, static_cast<float>(g.logit_opacity));
        for (int i = 0; i < 3; ++i) write_f32(body, static_cast<float>(g.log_scale[i]));
        for (int i = 0; i < 4; ++i) write_f32(body, static_cast<float>(g.rotation[i]));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("save_gaussian_ply: cannot open '" + path.string() + "' for writing");
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!out) throw Error("save_gaussian_ply: write failed for '" + path.string() + "'");
}

} // namespace splatcage
