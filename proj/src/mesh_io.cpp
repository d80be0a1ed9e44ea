#include "splatcage/mesh_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace splatcage {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
    std::string e = path.extension().string();
    for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

std::size_t ply_count_size(const std::string& type) {
    if (type == "uchar" || type == "uint8" || type == "char" || type == "int8") return 1;
    if (type == "ushort" || type == "uint16" || type == "short" || type == "int16") return 2;
    if (type == "uint" || type == "uint32" || type == "int" || type == "int32") return 4;
    throw Error("ply mesh: unsupported list count type '" + type + "'");
}

std::size_t ply_index_size(const std::string& type) {
    if (type == "int" || type == "int32" || type == "uint" || type == "uint32") return 4;
    if (type == "short" || type == "int16" || type == "ushort" || type == "uint16") return 2;
    throw Error("ply mesh: unsupported list index type '" + type + "'");
}

// "3/5/7" -> 3 (OBJ face tokens may carry texture/normal refs)
int parse_obj_index(const std::string& tok, std::size_t line_no, std::size_t vertex_count) {
    const std::size_t slash = tok.find('/');
    const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
    int idx = 0;
    const auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
    if (ec != std::errc() || ptr != head.data() + head.size())
        throw Error("obj: bad face index '" + tok + "' at line " + std::to_string(line_no));
    if (idx < 0) idx = static_cast<int>(vertex_count) + idx + 1; // negative = relative
    if (idx < 1 || static_cast<std::size_t>(idx) > vertex_count)
        throw Error("obj: face index out of range at line " + std::to_string(line_no));
    return idx - 1;
}

} // namespace

CageMesh load_mesh_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("obj: cannot open '" + path.string() + "'");
    CageMesh mesh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok)) continue;
        if (tok == "v") {
            Vec3 v;
            if (!(ss >> v[0] >> v[1] >> v[2]))
                throw Error("obj: bad vertex at line " + std::to_string(line_no));
            mesh.vertices.push_back(v);
        } else if (tok == "f") {
            std::vector<int> idx;
            while (ss >> tok) idx.push_back(parse_obj_index(tok, line_no, mesh.vertices.size()));
            if (idx.size() != 3)
                throw Error("obj: non-triangular face at line " + std::to_string(line_no));
            mesh.faces.emplace_back(idx[0], idx[1], idx[2]);
        }
        // vn/vt/o/g/s/usemtl/mtllib/# silently ignored
    }
    return mesh;
}

void save_mesh_obj(const std::filesystem::path& path, const CageMesh& mesh) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("obj: cannot open '" + path.string() + "' for writing");
    out.precision(17);
    for (const Vec3& v : mesh.vertices) out << "v " << v[0] << " " << v[1] << " " << v[2] << "\n";
    for (const Index3& f : mesh.faces)
        out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
    if (!out) throw Error("obj: write failed for '" + path.string() + "'");
}

CageMesh load_mesh_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("ply mesh: cannot open '" + path.string() + "'");
    std::string line;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) throw Error("ply mesh: unexpected end of header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };
    if (next_line() != "ply") throw Error("ply mesh: missing magic line");
    if (next_line() != "format binary_little_endian 1.0")
        throw Error("ply mesh: expected binary little-endian format");

    std::size_t n_vert = 0, n_face = 0;
    int vert_extra = 0; // extra float properties after x,y,z
    bool in_vertex = false, in_face = false;
    int xyz_seen = 0;
    std::string list_count_type, list_index_type;
    while (next_line() != "end_header") {
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "comment") continue;
        if (tok == "element") {
            std::string name;
            std::size_t count;
            ss >> name >> count;
            in_vertex = name == "vertex";
            in_face = name == "face";
            if (in_vertex) n_vert = count;
            else if (in_face) n_face = count;
            else throw Error("ply mesh: unsupported element '" + name + "'");
            continue;
        }
        if (tok == "property") {
            std::string type;
            ss >> type;
            if (in_vertex) {
                if (type != "float" && type != "float32")
                    throw Error("ply mesh: vertex properties must be float32");
                std::string name;
                ss >> name;
                if (name == "x" || name == "y" || name == "z") ++xyz_seen;
                else ++vert_extra;
            } else if (in_face) {
                if (type != "list") throw Error("ply mesh: face property must be a list");
                ss >> list_count_type >> list_index_type;
            }
            continue;
        }
        throw Error("ply mesh: unrecognized header line '" + line + "'");
    }
    if (xyz_seen != 3) throw Error("ply mesh: vertex element must carry x, y, z");

    CageMesh mesh;
    mesh.vertices.resize(n_vert);
    const std::size_t stride = (3 + static_cast<std::size_t>(vert_extra)) * 4;
    std::string buf(stride, '\0');
    for (std::size_t i = 0; i < n_vert; ++i) {
        in.read(buf.data(), static_cast<std::streamsize>(stride));
        if (!in) throw Error("ply mesh: truncated vertex data at vertex " + std::to_string(i));
        float xyz[3];
        std::memcpy(xyz, buf.data(), 12);
        mesh.vertices[i] = Vec3(xyz[0], xyz[1], xyz[2]);
    }

    const std::size_t count_size = ply_count_size(list_count_type);
    const std::size_t index_size = ply_index_size(list_index_type);
    mesh.faces.resize(n_face);
    for (std::size_t i = 0; i < n_face; ++i) {
        unsigned char cbuf[8] = {0};
        in.read(reinterpret_cast<char*>(cbuf), static_cast<std::streamsize>(count_size));
        std::uint64_t n = 0;
        std::memcpy(&n, cbuf, count_size);
        if (!in) throw Error("ply mesh: truncated face data at face " + std::to_string(i));
        if (n != 3) throw Error("ply mesh: non-triangular face at face " + std::to_string(i));
        int idx[3];
        for (int k = 0; k < 3; ++k) {
            std::uint64_t raw = 0;
            in.read(reinterpret_cast<char*>(&raw), static_cast<std::streamsize>(index_size));
            if (!in) throw Error("ply mesh: truncated face data at face " + std::to_string(i));
            idx[k] = static_cast<int>(raw);
            if (idx[k] < 0 || static_cast<std::size_t>(idx[k]) >= n_vert)
                throw Error("ply mesh: face index out of range at face " + std::to_string(i));
        }
        mesh.faces[i] = Index3(idx[0], idx[1], idx[2]);
    }
    return mesh;
}

void save_mesh_ply(const std::filesystem::path& path, const CageMesh& mesh) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("ply mesh: cannot open '" + path.string() + "' for writing");
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n"
           << "element vertex " << mesh.vertices.size() << "\n"
           << "property float x\nproperty float y\nproperty float z\n"
           << "element face " << mesh.faces.size() << "\n"
           << "property list uchar int vertex_indices\nend_header\n";
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const Vec3& v : mesh.vertices) {
        const float xyz[3] = {static_cast<float>(v[0]), static_cast<float>(v[1]),
                              static_cast<float>(v[2])};
        out.write(reinterpret_cast<const char*>(xyz), 12);
    }
    for (const Index3& f : mesh.faces) {
        const unsigned char n = 3;
        out.write(reinterpret_cast<const char*>(&n), 1);
        const std::int32_t idx[3] = {f[0], f[1], f[2]};
        out.write(reinterpret_cast<const char*>(idx), 12);
    }
    if (!out) throw Error("ply mesh: write failed for '" + path.string() + "'");
}

CageMesh load_mesh(const std::filesystem::path& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".obj") return load_mesh_obj(path);
    if (ext == ".ply") return load_mesh_ply(path);
    throw Error("load_mesh: unsupported extension '" + ext + "' (use .obj or .ply)");
}

void save_mesh(const std::filesystem::path& path, const CageMesh& mesh) {
    const std::string ext = lower_ext(path);
    if (ext == ".obj") return save_mesh_obj(path, mesh);
    if (ext == ".ply") return save_mesh_ply(path, mesh);
    throw Error("save_mesh: unsupported extension '" + ext + "' (use .obj or .ply)");
}

} // namespace splatcage
