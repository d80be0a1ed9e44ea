#pragma once

#include "splatcage/mesh.hpp"

#include <filesystem>

namespace splatcage {

/// ASCII OBJ (v/f) or binary little-endian PLY triangle mesh, chosen by
/// extension (.obj / .ply). Orientation is preserved; non-triangular faces
/// are an error.
CageMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const std::filesystem::path& path, const CageMesh& mesh);

CageMesh load_mesh_obj(const std::filesystem::path& path);
void save_mesh_obj(const std::filesystem::path& path, const CageMesh& mesh);
CageMesh load_mesh_ply(const std::filesystem::path& path);
void save_mesh_ply(const std::filesystem::path& path, const CageMesh& mesh);

} // namespace splatcage
