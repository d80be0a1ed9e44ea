#pragma once

#include "splatcage/gaussian.hpp"

#include <filesystem>

namespace splatcage {

struct PlyLoadOptions {
    /// Accept checkpoints that carry only scale_0/scale_1 (flat-disk
    /// variants). The missing third log-scale is filled with
    /// log(kDiskThirdAxisLength) and is expected to be fixed up by
    /// convert_2dgs_scene.
    bool allow_two_scales = false;
};

/// Reads a binary little-endian splat checkpoint. Properties may appear in
/// any order in the header; values are stored raw (unactivated). The SH
/// degree is inferred from the f_rest_* count.
GaussianScene load_gaussian_ply(const std::filesystem::path& path,
                                const PlyLoadOptions& opts = {});

/// Writes the canonical property order:
/// x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3,
/// all 32-bit little-endian floats. Throws on an empty scene.
void save_gaussian_ply(const std::filesystem::path& path, const GaussianScene& scene);

} // namespace splatcage
