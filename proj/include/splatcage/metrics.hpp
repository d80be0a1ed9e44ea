#pragma once

#include "splatcage/mesh.hpp"

#include <filesystem>
#include <string>
#include <utility>

namespace splatcage {

struct CageQuality {
    int components = 0;
    long self_intersections = 0;
    bool closed = false;
    double enclosure_fraction = 0;
};

struct MvcStats {
    double negative_entry_fraction = 0;
    double worst_negative = 0; // <= 0
    std::size_t sample_count = 0;
};

/// Connected components of the face adjacency graph (faces sharing an edge).
int mesh_components(const CageMesh& mesh);

/// Number of face pairs that intersect, excluding pairs sharing a vertex
/// index. Robust orientation predicates with an extended-precision fallback;
/// BVH accelerated, count identical to the all-pairs scan.
long self_intersections(const CageMesh& mesh);
long self_intersections_brute_force(const CageMesh& mesh); // test oracle

/// Fraction of points strictly inside the closed mesh by ray parity, with
/// deterministic direction retries on degenerate hits.
double enclosure_fraction(const std::vector<Vec3>& points, const CageMesh& mesh);

/// Over all (sample, vertex) MVC entries: fraction strictly below the
/// -1e-12 deadband and the smallest entry (clamped to <= 0).
MvcStats negative_mvc_stats(const std::vector<Vec3>& samples, const CageMesh& cage,
                            int threads = 1);

/// Quality bundle; enclosure computed when points are provided.
CageQuality evaluate_cage_quality(const CageMesh& mesh, const std::vector<Vec3>& points = {});

/// Flat key=value report (one pair per line) and the same content as JSON.
using ReportFields = std::vector<std::pair<std::string, std::string>>;
void write_report_text(const std::filesystem::path& path, const ReportFields& fields);
void write_report_json(const std::filesystem::path& path, const ReportFields& fields);

} // namespace splatcage
