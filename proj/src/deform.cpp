#include "splatcage/deform.hpp"

#include "splatcage/hash.hpp"
#include "splatcage/parallel.hpp"

#include <chrono>
#include <cstring>
#include <fstream>
#include <numbers>

namespace splatcage {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::uint64_t cache_key(const GaussianScene& scene, const CageMesh& cage_s, bool hull_gate) {
    ContentHash h;
    h.add(hash_scene(scene));
    h.add(hash_mesh(cage_s));
    h.add(static_cast<std::uint64_t>(hull_gate ? 1 : 0));
    return h.state;
}

Vec3 apply_row(const double* w, const std::vector<Vec3>& verts) {
    Vec3 out = Vec3::Zero();
    for (std::size_t j = 0; j < verts.size(); ++j) out += w[j] * verts[j];
    return out;
}

} // namespace

void DeformConfig::validate() const {
    if (!(split_threshold_deg > 0 && split_threshold_deg < 180))
        throw Error("deform config: split threshold must be in (0, 180) degrees");
    if (!(split_factor_k > 0 && split_factor_k <= 1))
        throw Error("deform config: split factor k must be in (0, 1]");
    if (max_split_rounds < 0) throw Error("deform config: split rounds must be >= 0");
    if (!(min_split_axis_len >= 0)) throw Error("deform config: min split axis length must be >= 0");
}

AxisMatrix axis_matrix(const ProxyPointSet& p) {
    AxisMatrix d;
    d.col(0) = p.x1 - p.c;
    d.col(1) = p.y1 - p.c;
    d.col(2) = p.z1 - p.c;
    d.col(3) = p.x2 - p.c;
    d.col(4) = p.y2 - p.c;
    d.col(5) = p.z2 - p.c;
    return d;
}

ProxyPointSet proxy_points(const Gaussian& g) {
    const Mat3 r = g.rotation_matrix();
    const Vec3 s = g.scales();
    ProxyPointSet p;
    p.c = g.mean;
    p.x1 = g.mean + s[0] * r.col(0);
    p.y1 = g.mean + s[1] * r.col(1);
    p.z1 = g.mean + s[2] * r.col(2);
    p.x2 = g.mean - s[0] * r.col(0);
    p.y2 = g.mean - s[1] * r.col(1);
    p.z2 = g.mean - s[2] * r.col(2);
    return p;
}

Eigen::Matrix<double, 6, 3> transform_factor(const AxisMatrix& ds) {
    Mat3 m = ds * ds.transpose();
    m.diagonal().array() += 1e-12 * m.trace();
    const double det = m.determinant();
    if (!(det > 0) || !std::isfinite(det))
        throw Error("estimate_transform: degenerate gaussian axes (singular normal matrix)");
    return ds.transpose() * m.inverse();
}

Mat3 estimate_transform(const AxisMatrix& ds, const AxisMatrix& dd) {
    return dd * transform_factor(ds);
}

Gaussian transform_gaussian(const Gaussian& g, const Mat3& t, const Vec3& c_d) {
    if (!t.allFinite()) throw Error("transform_gaussian: non-finite transform");
    const Mat3 sigma_d = t * covariance_of(g) * t.transpose();
    const RotationScale rs = refit_rotation_scale(sigma_d);
    Gaussian out = g; // opacity, SH, normal copied verbatim
    out.mean = c_d;
    out.rotation = rs.rotation;
    out.log_scale = rs.log_scale;
    return out;
}

bool detect_bend(const ProxyPointSet& deformed, int axis, double source_axis_len,
                 const DeformConfig& cfg) {
    if (source_axis_len < cfg.min_split_axis_len) return false;
    const Vec3 v1 = deformed.axis_endpoint(axis, 0) - deformed.c;
    const Vec3 v2 = deformed.axis_endpoint(axis, 1) - deformed.c;
    const double n1 = v1.norm(), n2 = v2.norm();
    if (!(n1 > 0) || !(n2 > 0)) return false; // collapsed axis, nothing to split
    const double cosang = std::clamp(v1.dot(v2) / (n1 * n2), -1.0, 1.0);
    // angle < threshold  <=>  cos(angle) > cos(threshold)
    return cosang > std::cos(cfg.split_threshold_deg * std::numbers::pi / 180.0);
}

std::pair<Gaussian, Gaussian> split_gaussian(const Gaussian& g, int axis, double k) {
    if (!(k > 0)) throw Error("split_gaussian: k must be positive");
    const Mat3 r = g.rotation_matrix();
    const double sigma = std::exp(g.log_scale[axis]);
    const Vec3 offset = k * sigma * r.col(axis);
    Gaussian a = g, b = g;
    a.log_scale = g.log_scale.array() + std::log(k);
    b.log_scale = a.log_scale;
    a.mean = g.mean + offset;
    b.mean = g.mean - offset;
    return {a, b};
}

std::vector<std::uint8_t> hull_filter(const GaussianScene& scene, const CageMesh& cage_s) {
    const ConvexHull hull = convex_hull(cage_s.vertices);
    const double tol = 1e-9 * cage_s.bounds().diag();
    std::vector<std::uint8_t> mask(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i)
        mask[i] = hull.contains(scene.gaussians[i].mean, tol) ? 1 : 0;
    return mask;
}

namespace {

// Shared by precompute_cache and the uncached path so both produce bitwise
// identical weights and factors.
struct Preprocessed {
    std::vector<std::uint8_t> admitted;
    std::vector<std::int64_t> row_offset;
    WeightMatrix weights;
    std::vector<Eigen::Matrix<double, 6, 3>> pinv;
};

Preprocessed preprocess(const GaussianScene& scene, const CageMesh& cage_s,
                        const DeformConfig& cfg) {
    Preprocessed out;
    out.admitted = cfg.hull_gate ? hull_filter(scene, cage_s)
                                 : std::vector<std::uint8_t>(scene.size(), 1);
    out.row_offset.assign(scene.size(), -1);
    std::int64_t slot = 0;
    for (std::size_t i = 0; i < scene.size(); ++i)
        if (out.admitted[i]) out.row_offset[i] = 7 * slot++;
    const std::int64_t n_admitted = slot;

    out.weights.resize(7 * n_admitted, static_cast<Eigen::Index>(cage_s.vertex_count()));
    out.pinv.resize(static_cast<std::size_t>(n_admitted));
    const double diag = cage_s.bounds().diag();

    parallel_for(scene.size(), cfg.threads, [&](std::size_t i) {
        if (!out.admitted[i]) return;
        thread_local detail::MvcScratch scratch;
        const Gaussian& g = scene.gaussians[i];
        const ProxyPointSet p = proxy_points(g);
        const std::int64_t row = out.row_offset[i];
        for (int k = 0; k < ProxyPointSet::kPointCount; ++k)
            detail::mvc_weights_into(p.point(k), cage_s.vertices, cage_s.faces, diag, scratch,
                                     out.weights.row(row + k).data());
        out.pinv[static_cast<std::size_t>(row / 7)] = transform_factor(axis_matrix(p));
    });
    return out;
}

ProxyPointSet deform_proxy(const ProxyPointSet& p, const CageMesh& cage_s,
                           const CageMesh& cage_d, double diag, detail::MvcScratch& scratch,
                           std::vector<double>& row) {
    ProxyPointSet out;
    row.resize(cage_s.vertex_count());
    for (int k = 0; k < ProxyPointSet::kPointCount; ++k) {
        detail::mvc_weights_into(p.point(k), cage_s.vertices, cage_s.faces, diag, scratch,
                                 row.data());
        out.point(k) = apply_row(row.data(), cage_d.vertices);
    }
    return out;
}

struct WorkItem {
    Gaussian g;
    ProxyPointSet aps;
    ProxyPointSet apd;
    bool is_root = false;
};

ProxyPointSet split_deformed(const ProxyPointSet& apd, int axis, int side) {
    // Simplified post-deformation split: the child keeps the source ellipsoid
    // and halves the bent axis, one arm per side, meeting at the old center.
    const Vec3 c = apd.c;
    const Vec3 outer = apd.axis_endpoint(axis, side);
    const Vec3 center = 0.5 * (c + outer);
    const Vec3 shift = center - c;
    ProxyPointSet out;
    out.c = center;
    for (int a = 0; a < 3; ++a)
        for (int s = 0; s < 2; ++s)
            out.axis_endpoint(a, s) = apd.axis_endpoint(a, s) + shift;
    out.axis_endpoint(axis, side) = outer;
    out.axis_endpoint(axis, 1 - side) = c;
    return out;
}

} // namespace

DeformCache precompute_cache(const GaussianScene& scene, const CageMesh& cage_s,
                             const DeformConfig& cfg) {
    if (scene.empty()) throw Error("precompute_cache: empty scene");
    cfg.validate();
    require_closed(cage_s, "precompute_cache");
    Preprocessed p = preprocess(scene, cage_s, cfg);
    DeformCache cache;
    cache.key = cache_key(scene, cage_s, cfg.hull_gate);
    cache.admitted = std::move(p.admitted);
    cache.row_offset = std::move(p.row_offset);
    cache.weights = std::move(p.weights);
    cache.pinv = std::move(p.pinv);
    return cache;
}

GaussianScene deform_scene(const GaussianScene& scene, const CageMesh& cage_s,
                           const CageMesh& cage_d, const DeformConfig& cfg,
                           const DeformCache* cache, DeformStats* stats) {
    if (scene.empty()) throw Error("deform_scene: empty scene");
    cfg.validate();
    if (cage_s.vertex_count() != cage_d.vertex_count() ||
        cage_s.face_count() != cage_d.face_count())
        throw Error("cage topology mismatch: source and deformed cages differ");
    for (std::size_t f = 0; f < cage_s.faces.size(); ++f)
        if (cage_s.faces[f] != cage_d.faces[f])
            throw Error("cage topology mismatch: face lists differ");
    require_closed(cage_s, "deform_scene");

    const double t0 = now_ms();
    Preprocessed computed;
    const std::vector<std::uint8_t>* admitted;
    const std::vector<std::int64_t>* row_offset;
    const WeightMatrix* weights;
    const std::vector<Eigen::Matrix<double, 6, 3>>* pinv;
    if (cache) {
        if (cache->key != cache_key(scene, cage_s, cfg.hull_gate))
            throw Error("deform_scene: stale cache (scene or source cage changed)");
        admitted = &cache->admitted;
        row_offset = &cache->row_offset;
        weights = &cache->weights;
        pinv = &cache->pinv;
    } else {
        computed = preprocess(scene, cage_s, cfg);
        admitted = &computed.admitted;
        row_offset = &computed.row_offset;
        weights = &computed.weights;
        pinv = &computed.pinv;
    }
    const double t1 = now_ms();

    const double diag = cage_s.bounds().diag();
    // splits are rare: a flat primary slot per gaussian avoids per-item
    // vector churn, the overflow map only fills on splits
    std::vector<Gaussian> primary(scene.size());
    std::vector<std::vector<Gaussian>> overflow(scene.size());
    std::vector<std::uint32_t> split_counts(scene.size(), 0);

    parallel_for(scene.size(), cfg.threads, [&](std::size_t i) {
        const Gaussian& g = scene.gaussians[i];
        if (!(*admitted)[i]) {
            primary[i] = g;
            return;
        }
        thread_local detail::MvcScratch scratch;
        thread_local std::vector<double> row;

        const std::int64_t base = (*row_offset)[i];
        const ProxyPointSet aps = proxy_points(g);
        ProxyPointSet apd;
        for (int k = 0; k < ProxyPointSet::kPointCount; ++k)
            apd.point(k) = apply_row(weights->row(base + k).data(), cage_d.vertices);

        const Vec3 sigma = g.scales();
        bool any_bend = cfg.max_split_rounds > 0 || cfg.split_mode == SplitMode::PostMvcSimplified;
        if (any_bend) {
            any_bend = false;
            for (int axis = 0; axis < 3 && !any_bend; ++axis)
                any_bend = detect_bend(apd, axis, sigma[axis], cfg);
        }
        if (!any_bend) {
            const Mat3 t = axis_matrix(apd) * (*pinv)[static_cast<std::size_t>(base / 7)];
            primary[i] = transform_gaussian(g, t, apd.c);
            return;
        }

        std::vector<Gaussian> out;
        if (cfg.split_mode == SplitMode::PreMvc) {
            std::vector<WorkItem> items{{g, aps, apd, true}};
            std::vector<WorkItem> next;
            for (int round = 0; round < cfg.max_split_rounds; ++round) {
                bool any = false;
                for (int axis = 0; axis < 3; ++axis) {
                    next.clear();
                    for (const WorkItem& item : items) {
                        const double src_len = std::exp(item.g.log_scale[axis]);
                        if (detect_bend(item.apd, axis, src_len, cfg)) {
                            auto [a, b] = split_gaussian(item.g, axis, cfg.split_factor_k);
                            for (const Gaussian& child : {a, b}) {
                                WorkItem w;
                                w.g = child;
                                w.aps = proxy_points(child);
                                w.apd = deform_proxy(w.aps, cage_s, cage_d, diag, scratch, row);
                                next.push_back(std::move(w));
                            }
                            ++split_counts[i];
                            any = true;
                        } else {
                            next.push_back(item);
                        }
                    }
                    items.swap(next);
                }
                if (!any) break;
            }
            out.reserve(items.size());
            for (const WorkItem& item : items) {
                const auto factor = item.is_root ? (*pinv)[static_cast<std::size_t>(base / 7)]
                                                 : transform_factor(axis_matrix(item.aps));
                const Mat3 t = axis_matrix(item.apd) * factor;
                out.push_back(transform_gaussian(item.g, t, item.apd.c));
            }
        } else {
            // Post-MVC simplified split: source duplicated, deformed points
            // split in place; one pass over the axes.
            struct Pair {
                ProxyPointSet apd;
                bool is_root;
            };
            std::vector<Pair> pairs{{apd, true}};
            std::vector<Pair> next;
            for (int axis = 0; axis < 3; ++axis) {
                next.clear();
                for (const Pair& pr : pairs) {
                    const double src_len = std::exp(g.log_scale[axis]);
                    if (detect_bend(pr.apd, axis, src_len, cfg)) {
                        next.push_back({split_deformed(pr.apd, axis, 0), false});
                        next.push_back({split_deformed(pr.apd, axis, 1), false});
                        ++split_counts[i];
                    } else {
                        next.push_back(pr);
                    }
                }
                pairs.swap(next);
            }
            const auto& factor = (*pinv)[static_cast<std::size_t>(base / 7)];
            out.reserve(pairs.size());
            for (const Pair& pr : pairs) {
                const Mat3 t = axis_matrix(pr.apd) * factor;
                out.push_back(transform_gaussian(g, t, pr.apd.c));
            }
        }
        primary[i] = std::move(out.front());
        overflow[i].assign(std::make_move_iterator(out.begin() + 1),
                           std::make_move_iterator(out.end()));
    });

    GaussianScene deformed;
    deformed.sh_degree = scene.sh_degree;
    std::size_t total = 0, splits = 0, n_admitted = 0;
    for (std::size_t i = 0; i < primary.size(); ++i) {
        total += 1 + overflow[i].size();
        splits += split_counts[i];
        n_admitted += (*admitted)[i] ? 1 : 0;
    }
    deformed.gaussians.reserve(total);
    for (std::size_t i = 0; i < primary.size(); ++i) {
        deformed.gaussians.push_back(std::move(primary[i]));
        for (Gaussian& g : overflow[i]) deformed.gaussians.push_back(std::move(g));
    }
    const double t2 = now_ms();

    if (stats) {
        stats->splits = splits;
        stats->admitted = n_admitted;
        stats->preprocess_ms = t1 - t0;
        stats->deform_ms = t2 - t1;
    }
    return deformed;
}

void DeformCache::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cache: cannot open '" + path.string() + "' for writing");
    const char magic[8] = {'S', 'C', 'D', 'C', '0', '0', '0', '1'};
    out.write(magic, 8);
    auto w64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    w64(key);
    w64(admitted.size());
    w64(static_cast<std::uint64_t>(weights.rows()));
    w64(static_cast<std::uint64_t>(weights.cols()));
    out.write(reinterpret_cast<const char*>(admitted.data()),
              static_cast<std::streamsize>(admitted.size()));
    out.write(reinterpret_cast<const char*>(row_offset.data()),
              static_cast<std::streamsize>(row_offset.size() * 8));
    out.write(reinterpret_cast<const char*>(weights.data()),
              static_cast<std::streamsize>(static_cast<std::size_t>(weights.size()) * 8));
    for (const auto& m : pinv)
        out.write(reinterpret_cast<const char*>(m.data()), 18 * 8);
    if (!out) throw Error("cache: write failed for '" + path.string() + "'");
}

DeformCache DeformCache::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cache: cannot open '" + path.string() + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "SCDC0001", 8) != 0)
        throw Error("cache: bad magic in '" + path.string() + "'");
    auto r64 = [&]() {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    DeformCache c;
    c.key = r64();
    const std::uint64_t n = r64();
    const std::uint64_t rows = r64();
    const std::uint64_t cols = r64();
    if (rows % 7 != 0) throw Error("cache: corrupt row count");
    c.admitted.resize(n);
    in.read(reinterpret_cast<char*>(c.admitted.data()), static_cast<std::streamsize>(n));
    c.row_offset.resize(n);
    in.read(reinterpret_cast<char*>(c.row_offset.data()), static_cast<std::streamsize>(n * 8));
    c.weights.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(c.weights.data()),
            static_cast<std::streamsize>(rows * cols * 8));
    c.pinv.resize(rows / 7);
    for (auto& m : c.pinv) in.read(reinterpret_cast<char*>(m.data()), 18 * 8);
    if (!in) throw Error("cache: truncated file '" + path.string() + "'");
    return c;
}

} // namespace splatcage
