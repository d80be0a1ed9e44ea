#include "splatcage/metrics.hpp"

#include "splatcage/mvc.hpp"
#include "splatcage/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

namespace splatcage {

namespace {

// ---- robust orientation predicates ------------------------------------
// Double evaluation with a conservative error filter; uncertain signs fall
// back to double-double arithmetic (exact diffs, fma-based products).

struct Dd {
    double hi = 0, lo = 0;
};

Dd two_sum(double a, double b) {
    const double s = a + b;
    const double bv = s - a;
    return {s, (a - (s - bv)) + (b - bv)};
}

Dd two_diff(double a, double b) {
    const double s = a - b;
    const double bv = s - a;
    return {s, (a - (s - bv)) - (b + bv)};
}

Dd two_prod(double a, double b) {
    const double p = a * b;
    return {p, std::fma(a, b, -p)};
}

Dd dd_add(const Dd& a, const Dd& b) {
    Dd s = two_sum(a.hi, b.hi);
    s.lo += a.lo + b.lo;
    const Dd t = two_sum(s.hi, s.lo);
    return t;
}

Dd dd_sub(const Dd& a, const Dd& b) { return dd_add(a, {-b.hi, -b.lo}); }

Dd dd_mul(const Dd& a, const Dd& b) {
    Dd p = two_prod(a.hi, b.hi);
    p.lo += a.hi * b.lo + a.lo * b.hi;
    return two_sum(p.hi, p.lo);
}

double orient3d_dd(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    Dd p[3], q[3], r[3];
    for (int i = 0; i < 3; ++i) {
        p[i] = two_diff(a[i], d[i]);
        q[i] = two_diff(b[i], d[i]);
        r[i] = two_diff(c[i], d[i]);
    }
    auto det2 = [&](const Dd& m00, const Dd& m01, const Dd& m10, const Dd& m11) {
        return dd_sub(dd_mul(m00, m11), dd_mul(m01, m10));
    };
    const Dd t0 = dd_mul(p[0], det2(q[1], q[2], r[1], r[2]));
    const Dd t1 = dd_mul(p[1], det2(q[0], q[2], r[0], r[2]));
    const Dd t2 = dd_mul(p[2], det2(q[0], q[1], r[0], r[1]));
    const Dd det = dd_add(dd_sub(t0, t1), t2);
    return det.hi;
}

int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const Vec3 p = a - d, q = b - d, r = c - d;
    const double det = p.dot(q.cross(r));
    const double mag = p.cwiseAbs().maxCoeff() * q.cwiseAbs().maxCoeff() *
                       r.cwiseAbs().maxCoeff();
    if (std::abs(det) > 1e-12 * mag) return det > 0 ? 1 : -1;
    const double exact = orient3d_dd(a, b, c, d);
    const double tiny = 1e-28 * std::max(mag, 1e-300);
    if (std::abs(exact) <= tiny) return 0;
    return exact > 0 ? 1 : -1;
}

int orient2d(double ax, double ay, double bx, double by, double cx, double cy) {
    const double det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    const double mag = (std::abs(bx - ax) + std::abs(by - ay)) *
                       (std::abs(cx - ax) + std::abs(cy - ay));
    if (std::abs(det) > 1e-12 * mag) return det > 0 ? 1 : -1;
    const Dd d1 = dd_mul(two_diff(bx, ax), two_diff(cy, ay));
    const Dd d2 = dd_mul(two_diff(by, ay), two_diff(cx, ax));
    const Dd exact = dd_sub(d1, d2);
    const double tiny = 1e-28 * std::max(mag, 1e-300);
    if (std::abs(exact.hi) <= tiny) return 0;
    return exact.hi > 0 ? 1 : -1;
}

// ---- coplanar triangle overlap ----------------------------------------

struct Tri2 {
    double x[3], y[3];
};

Tri2 project_tri(const Vec3* v, int drop_axis) {
    Tri2 t;
    const int u = (drop_axis + 1) % 3, w = (drop_axis + 2) % 3;
    for (int i = 0; i < 3; ++i) {
        t.x[i] = v[i][u];
        t.y[i] = v[i][w];
    }
    // normalize to counter-clockwise
    if (orient2d(t.x[0], t.y[0], t.x[1], t.y[1], t.x[2], t.y[2]) < 0) {
        std::swap(t.x[1], t.x[2]);
        std::swap(t.y[1], t.y[2]);
    }
    return t;
}

// separating-axis test over both edge sets; boundary contact counts as
// overlap
bool tri_tri_overlap_2d(const Tri2& a, const Tri2& b) {
    auto separated_by = [](const Tri2& edges, const Tri2& other) {
        for (int i = 0; i < 3; ++i) {
            const int j = (i + 1) % 3;
            bool all_outside = true;
            for (int k = 0; k < 3 && all_outside; ++k)
                if (orient2d(edges.x[i], edges.y[i], edges.x[j], edges.y[j], other.x[k],
                             other.y[k]) >= 0)
                    all_outside = false;
            if (all_outside) return true;
        }
        return false;
    };
    return !separated_by(a, b) && !separated_by(b, a);
}

bool coplanar_overlap(const Vec3* t1, const Vec3* t2) {
    const Vec3 n = (t1[1] - t1[0]).cross(t1[2] - t1[0]);
    int drop = 0;
    if (std::abs(n[1]) > std::abs(n[drop])) drop = 1;
    if (std::abs(n[2]) > std::abs(n[drop])) drop = 2;
    return tri_tri_overlap_2d(project_tri(t1, drop), project_tri(t2, drop));
}

// segment (u,v) against triangle (p,q,r); counts boundary contact
bool segment_hits_triangle(const Vec3& u, const Vec3& v, const Vec3& p, const Vec3& q,
                           const Vec3& r) {
    const int su = orient3d(p, q, r, u);
    const int sv = orient3d(p, q, r, v);
    if (su * sv > 0) return false;
    if (su == 0 && sv == 0) {
        // segment in the triangle plane: treat as a degenerate coplanar case
        const Vec3 seg[3] = {u, v, v};
        const Vec3 tri[3] = {p, q, r};
        return coplanar_overlap(tri, seg);
    }
    const int o1 = orient3d(u, v, p, q);
    const int o2 = orient3d(u, v, q, r);
    const int o3 = orient3d(u, v, r, p);
    return (o1 >= 0 && o2 >= 0 && o3 >= 0) || (o1 <= 0 && o2 <= 0 && o3 <= 0);
}

bool triangles_intersect(const Vec3* t1, const Vec3* t2) {
    const int a0 = orient3d(t2[0], t2[1], t2[2], t1[0]);
    const int a1 = orient3d(t2[0], t2[1], t2[2], t1[1]);
    const int a2 = orient3d(t2[0], t2[1], t2[2], t1[2]);
    if ((a0 > 0 && a1 > 0 && a2 > 0) || (a0 < 0 && a1 < 0 && a2 < 0)) return false;
    const int b0 = orient3d(t1[0], t1[1], t1[2], t2[0]);
    const int b1 = orient3d(t1[0], t1[1], t1[2], t2[1]);
    const int b2 = orient3d(t1[0], t1[1], t1[2], t2[2]);
    if ((b0 > 0 && b1 > 0 && b2 > 0) || (b0 < 0 && b1 < 0 && b2 < 0)) return false;
    if (a0 == 0 && a1 == 0 && a2 == 0) return coplanar_overlap(t1, t2);

    for (int e = 0; e < 3; ++e) {
        if (segment_hits_triangle(t1[e], t1[(e + 1) % 3], t2[0], t2[1], t2[2])) return true;
        if (segment_hits_triangle(t2[e], t2[(e + 1) % 3], t1[0], t1[1], t1[2])) return true;
    }
    return false;
}

bool faces_share_vertex(const Index3& a, const Index3& b) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (a[i] == b[j]) return true;
    return false;
}

bool test_face_pair(const CageMesh& m, std::size_t i, std::size_t j) {
    if (faces_share_vertex(m.faces[i], m.faces[j])) return false;
    const Vec3 t1[3] = {m.vertices[m.faces[i][0]], m.vertices[m.faces[i][1]],
                        m.vertices[m.faces[i][2]]};
    const Vec3 t2[3] = {m.vertices[m.faces[j][0]], m.vertices[m.faces[j][1]],
                        m.vertices[m.faces[j][2]]};
    return triangles_intersect(t1, t2);
}

} // namespace

int mesh_components(const CageMesh& mesh) {
    const std::size_t n = mesh.faces.size();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& [edge, faces] : edge_face_map(mesh)) {
        (void)edge;
        for (std::size_t k = 1; k < faces.size(); ++k) {
            const int a = find(faces[0]), b = find(faces[k]);
            if (a != b) parent[a] = b;
        }
    }
    int components = 0;
    for (std::size_t f = 0; f < n; ++f)
        if (find(static_cast<int>(f)) == static_cast<int>(f)) ++components;
    return components;
}

long self_intersections_brute_force(const CageMesh& mesh) {
    long count = 0;
    for (std::size_t i = 0; i < mesh.faces.size(); ++i)
        for (std::size_t j = i + 1; j < mesh.faces.size(); ++j)
            if (test_face_pair(mesh, i, j)) ++count;
    return count;
}

long self_intersections(const CageMesh& mesh) {
    const std::size_t n = mesh.faces.size();
    if (n < 2) return 0;

    // flat BVH over face bounds
    struct Node {
        Vec3 lo, hi;
        int left = -1, right = -1, begin = 0, end = 0;
    };
    std::vector<Vec3> f_lo(n), f_hi(n), centroid(n);
    for (std::size_t f = 0; f < n; ++f) {
        Aabb box;
        for (int k = 0; k < 3; ++k) box.expand(mesh.vertices[mesh.faces[f][k]]);
        f_lo[f] = box.min;
        f_hi[f] = box.max;
        centroid[f] = box.center();
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<Node> nodes;
    std::function<int(int, int)> build = [&](int begin, int end) {
        Node node;
        node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        node.hi = -node.lo;
        for (int i = begin; i < end; ++i) {
            node.lo = node.lo.cwiseMin(f_lo[order[i]]);
            node.hi = node.hi.cwiseMax(f_hi[order[i]]);
        }
        const int idx = static_cast<int>(nodes.size());
        nodes.push_back(node);
        if (end - begin <= 8) {
            nodes[idx].begin = begin;
            nodes[idx].end = end;
            return idx;
        }
        Vec3 ext = node.hi - node.lo;
        int axis = 0;
        if (ext[1] > ext[axis]) axis = 1;
        if (ext[2] > ext[axis]) axis = 2;
        const int mid = (begin + end) / 2;
        std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                         [&](int a, int b) { return centroid[a][axis] < centroid[b][axis]; });
        const int l = build(begin, mid);
        const int r = build(mid, end);
        nodes[idx].left = l;
        nodes[idx].right = r;
        return idx;
    };
    build(0, static_cast<int>(n));

    long count = 0;
    std::vector<int> stack;
    for (std::size_t i = 0; i < n; ++i) {
        stack.assign(1, 0);
        while (!stack.empty()) {
            const Node& node = nodes[stack.back()];
            stack.pop_back();
            if ((f_lo[i].array() > node.hi.array()).any() ||
                (f_hi[i].array() < node.lo.array()).any())
                continue;
            if (node.left < 0) {
                for (int s = node.begin; s < node.end; ++s) {
                    const std::size_t j = static_cast<std::size_t>(order[s]);
                    if (j <= i) continue; // count each unordered pair once
                    if ((f_lo[i].array() > f_hi[j].array()).any() ||
                        (f_hi[i].array() < f_lo[j].array()).any())
                        continue;
                    if (test_face_pair(mesh, i, j)) ++count;
                }
            } else {
                stack.push_back(node.left);
                stack.push_back(node.right);
            }
        }
    }
    return count;
}

namespace {

// -1 degenerate (retry with another direction), 0 outside, 1 inside
int ray_parity(const Vec3& origin, const Vec3& dir, const CageMesh& mesh, double diag) {
    const double t_eps = 1e-12 * diag;
    const double bary_margin = 1e-10;
    long crossings = 0;
    for (const Index3& f : mesh.faces) {
        const Vec3& v0 = mesh.vertices[f[0]];
        const Vec3 e1 = mesh.vertices[f[1]] - v0;
        const Vec3 e2 = mesh.vertices[f[2]] - v0;
        const Vec3 pvec = dir.cross(e2);
        const double det = e1.dot(pvec);
        const Vec3 tvec = origin - v0;
        if (std::abs(det) < 1e-16) {
            // parallel; ambiguous only if the ray lies in the face plane
            const Vec3 n = e1.cross(e2);
            if (std::abs(n.dot(tvec)) < 1e-12 * n.norm() * diag) return -1;
            continue;
        }
        const double inv = 1.0 / det;
        const double u = tvec.dot(pvec) * inv;
        if (u < -bary_margin || u > 1 + bary_margin) continue;
        const Vec3 qvec = tvec.cross(e1);
        const double v = dir.dot(qvec) * inv;
        if (v < -bary_margin || u + v > 1 + bary_margin) continue;
        const double t = e2.dot(qvec) * inv;
        if (t <= -t_eps) continue;
        if (std::abs(t) < t_eps) return -1; // origin on the surface
        if (u < bary_margin || v < bary_margin || u + v > 1 - bary_margin)
            return -1; // grazing an edge or vertex
        ++crossings;
    }
    return crossings % 2 == 1 ? 1 : 0;
}

} // namespace

double enclosure_fraction(const std::vector<Vec3>& points, const CageMesh& mesh) {
    require_closed(mesh, "enclosure_fraction");
    if (points.empty()) return 0;
    const double diag = mesh.bounds().diag();

    const Vec3 dirs[8] = {
        Vec3(0.5377397195452322, 0.2873612419856117, 0.7926593105986622).normalized(),
        Vec3(-0.3261970628019604, 0.8370975522464524, 0.4390722670645259).normalized(),
        Vec3(0.7130169944577432, -0.6230879737689245, 0.3215121679154297).normalized(),
        Vec3(0.1043891679115399, 0.4127341946583825, -0.9048519302938178).normalized(),
        Vec3(-0.8132719554937, -0.3278144519731, 0.4810092126107).normalized(),
        Vec3(0.2517241379310345, -0.9310344827586207, -0.2631578947368421).normalized(),
        Vec3(-0.1192052980132450, -0.2847682119205298, 0.9511278195488722).normalized(),
        Vec3(0.9391304347826087, 0.1304347826086957, 0.3173913043478261).normalized(),
    };

    std::size_t inside = 0;
    for (const Vec3& p : points) {
        int verdict = 0;
        for (const Vec3& dir : dirs) {
            verdict = ray_parity(p, dir, mesh, diag);
            if (verdict >= 0) break;
        }
        if (verdict == 1) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(points.size());
}

MvcStats negative_mvc_stats(const std::vector<Vec3>& samples, const CageMesh& cage,
                            int threads) {
    if (samples.empty()) throw Error("negative_mvc_stats: empty sample set");
    const WeightMatrix w = mvc_weights_batch(samples, cage, threads);
    std::size_t negatives = 0;
    double worst = 0;
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            const double v = w(i, j);
            if (v < -1e-12) ++negatives;
            worst = std::min(worst, v);
        }
    MvcStats stats;
    stats.sample_count = samples.size();
    stats.negative_entry_fraction =
        static_cast<double>(negatives) / static_cast<double>(w.rows() * w.cols());
    stats.worst_negative = std::min(worst, 0.0);
    return stats;
}

CageQuality evaluate_cage_quality(const CageMesh& mesh, const std::vector<Vec3>& points) {
    CageQuality q;
    q.components = mesh_components(mesh);
    q.self_intersections = self_intersections(mesh);
    q.closed = is_closed_mesh(mesh);
    q.enclosure_fraction = points.empty() ? 0.0 : enclosure_fraction(points, mesh);
    return q;
}

void write_report_text(const std::filesystem::path& path, const ReportFields& fields) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("report: cannot open '" + path.string() + "'");
    for (const auto& [key, value] : fields) out << key << "=" << value << "\n";
    if (!out) throw Error("report: write failed");
}

void write_report_json(const std::filesystem::path& path, const ReportFields& fields) {
    nlohmann::json doc;
    for (const auto& [key, value] : fields) {
        // numbers stay numbers in the JSON document
        try {
            std::size_t pos = 0;
            const double num = std::stod(value, &pos);
            if (pos == value.size()) {
                doc[key] = num;
                continue;
            }
        } catch (...) {
        }
        if (value == "true" || value == "false") {
            doc[key] = value == "true";
            continue;
        }
        doc[key] = value;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("report: cannot open '" + path.string() + "'");
    out << doc.dump(2) << "\n";
    if (!out) throw Error("report: write failed");
}

} // namespace splatcage
