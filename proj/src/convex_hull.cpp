#include "splatcage/convex_hull.hpp"

#include <map>
#include <numeric>

namespace splatcage {

namespace {

struct HullFace {
    int v[3];
    Vec3 normal;      // unit, outward
    double offset;    // n.x = offset on the plane
    bool alive = true;
    std::vector<int> conflicts; // candidate point ids visible from this face
};

double plane_dist(const HullFace& f, const Vec3& p) { return f.normal.dot(p) - f.offset; }

} // namespace

ConvexHull convex_hull(const std::vector<Vec3>& points) {
    const std::size_t n = points.size();
    if (n < 4) throw Error("convex_hull: need at least 4 points");
    const Aabb box = bounding_box(points);
    const double diag = box.diag();
    if (!(diag > 0)) throw Error("convex_hull: degenerate point set (all coincident)");
    const double eps = 1e-10 * diag;

    // Initial simplex from spread-maximizing picks.
    int e0 = 0, e1 = 0;
    {
        // farthest pair among the 6 axis extremes
        int extremes[6];
        for (int a = 0; a < 3; ++a) {
            int lo = 0, hi = 0;
            for (std::size_t i = 1; i < n; ++i) {
                if (points[i][a] < points[lo][a]) lo = static_cast<int>(i);
                if (points[i][a] > points[hi][a]) hi = static_cast<int>(i);
            }
            extremes[2 * a] = lo;
            extremes[2 * a + 1] = hi;
        }
        double best = -1;
        for (int i = 0; i < 6; ++i)
            for (int j = i + 1; j < 6; ++j) {
                const double d2 = (points[extremes[i]] - points[extremes[j]]).squaredNorm();
                if (d2 > best) {
                    best = d2;
                    e0 = extremes[i];
                    e1 = extremes[j];
                }
            }
        if (!(best > eps * eps)) throw Error("convex_hull: degenerate point set");
    }
    int e2 = -1;
    {
        const Vec3 dir = (points[e1] - points[e0]).normalized();
        double best = eps;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 rel = points[i] - points[e0];
            const double d = (rel - dir * dir.dot(rel)).norm();
            if (d > best) {
                best = d;
                e2 = static_cast<int>(i);
            }
        }
        if (e2 < 0) throw Error("convex_hull: all points collinear");
    }
    int e3 = -1;
    Vec3 base_n = (points[e1] - points[e0]).cross(points[e2] - points[e0]).normalized();
    {
        double best = eps;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = std::abs(base_n.dot(points[i] - points[e0]));
            if (d > best) {
                best = d;
                e3 = static_cast<int>(i);
            }
        }
        if (e3 < 0) throw Error("convex_hull: all points coplanar");
    }

    const Vec3 interior = 0.25 * (points[e0] + points[e1] + points[e2] + points[e3]);

    std::vector<HullFace> faces;
    auto make_face = [&](int a, int b, int c) {
        HullFace f;
        f.v[0] = a;
        f.v[1] = b;
        f.v[2] = c;
        Vec3 nrm = (points[b] - points[a]).cross(points[c] - points[a]);
        const double len = nrm.norm();
        if (len <= 0) throw Error("convex_hull: degenerate face");
        nrm /= len;
        double off = nrm.dot(points[a]);
        if (nrm.dot(interior) - off > 0) { // flip to face outward
            std::swap(f.v[1], f.v[2]);
            nrm = -nrm;
            off = nrm.dot(points[f.v[0]]);
        }
        f.normal = nrm;
        f.offset = off;
        return f;
    };
    faces.push_back(make_face(e0, e1, e2));
    faces.push_back(make_face(e0, e1, e3));
    faces.push_back(make_face(e0, e2, e3));
    faces.push_back(make_face(e1, e2, e3));

    // Conflict lists.
    auto assign_point = [&](int pid, const std::vector<int>& candidates) {
        double best = eps;
        int best_f = -1;
        for (int fi : candidates) {
            if (!faces[fi].alive) continue;
            const double d = plane_dist(faces[fi], points[pid]);
            if (d > best) {
                best = d;
                best_f = fi;
            }
        }
        if (best_f >= 0) faces[best_f].conflicts.push_back(pid);
    };
    {
        std::vector<int> all = {0, 1, 2, 3};
        for (std::size_t i = 0; i < n; ++i) {
            const int ii = static_cast<int>(i);
            if (ii == e0 || ii == e1 || ii == e2 || ii == e3) continue;
            assign_point(ii, all);
        }
    }

    // Refine until no face sees an outside point.
    std::size_t guard = 0;
    const std::size_t guard_limit = 16 * n + 64;
    while (true) {
        if (++guard > guard_limit) throw Error("convex_hull: did not converge");
        int src = -1;
        for (std::size_t fi = 0; fi < faces.size(); ++fi)
            if (faces[fi].alive && !faces[fi].conflicts.empty()) {
                src = static_cast<int>(fi);
                break;
            }
        if (src < 0) break;

        // eye = furthest conflict of src
        int eye = -1;
        double best = -1;
        for (int pid : faces[src].conflicts) {
            const double d = plane_dist(faces[src], points[pid]);
            if (d > best) {
                best = d;
                eye = pid;
            }
        }

        std::vector<int> visible;
        std::vector<int> orphan;
        for (std::size_t fi = 0; fi < faces.size(); ++fi) {
            if (!faces[fi].alive) continue;
            if (plane_dist(faces[fi], points[eye]) > eps) {
                visible.push_back(static_cast<int>(fi));
                for (int pid : faces[fi].conflicts)
                    if (pid != eye) orphan.push_back(pid);
                faces[fi].conflicts.clear();
            }
        }

        // Horizon: directed edges of visible faces whose reverse is not in a
        // visible face.
        std::map<std::pair<int, int>, int> edge_count;
        for (int fi : visible) {
            const HullFace& f = faces[fi];
            for (int k = 0; k < 3; ++k)
                edge_count[{f.v[k], f.v[(k + 1) % 3]}] = 1;
        }
        std::vector<std::pair<int, int>> horizon;
        for (const auto& [edge, one] : edge_count) {
            (void)one;
            if (!edge_count.count({edge.second, edge.first})) horizon.push_back(edge);
        }
        for (int fi : visible) faces[fi].alive = false;

        std::vector<int> fresh;
        for (const auto& [a, b] : horizon) {
            faces.push_back(make_face(a, b, eye));
            fresh.push_back(static_cast<int>(faces.size()) - 1);
        }
        for (int pid : orphan) assign_point(pid, fresh);
    }

    // Compact the result.
    ConvexHull hull;
    std::map<int, int> remap;
    for (const HullFace& f : faces) {
        if (!f.alive) continue;
        Index3 tri;
        for (int k = 0; k < 3; ++k) {
            auto [it, inserted] = remap.try_emplace(f.v[k], static_cast<int>(hull.vertices.size()));
            if (inserted) hull.vertices.push_back(points[f.v[k]]);
            tri[k] = it->second;
        }
        hull.faces.push_back(tri);
        hull.planes.emplace_back(f.normal[0], f.normal[1], f.normal[2], f.offset);
    }
    if (hull.faces.size() < 4) throw Error("convex_hull: degenerate result");
    return hull;
}

} // namespace splatcage
