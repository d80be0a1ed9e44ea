#include "splatcage/cage_builder.hpp"

#include "splatcage/parallel.hpp"

#include <algorithm>
#include <numeric>

namespace splatcage {

namespace {

struct Ellipsoid {
    Vec3 center;
    Mat3 quadric; // x on surface iff (x-c)^T quadric (x-c) = 1
    Vec3 aabb_min, aabb_max;
};

// Flat median-split BVH over ellipsoid bounds.
struct Bvh {
    struct Node {
        Vec3 lo, hi;
        int left = -1, right = -1; // internal when left >= 0
        int begin = 0, end = 0;    // leaf range into order
    };
    std::vector<Node> nodes;
    std::vector<int> order;

    void build(const std::vector<Ellipsoid>& prims) {
        order.resize(prims.size());
        std::iota(order.begin(), order.end(), 0);
        nodes.clear();
        if (!prims.empty()) build_range(prims, 0, static_cast<int>(prims.size()));
    }

    int build_range(const std::vector<Ellipsoid>& prims, int begin, int end) {
        Node node;
        node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        node.hi = -node.lo;
        for (int i = begin; i < end; ++i) {
            node.lo = node.lo.cwiseMin(prims[order[i]].aabb_min);
            node.hi = node.hi.cwiseMax(prims[order[i]].aabb_max);
        }
        const int idx = static_cast<int>(nodes.size());
        nodes.push_back(node);
        if (end - begin <= 4) {
            nodes[idx].begin = begin;
            nodes[idx].end = end;
            return idx;
        }
        const Vec3 extent = node.hi - node.lo;
        int axis = 0;
        if (extent[1] > extent[axis]) axis = 1;
        if (extent[2] > extent[axis]) axis = 2;
        const int mid = (begin + end) / 2;
        std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                         [&](int a, int b) {
                             return prims[a].center[axis] < prims[b].center[axis];
                         });
        const int l = build_range(prims, begin, mid);
        const int r = build_range(prims, mid, end);
        nodes[idx].left = l;
        nodes[idx].right = r;
        return idx;
    }
};

bool slab_hit(const Vec3& lo, const Vec3& hi, const Vec3& o, const Vec3& inv_d, double t_max,
              double& t_entry) {
    double t0 = 0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(inv_d[a])) {
            if (o[a] < lo[a] || o[a] > hi[a]) return false;
            continue;
        }
        double near = (lo[a] - o[a]) * inv_d[a];
        double far = (hi[a] - o[a]) * inv_d[a];
        if (near > far) std::swap(near, far);
        t0 = std::max(t0, near);
        t1 = std::min(t1, far);
        if (t0 > t1) return false;
    }
    t_entry = t0;
    return true;
}

double ray_ellipsoid(const Ellipsoid& e, const Vec3& o, const Vec3& d) {
    const Vec3 rel = o - e.center;
    const Vec3 qd = e.quadric * d;
    const double a = d.dot(qd);
    const double b = rel.dot(qd);
    const double c = rel.dot(e.quadric * rel) - 1.0;
    const double disc = b * b - a * c;
    if (disc < 0 || !(a > 0)) return -1;
    const double sq = std::sqrt(disc);
    double t = (-b - sq) / a;
    if (t < 1e-12) t = (-b + sq) / a; // inside the ellipsoid
    return t >= 1e-12 ? t : -1;
}

struct RenderScene {
    std::vector<Ellipsoid> prims;
    Bvh bvh;
};

RenderScene prepare(const GaussianScene& scene, const CageBuildConfig& cfg) {
    RenderScene rs;
    const double k2 = cfg.iso_sigmas * cfg.iso_sigmas;
    for (const Gaussian& g : scene.gaussians) {
        if (g.opacity() < cfg.opacity_cutoff) continue;
        Ellipsoid e;
        e.center = g.mean;
        const Mat3 sigma = covariance_of(g);
        e.quadric = sigma.inverse() / k2;
        const Vec3 half = cfg.iso_sigmas * sigma.diagonal().array().sqrt();
        e.aabb_min = g.mean - half;
        e.aabb_max = g.mean + half;
        rs.prims.push_back(e);
    }
    rs.bvh.build(rs.prims);
    return rs;
}

double trace(const RenderScene& rs, const Vec3& o, const Vec3& d) {
    if (rs.prims.empty()) return -1;
    const Vec3 inv_d = d.cwiseInverse();
    double best = std::numeric_limits<double>::infinity();
    int stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const auto& node = rs.bvh.nodes[stack[--top]];
        double t_entry;
        if (!slab_hit(node.lo, node.hi, o, inv_d, best, t_entry)) continue;
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const double t = ray_ellipsoid(rs.prims[rs.bvh.order[i]], o, d);
                if (t > 0 && t < best) best = t;
            }
        } else {
            stack[top++] = node.left;
            stack[top++] = node.right;
        }
    }
    return std::isfinite(best) ? best : -1;
}

} // namespace

DepthMap render_depth(const GaussianScene& scene, const CameraPose& pose,
                      const CageBuildConfig& cfg) {
    pose.validate();
    const RenderScene rs = prepare(scene, cfg);
    DepthMap map;
    map.width = pose.width;
    map.height = pose.height;
    map.pose = pose;
    map.depth.assign(static_cast<std::size_t>(pose.width) * pose.height, 0.0);
    const Mat3 basis = pose.basis();
    for (int y = 0; y < pose.height; ++y)
        for (int x = 0; x < pose.width; ++x) {
            const auto [dir, cosang] = pose.pixel_ray(x, y, basis);
            const double t = trace(rs, pose.position, dir);
            if (t > 0) map.at(x, y) = t * cosang;
        }
    return map;
}

std::vector<DepthMap> render_depths(const GaussianScene& scene,
                                    const std::vector<CameraPose>& cameras,
                                    const CageBuildConfig& cfg) {
    const RenderScene rs = prepare(scene, cfg);
    std::vector<DepthMap> maps(cameras.size());
    parallel_for(cameras.size(), cfg.threads, [&](std::size_t c) {
        const CameraPose& pose = cameras[c];
        DepthMap& map = maps[c];
        map.width = pose.width;
        map.height = pose.height;
        map.pose = pose;
        map.depth.assign(static_cast<std::size_t>(pose.width) * pose.height, 0.0);
        const Mat3 basis = pose.basis();
        for (int y = 0; y < pose.height; ++y)
            for (int x = 0; x < pose.width; ++x) {
                const auto [dir, cosang] = pose.pixel_ray(x, y, basis);
                const double t = trace(rs, pose.position, dir);
                if (t > 0) map.at(x, y) = t * cosang;
            }
    });
    return maps;
}

} // namespace splatcage
