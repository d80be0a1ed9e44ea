#include "splatcage/cage_builder.hpp"

#include "splatcage/mesh_io.hpp"
#include "splatcage/parallel.hpp"

#include <chrono>
#include <numeric>

namespace splatcage {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Minimal static kd-tree for k-nearest-mean queries.
class KdTree {
public:
    explicit KdTree(const std::vector<Vec3>& points) : pts_(points) {
        order_.resize(pts_.size());
        std::iota(order_.begin(), order_.end(), 0);
        if (!pts_.empty()) root_ = build(0, static_cast<int>(pts_.size()));
    }

    using Heap = std::vector<std::pair<double, int>>;

    // indices of the k nearest points to q (by L2), any tie order; the heap
    // is caller scratch so queries can run concurrently
    void knn(const Vec3& q, int k, std::vector<int>& out, Heap& heap) const {
        out.clear();
        if (pts_.empty()) return;
        heap.clear();
        search(root_, q, k, heap);
        out.reserve(heap.size());
        for (const auto& [d2, idx] : heap) out.push_back(idx);
    }

private:
    struct Node {
        int axis = 0;
        int point = -1;
        int left = -1, right = -1;
    };

    int build(int begin, int end) {
        if (begin >= end) return -1;
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
        for (int i = begin; i < end; ++i) {
            lo = lo.cwiseMin(pts_[order_[i]]);
            hi = hi.cwiseMax(pts_[order_[i]]);
        }
        int axis = 0;
        const Vec3 ext = hi - lo;
        if (ext[1] > ext[axis]) axis = 1;
        if (ext[2] > ext[axis]) axis = 2;
        const int mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
        const int idx = static_cast<int>(nodes_.size());
        nodes_.push_back({axis, order_[mid], -1, -1});
        const int l = build(begin, mid);
        const int r = build(mid + 1, end);
        nodes_[idx].left = l;
        nodes_[idx].right = r;
        return idx;
    }

    void consider(const Vec3& q, int point, int k, Heap& heap) const {
        const double d2 = (pts_[point] - q).squaredNorm();
        if (static_cast<int>(heap.size()) < k) {
            heap.emplace_back(d2, point);
            std::push_heap(heap.begin(), heap.end());
        } else if (d2 < heap.front().first) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = {d2, point};
            std::push_heap(heap.begin(), heap.end());
        }
    }

    void search(int node, const Vec3& q, int k, Heap& heap) const {
        if (node < 0) return;
        const Node& n = nodes_[node];
        consider(q, n.point, k, heap);
        const double delta = q[n.axis] - pts_[n.point][n.axis];
        const int near = delta < 0 ? n.left : n.right;
        const int far = delta < 0 ? n.right : n.left;
        search(near, q, k, heap);
        if (static_cast<int>(heap.size()) < k || delta * delta < heap.front().first)
            search(far, q, k, heap);
    }

    const std::vector<Vec3>& pts_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

} // namespace

CageMesh build_cage(const GaussianScene& scene, const CageBuildConfig& cfg,
                    CageBuildReport* report, const std::filesystem::path& debug_dir) {
    cfg.validate();
    if (scene.empty()) throw Error("build_cage: empty scene");
    const bool dump = !debug_dir.empty();
    if (dump) std::filesystem::create_directories(debug_dir);

    CageBuildReport rep;
    double t = now_ms();

    const std::vector<CameraPose> cameras = synthesize_cameras(scene, cfg);
    rep.cameras = cameras.size();
    const std::vector<DepthMap> depths = render_depths(scene, cameras, cfg);
    rep.render_ms = now_ms() - t;
    t = now_ms();
    if (dump)
        for (std::size_t i = 0; i < depths.size(); ++i)
            save_pfm(debug_dir / ("depth_" + std::to_string(i) + ".pfm"), depths[i]);

    const GridGeometry geom = volume_geometry(scene, cfg);
    TsdfVolume tsdf;
    tsdf.geom = geom;
    tsdf.tsdf.assign(geom.cell_count(), 1.0f);
    tsdf.weight.assign(geom.cell_count(), 0.0f);
    tsdf_integrate(tsdf, depths, cfg.tsdf_truncation_voxels, cfg.threads);
    const VoxelGrid surface = extract_surface_voxels(tsdf);
    rep.tsdf_ms = now_ms() - t;
    t = now_ms();
    if (dump) {
        save_tsdf(debug_dir / "fused.tsdf", tsdf);
        save_voxel_grid(debug_dir / "surface.vox", surface);
    }

    const std::vector<DepthMap> clean = tsdf_render_depths(tsdf, cameras, cfg.threads);
    const VoxelGrid interior = depth_carve(clean, geom, cfg.carve_margin_voxels, cfg.threads);
    const VoxelGrid solid = merge_voxels(surface, interior);
    rep.carve_ms = now_ms() - t;
    t = now_ms();
    if (dump) {
        save_voxel_grid(debug_dir / "interior.vox", interior);
        save_voxel_grid(debug_dir / "solid.vox", solid);
    }

    const VoxelGrid closed = morphological_close(solid, cfg.closing_radius_voxels);
    rep.close_ms = now_ms() - t;
    t = now_ms();
    if (dump) save_voxel_grid(debug_dir / "closed.vox", closed);

    CageMesh raw = marching_cubes(closed);
    rep.raw_vertices = raw.vertex_count();
    rep.raw_faces = raw.face_count();
    const double sigma_s = cfg.bilateral_sigma_s * raw.mean_edge_length();
    const CageMesh smooth =
        bilateral_filter(raw, cfg.bilateral_iterations, sigma_s, cfg.bilateral_sigma_n);
    rep.mesh_ms = now_ms() - t;
    t = now_ms();
    if (dump) save_mesh(debug_dir / "raw_mesh.obj", smooth);

    const std::vector<Vec3> samples =
        surface_samples(scene, cfg.opacity_cutoff, cfg.sample_count, cfg.seed);
    DecimateConfig dcfg;
    dcfg.target_vertex_count = cfg.target_vertex_count;
    dcfg.collapses_per_cycle = cfg.collapses_per_cycle;
    dcfg.gd_steps_per_cycle = cfg.gd_steps_per_cycle;
    dcfg.alternate_start_vertices = cfg.alternate_start_vertices;
    dcfg.mvc_penalty_mu = cfg.mvc_penalty_mu;
    dcfg.mvc_anchor_rho = cfg.mvc_anchor_rho;
    dcfg.learning_rate = cfg.learning_rate;
    dcfg.two_stage = cfg.two_stage;
    dcfg.threads = cfg.threads;
    const CageMesh cage = decimate_two_stage(smooth, samples, dcfg, &rep.decimate);
    rep.decimate_ms = now_ms() - t;

    if (report) *report = rep;
    return cage;
}

VoxelGrid baseline_voxelize(const GaussianScene& scene, const CageBuildConfig& cfg) {
    cfg.validate();
    if (scene.empty()) throw Error("baseline_voxelize: empty scene");
    const GridGeometry geom = volume_geometry(scene, cfg);

    std::vector<Vec3> means;
    means.reserve(scene.size());
    std::vector<Mat3> inv_cov(scene.size());
    std::vector<double> alpha(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        means.push_back(scene.gaussians[i].mean);
        inv_cov[i] = covariance_of(scene.gaussians[i]).inverse();
        alpha[i] = scene.gaussians[i].opacity();
    }
    const KdTree tree(means);
    const int k = std::min<int>(cfg.baseline_knn, static_cast<int>(scene.size()));

    VoxelGrid out = VoxelGrid::empty_like(geom);
    const Index3 d = geom.dims;
    parallel_for(static_cast<std::size_t>(d[2]), cfg.threads, [&](std::size_t zi) {
        const int z = static_cast<int>(zi);
        std::vector<int> nn;
        KdTree::Heap heap;
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                const Vec3 p = geom.center(x, y, z);
                tree.knn(p, k, nn, heap);
                double density = 0;
                for (const int g : nn) {
                    const Vec3 r = p - means[g];
                    density += alpha[g] * std::exp(-0.5 * r.dot(inv_cov[g] * r));
                }
                if (density > cfg.baseline_threshold) out.set(geom.index(x, y, z), true);
            }
    });
    return out;
}

} // namespace splatcage
