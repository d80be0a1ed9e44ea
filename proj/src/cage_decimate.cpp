#include "splatcage/cage_builder.hpp"

#include "splatcage/mvc.hpp"

#include <Eigen/Dense>
#include <queue>
#include <set>
#include <unordered_set>

namespace splatcage {

namespace {

struct QuadricProblem {
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    double c = 0;
    // constraints: normal.dot(v) >= offset
    std::vector<Vec3> normals;
    std::vector<double> offsets;

    double cost(const Vec3& v) const { return v.dot(a * v) + 2.0 * b.dot(v) + c; }
    double slack(const Vec3& v) const {
        double worst = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < normals.size(); ++i)
            worst = std::min(worst, normals[i].dot(v) - offsets[i]);
        return worst;
    }
};

struct QpSolution {
    Vec3 v;
    double cost = 0;
    double slack = 0;
    bool ok = false;
};

// Equality-constrained stationary point with the active set S.
bool kkt_solve(const QuadricProblem& qp, const std::vector<int>& active, Vec3& out) {
    const int m = static_cast<int>(active.size());
    MatX k = MatX::Zero(3 + m, 3 + m);
    VecX rhs(3 + m);
    k.topLeftCorner<3, 3>() = 2.0 * qp.a;
    rhs.head<3>() = -2.0 * qp.b;
    for (int i = 0; i < m; ++i) {
        k.block<3, 1>(0, 3 + i) = qp.normals[active[i]];
        k.block<1, 3>(3 + i, 0) = qp.normals[active[i]].transpose();
        rhs[3 + i] = qp.offsets[active[i]];
    }
    const Eigen::FullPivLU<MatX> lu(k);
    if (!lu.isInvertible()) return false;
    const VecX sol = lu.solve(rhs);
    if (!sol.allFinite()) return false;
    out = sol.head<3>();
    return true;
}

// Constrained minimization by enumerating candidate active sets drawn from
// the constraints violated at the unconstrained optimum, plus the edge
// endpoints and midpoint as fallbacks. Feasibility is what matters here;
// near-optimality is enough.
QpSolution solve_quadric_qp(const QuadricProblem& qp, const Vec3& va, const Vec3& vb,
                            double slack_tol) {
    std::vector<Vec3> candidates;
    candidates.reserve(24);

    Eigen::SelfAdjointEigenSolver<Mat3> es(qp.a);
    const bool regular = es.info() == Eigen::Success &&
                         es.eigenvalues()[0] > 1e-9 * std::max(es.eigenvalues()[2], 1e-300);
    std::vector<int> pool;
    if (regular) {
        const Vec3 v0 = qp.a.ldlt().solve(-qp.b);
        if (v0.allFinite()) {
            candidates.push_back(v0);
            for (std::size_t i = 0; i < qp.normals.size(); ++i)
                if (qp.normals[i].dot(v0) - qp.offsets[i] < -slack_tol)
                    pool.push_back(static_cast<int>(i));
        }
    }
    if (!regular || pool.size() > 12) {
        pool.clear();
        for (std::size_t i = 0; i < qp.normals.size() && pool.size() < 12; ++i)
            pool.push_back(static_cast<int>(i));
    }

    Vec3 v;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (kkt_solve(qp, {pool[i]}, v)) candidates.push_back(v);
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            if (kkt_solve(qp, {pool[i], pool[j]}, v)) candidates.push_back(v);
            for (std::size_t l = j + 1; l < pool.size(); ++l)
                if (kkt_solve(qp, {pool[i], pool[j], pool[l]}, v)) candidates.push_back(v);
        }
    }
    candidates.push_back(va);
    candidates.push_back(vb);
    candidates.push_back(0.5 * (va + vb));

    QpSolution best;
    for (const Vec3& cand : candidates) {
        const double s = qp.slack(cand);
        if (s < -slack_tol) continue;
        const double cost = qp.cost(cand);
        if (!best.ok || cost < best.cost) {
            best.ok = true;
            best.v = cand;
            best.cost = cost;
            best.slack = s;
        }
    }
    return best;
}

struct HeapEntry {
    double cost;
    int a, b;
    int ver_a, ver_b;
    Vec3 position;
    double slack;
};
struct HeapCompare {
    bool operator()(const HeapEntry& x, const HeapEntry& y) const {
        if (x.cost != y.cost) return x.cost > y.cost;
        if (x.a != y.a) return x.a > y.a;
        return x.b > y.b;
    }
};

class Decimator {
public:
    Decimator(const CageMesh& mesh, const DecimateConfig& cfg, DecimateStats& stats)
        : cfg_(cfg), stats_(stats) {
        pos_ = mesh.vertices;
        faces_ = mesh.faces;
        face_alive_.assign(faces_.size(), 1);
        vert_alive_.assign(pos_.size(), 1);
        version_.assign(pos_.size(), 0);
        vfaces_.resize(pos_.size());
        for (std::size_t f = 0; f < faces_.size(); ++f)
            for (int k = 0; k < 3; ++k) vfaces_[faces_[f][k]].push_back(static_cast<int>(f));
        alive_ = static_cast<int>(pos_.size());
        slack_tol_ = 1e-9 * mesh.bounds().diag();
        seed_heap();
    }

    int alive() const { return alive_; }

    // Collapses up to n edges; returns the number done.
    int collapse_batch(int n, int floor_vertices) {
        int done = 0;
        while (done < n && alive_ > floor_vertices && !heap_.empty()) {
            const HeapEntry e = heap_.top();
            heap_.pop();
            if (!vert_alive_[e.a] || !vert_alive_[e.b]) continue;
            if (version_[e.a] != e.ver_a || version_[e.b] != e.ver_b) continue;
            if (!collapse_legal(e.a, e.b, e.position)) continue;
            do_collapse(e);
            ++done;
        }
        return done;
    }

    void refine_mvc(const std::vector<Vec3>& samples) {
        auto [cage, map] = compact();
        const Eigen::Index n = static_cast<Eigen::Index>(cage.vertices.size());
        MatX3 rest(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) rest.row(i) = cage.vertices[i].transpose();

        MvcLossConfig lcfg;
        lcfg.mu = cfg_.mvc_penalty_mu;
        lcfg.rho = cfg_.mvc_anchor_rho;

        const double start_loss = mvc_loss(samples, cage, rest, lcfg, cfg_.threads).loss;
        double best_loss = start_loss;
        std::vector<Vec3> best = cage.vertices;

        // Adam over all vertex coordinates, state fresh each cycle.
        MatX3 m = MatX3::Zero(n, 3), v = MatX3::Zero(n, 3);
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        for (int step = 1; step <= cfg_.gd_steps_per_cycle; ++step) {
            const MvcLossGradient g = mvc_loss_gradient(samples, cage, rest, lcfg, cfg_.threads);
            m = b1 * m + (1 - b1) * g.gradient;
            v = b2 * v.array().matrix() + (1 - b2) * g.gradient.array().square().matrix();
            const double c1 = 1 - std::pow(b1, step), c2 = 1 - std::pow(b2, step);
            for (Eigen::Index i = 0; i < n; ++i)
                for (int axis = 0; axis < 3; ++axis) {
                    const double mh = m(i, axis) / c1;
                    const double vh = v(i, axis) / c2;
                    cage.vertices[i][axis] -= cfg_.learning_rate * mh / (std::sqrt(vh) + eps);
                }
            const double loss = mvc_loss(samples, cage, rest, lcfg, cfg_.threads).loss;
            if (loss < best_loss) {
                best_loss = loss;
                best = cage.vertices;
            }
        }
        // never leave the cycle worse than it started
        if (best_loss > start_loss) {
            best_loss = start_loss;
            for (Eigen::Index i = 0; i < n; ++i) best[i] = rest.row(i).transpose();
        }
        stats_.stage2_monotone = stats_.stage2_monotone && best_loss <= start_loss + 1e-12;
        stats_.final_loss = best_loss;
        ++stats_.stage2_cycles;

        for (std::size_t i = 0; i < map.size(); ++i) pos_[map[i]] = best[i];
        for (std::size_t i = 0; i < pos_.size(); ++i) ++version_[i];
        heap_ = {};
        seed_heap();
    }

    std::pair<CageMesh, std::vector<int>> compact() const {
        CageMesh out;
        std::vector<int> map; // compact index -> original vertex
        std::vector<int> inverse(pos_.size(), -1);
        for (std::size_t i = 0; i < pos_.size(); ++i)
            if (vert_alive_[i]) {
                inverse[i] = static_cast<int>(out.vertices.size());
                out.vertices.push_back(pos_[i]);
                map.push_back(static_cast<int>(i));
            }
        for (std::size_t f = 0; f < faces_.size(); ++f)
            if (face_alive_[f])
                out.faces.push_back({inverse[faces_[f][0]], inverse[faces_[f][1]],
                                     inverse[faces_[f][2]]});
        return {std::move(out), std::move(map)};
    }

    bool heap_empty() const { return heap_.empty(); }

private:
    void seed_heap() {
        std::set<std::pair<int, int>> edges;
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            if (!face_alive_[f]) continue;
            for (int k = 0; k < 3; ++k) {
                const int a = faces_[f][k], b = faces_[f][(k + 1) % 3];
                edges.insert({std::min(a, b), std::max(a, b)});
            }
        }
        for (const auto& [a, b] : edges) push_edge(a, b);
    }

    Vec3 face_normal_area(int f, Vec3& centroid) const {
        const Index3& t = faces_[f];
        centroid = (pos_[t[0]] + pos_[t[1]] + pos_[t[2]]) / 3.0;
        return 0.5 * (pos_[t[1]] - pos_[t[0]]).cross(pos_[t[2]] - pos_[t[0]]);
    }

    void push_edge(int a, int b) {
        if (!vert_alive_[a] || !vert_alive_[b]) return;
        if (a > b) std::swap(a, b);

        QuadricProblem qp;
        bool any_face = false;
        for (const int who : {a, b})
            for (const int f : vfaces_[who]) {
                if (!face_alive_[f]) continue;
                if (who == b && (faces_[f][0] == a || faces_[f][1] == a || faces_[f][2] == a))
                    continue; // shared face already added from a's loop
                Vec3 centroid;
                const Vec3 area_n = face_normal_area(f, centroid);
                const double area2 = area_n.norm();
                if (area2 <= 0) continue;
                const Vec3 n = area_n / area2;
                const double d = -n.dot(centroid);
                qp.a += area2 * (n * n.transpose());
                qp.b += area2 * d * n;
                qp.c += area2 * d * d;
                qp.normals.push_back(n);
                qp.offsets.push_back(n.dot(centroid));
                any_face = true;
            }
        if (!any_face) return;

        const QpSolution sol = solve_quadric_qp(qp, pos_[a], pos_[b], slack_tol_);
        if (!sol.ok) {
            // the neighborhood constraints admit no placement now; the edge
            // re-enters automatically when a nearby collapse reshapes them
            ++stats_.qp_skipped;
            return;
        }
        heap_.push({sol.cost, a, b, version_[a], version_[b], sol.v, sol.slack});
    }

    std::vector<int> alive_faces_of(int v) const {
        std::vector<int> out;
        for (const int f : vfaces_[v])
            if (face_alive_[f]) out.push_back(f);
        return out;
    }

    bool collapse_legal(int a, int b, const Vec3& v_new) const {
        std::vector<int> shared;
        for (const int f : vfaces_[a]) {
            if (!face_alive_[f]) continue;
            const Index3& t = faces_[f];
            const bool has_b = t[0] == b || t[1] == b || t[2] == b;
            if (has_b) shared.push_back(f);
        }
        if (shared.empty() || shared.size() > 2) return false;

        // link condition: the only common neighbors are the shared faces'
        // opposite vertices
        std::unordered_set<int> na, shared_third;
        for (const int f : alive_faces_of(a))
            for (int k = 0; k < 3; ++k)
                if (faces_[f][k] != a) na.insert(faces_[f][k]);
        for (const int f : shared)
            for (int k = 0; k < 3; ++k)
                if (faces_[f][k] != a && faces_[f][k] != b) shared_third.insert(faces_[f][k]);
        std::size_t common = 0;
        for (const int f : alive_faces_of(b))
            for (int k = 0; k < 3; ++k) {
                const int w = faces_[f][k];
                if (w != a && w != b && na.count(w)) {
                    if (!shared_third.count(w)) return false;
                    ++common;
                }
            }
        (void)common;

        // no inverted or collapsed triangles after the merge
        for (const int who : {a, b})
            for (const int f : alive_faces_of(who)) {
                const Index3& t = faces_[f];
                if ((t[0] == a || t[1] == a || t[2] == a) &&
                    (t[0] == b || t[1] == b || t[2] == b))
                    continue; // will be removed
                Vec3 p[3], q[3];
                for (int k = 0; k < 3; ++k) {
                    p[k] = pos_[t[k]];
                    q[k] = (t[k] == a || t[k] == b) ? v_new : pos_[t[k]];
                }
                const Vec3 n_old = (p[1] - p[0]).cross(p[2] - p[0]);
                const Vec3 n_new = (q[1] - q[0]).cross(q[2] - q[0]);
                if (n_new.norm() <= 1e-14 || n_old.dot(n_new) <= 0) return false;
            }
        return true;
    }

    void do_collapse(const HeapEntry& e) {
        const int a = e.a, b = e.b;
        pos_[a] = e.position;
        for (const int f : vfaces_[b]) {
            if (!face_alive_[f]) continue;
            Index3& t = faces_[f];
            if (t[0] == a || t[1] == a || t[2] == a) {
                face_alive_[f] = 0;
                continue;
            }
            for (int k = 0; k < 3; ++k)
                if (t[k] == b) t[k] = a;
            vfaces_[a].push_back(f);
        }
        vert_alive_[b] = 0;
        --alive_;

        // prune dead faces from the survivor's list
        std::vector<int> fresh;
        for (const int f : vfaces_[a])
            if (face_alive_[f]) fresh.push_back(f);
        std::sort(fresh.begin(), fresh.end());
        fresh.erase(std::unique(fresh.begin(), fresh.end()), fresh.end());
        vfaces_[a] = std::move(fresh);

        ++stats_.collapses;
        stats_.min_constraint_slack = std::min(stats_.min_constraint_slack, e.slack);

        // invalidate and refresh the neighborhood
        std::set<int> ring;
        ring.insert(a);
        for (const int f : vfaces_[a])
            for (int k = 0; k < 3; ++k) ring.insert(faces_[f][k]);
        for (const int v : ring) ++version_[v];
        std::set<std::pair<int, int>> edges;
        for (const int v : ring)
            for (const int f : vfaces_[v]) {
                if (!face_alive_[f]) continue;
                for (int k = 0; k < 3; ++k) {
                    const int x = faces_[f][k], y = faces_[f][(k + 1) % 3];
                    edges.insert({std::min(x, y), std::max(x, y)});
                }
            }
        for (const auto& [x, y] : edges) push_edge(x, y);
    }

    DecimateConfig cfg_;
    DecimateStats& stats_;
    std::vector<Vec3> pos_;
    std::vector<Index3> faces_;
    std::vector<char> face_alive_, vert_alive_;
    std::vector<int> version_;
    std::vector<std::vector<int>> vfaces_;
    std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapCompare> heap_;
    int alive_ = 0;
    double slack_tol_ = 0;
};

} // namespace

CageMesh decimate_two_stage(const CageMesh& mesh, const std::vector<Vec3>& samples,
                            const DecimateConfig& cfg, DecimateStats* stats_out) {
    validate_mesh(mesh);
    DecimateStats stats;
    Decimator dec(mesh, cfg, stats);

    const bool stage2 = cfg.two_stage && cfg.gd_steps_per_cycle > 0 && !samples.empty();

    // plain constrained collapse down to the alternation threshold
    while (dec.alive() > std::max(cfg.target_vertex_count, cfg.alternate_start_vertices)) {
        if (dec.collapse_batch(cfg.collapses_per_cycle,
                               std::max(cfg.target_vertex_count, cfg.alternate_start_vertices)) ==
            0)
            break;
    }
    // alternate collapse batches with MVC refinement
    while (dec.alive() > cfg.target_vertex_count) {
        const int done = dec.collapse_batch(cfg.collapses_per_cycle, cfg.target_vertex_count);
        if (stage2) dec.refine_mvc(samples);
        if (done == 0) {
            stats.reached_target = false;
            break;
        }
    }
    if (stage2 && stats.reached_target) dec.refine_mvc(samples); // terminal refinement
    if (stats.collapses == 0) stats.min_constraint_slack = 0;

    auto [out, map] = dec.compact();
    (void)map;
    if (stats_out) *stats_out = stats;
    return out;
}

std::vector<Vec3> surface_samples(const GaussianScene& scene, double opacity_cutoff, int count,
                                  std::uint64_t seed) {
    std::vector<Vec3> pool;
    for (const Gaussian& g : scene.gaussians)
        if (g.opacity() >= opacity_cutoff) pool.push_back(g.mean);
    if (pool.empty()) throw Error("surface_samples: no gaussians above the opacity cutoff");
    if (static_cast<int>(pool.size()) <= count) return pool;

    // farthest point subsampling, deterministic in the seed
    std::vector<Vec3> out;
    out.reserve(count);
    std::size_t current = static_cast<std::size_t>(seed % pool.size());
    std::vector<double> dist(pool.size(), std::numeric_limits<double>::infinity());
    out.push_back(pool[current]);
    for (int i = 1; i < count; ++i) {
        double far_d = -1;
        std::size_t far_i = 0;
        for (std::size_t p = 0; p < pool.size(); ++p) {
            dist[p] = std::min(dist[p], (pool[p] - out.back()).squaredNorm());
            if (dist[p] > far_d) {
                far_d = dist[p];
                far_i = p;
            }
        }
        out.push_back(pool[far_i]);
    }
    return out;
}

} // namespace splatcage
