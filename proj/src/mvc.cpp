#include "splatcage/mvc.hpp"

#include "splatcage/parallel.hpp"

#include <cmath>
#include <numbers>

namespace splatcage {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEpsOnFace = 1e-9; // pi - h below this: x lies on the face
constexpr double kEpsSin = 1e-10;   // |s| below this: coplanar with the face but outside

struct TriQuantities {
    int idx[3];
    double l[3], theta[3], h = 0, c[3], s[3], sgn = 1;
    double num[3], den[3], w[3];
    // 0 = contributes, 1 = skipped (coplanar-outside), 2 = on-face
    int status = 0;
};

// Spherical per-triangle weights following the robust closed-mesh
// formulation: edge lengths on the unit sphere around x, half-angle arcs,
// and the signed normal distances s_k. Degenerate sphere triangles are
// either resolved as on-face (h -> pi) or skipped (some s -> 0).
TriQuantities eval_triangle(const Index3& face, const std::vector<double>& d,
                            const std::vector<Vec3>& u) {
    TriQuantities t;
    for (int k = 0; k < 3; ++k) t.idx[k] = face[k];
    for (int k = 0; k < 3; ++k) {
        const int kp = (k + 1) % 3, km = (k + 2) % 3;
        t.l[k] = (u[t.idx[kp]] - u[t.idx[km]]).norm();
        t.theta[k] = 2.0 * std::asin(std::clamp(0.5 * t.l[k], 0.0, 1.0));
    }
    t.h = 0.5 * (t.theta[0] + t.theta[1] + t.theta[2]);
    if (kPi - t.h < kEpsOnFace) {
        t.status = 2;
        return t;
    }
    const double det = u[t.idx[0]].dot(u[t.idx[1]].cross(u[t.idx[2]]));
    t.sgn = det >= 0 ? 1.0 : -1.0;
    for (int k = 0; k < 3; ++k) {
        const int kp = (k + 1) % 3, km = (k + 2) % 3;
        const double denom = std::sin(t.theta[kp]) * std::sin(t.theta[km]);
        double ck = 2.0 * std::sin(t.h) * std::sin(t.h - t.theta[k]) / denom - 1.0;
        t.c[k] = std::clamp(ck, -1.0, 1.0);
        t.s[k] = t.sgn * std::sqrt(std::max(1.0 - t.c[k] * t.c[k], 0.0));
    }
    if (std::abs(t.s[0]) <= kEpsSin || std::abs(t.s[1]) <= kEpsSin ||
        std::abs(t.s[2]) <= kEpsSin) {
        t.status = 1;
        return t;
    }
    for (int k = 0; k < 3; ++k) {
        const int kp = (k + 1) % 3, km = (k + 2) % 3;
        t.num[k] = t.theta[k] - t.c[kp] * t.theta[km] - t.c[km] * t.theta[kp];
        t.den[k] = d[t.idx[k]] * std::sin(t.theta[kp]) * t.s[km];
        t.w[k] = t.num[k] / t.den[k];
    }
    return t;
}

} // namespace

namespace detail {

MvcPointClass mvc_weights_into(const Vec3& x, const std::vector<Vec3>& vertices,
                               const std::vector<Index3>& faces, double bbox_diag,
                               MvcScratch& scratch, double* out) {
    const std::size_t n = vertices.size();
    const double eps_vertex = 1e-10 * bbox_diag;
    std::fill(out, out + n, 0.0);

    scratch.dist.resize(n);
    scratch.unit.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const Vec3 e = vertices[j] - x;
        const double dj = e.norm();
        if (dj < eps_vertex) {
            out[j] = 1.0;
            return MvcPointClass::OnVertex;
        }
        scratch.dist[j] = dj;
        scratch.unit[j] = e / dj;
    }

    double total = 0;
    for (const Index3& face : faces) {
        const TriQuantities t = eval_triangle(face, scratch.dist, scratch.unit);
        if (t.status == 1) continue;
        if (t.status == 2) {
            // x lies on this face: its 2D barycentric coordinates.
            std::fill(out, out + n, 0.0);
            double bary[3], sum = 0;
            for (int k = 0; k < 3; ++k) {
                const int kp = (k + 1) % 3, km = (k + 2) % 3;
                bary[k] = std::sin(t.theta[k]) * scratch.dist[t.idx[km]] * scratch.dist[t.idx[kp]];
                sum += bary[k];
            }
            for (int k = 0; k < 3; ++k) out[t.idx[k]] += bary[k] / sum;
            return MvcPointClass::OnFace;
        }
        for (int k = 0; k < 3; ++k) {
            out[t.idx[k]] += t.w[k];
            total += t.w[k];
        }
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
    return MvcPointClass::Generic;
}

} // namespace detail

VecX mvc_weights(const Vec3& x, const CageMesh& cage) {
    if (!x.allFinite()) throw Error("mvc_weights: non-finite query point");
    require_closed(cage, "mvc_weights");
    VecX out(cage.vertex_count());
    detail::MvcScratch scratch;
    detail::mvc_weights_into(x, cage.vertices, cage.faces, cage.bounds().diag(), scratch,
                             out.data());
    return out;
}

WeightMatrix mvc_weights_batch(const std::vector<Vec3>& points, const CageMesh& cage,
                               int threads) {
    require_closed(cage, "mvc_weights_batch");
    for (const Vec3& p : points)
        if (!p.allFinite()) throw Error("mvc_weights_batch: non-finite query point");
    WeightMatrix out(points.size(), cage.vertex_count());
    const double diag = cage.bounds().diag();
    parallel_for(points.size(), threads, [&](std::size_t i) {
        thread_local detail::MvcScratch scratch;
        detail::mvc_weights_into(points[i], cage.vertices, cage.faces, diag, scratch,
                                 out.row(static_cast<Eigen::Index>(i)).data());
    });
    return out;
}

Vec3 mvc_apply(const VecX& weights, const CageMesh& cage_d) {
    return mvc_apply(Eigen::Ref<const Eigen::RowVectorXd>(weights.transpose()), cage_d);
}

Vec3 mvc_apply(const Eigen::Ref<const Eigen::RowVectorXd>& weights, const CageMesh& cage_d) {
    if (static_cast<std::size_t>(weights.size()) != cage_d.vertex_count())
        throw Error("mvc_apply: weight count " + std::to_string(weights.size()) +
                    " does not match cage vertex count " + std::to_string(cage_d.vertex_count()));
    Vec3 out = Vec3::Zero();
    for (Eigen::Index j = 0; j < weights.size(); ++j)
        out += weights[j] * cage_d.vertices[static_cast<std::size_t>(j)];
    return out;
}

namespace {

struct SampleGrad {
    MatX3 grad;     // per-vertex contribution from one sample
    double penalty = 0;
    bool skipped = false;
    bool touched = false; // grad allocated & nonzero
};

// Forward + reverse pass for one sample. coef = mu / (|V| |S|).
void sample_penalty_gradient(const Vec3& x, const std::vector<Vec3>& verts,
                             const std::vector<Index3>& faces, double diag, double coef,
                             bool want_grad, detail::MvcScratch& scratch, VecX& w,
                             SampleGrad& out) {
    const std::size_t n = verts.size();
    w.resize(static_cast<Eigen::Index>(n));
    const auto cls = detail::mvc_weights_into(x, verts, faces, diag, scratch, w.data());
    if (cls != detail::MvcPointClass::Generic) {
        out.skipped = true;
        return;
    }

    double penalty = 0;
    bool any_negative = false;
    for (std::size_t j = 0; j < n; ++j) {
        if (w[static_cast<Eigen::Index>(j)] < 0) {
            const double v = w[static_cast<Eigen::Index>(j)];
            penalty += coef * v * v;
            any_negative = true;
        }
    }
    out.penalty = penalty;
    if (!want_grad || !any_negative) return;

    // d penalty / d phi, then through the normalization phi = w / W. The
    // unnormalized total W is recovered by rerunning the face loop below, so
    // accumulate d penalty / d w_local lazily via gphi and dot.
    VecX gphi(static_cast<Eigen::Index>(n));
    double dot = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double phi = w[static_cast<Eigen::Index>(j)];
        const double g = phi < 0 ? 2.0 * coef * phi : 0.0;
        gphi[static_cast<Eigen::Index>(j)] = g;
        dot += g * phi;
    }

    const std::vector<double>& d = scratch.dist;
    const std::vector<Vec3>& u = scratch.unit;

    // First recover W (sum of unnormalized contributions).
    double W = 0;
    for (const Index3& face : faces) {
        const TriQuantities t = eval_triangle(face, d, u);
        if (t.status != 0) continue;
        W += t.w[0] + t.w[1] + t.w[2];
    }

    out.grad = MatX3::Zero(static_cast<Eigen::Index>(n), 3);
    out.touched = true;
    std::vector<Vec3> gu(n, Vec3::Zero());
    std::vector<double> gd(n, 0.0);

    for (const Index3& face : faces) {
        const TriQuantities t = eval_triangle(face, d, u);
        if (t.status != 0) continue;

        double gw[3];
        for (int k = 0; k < 3; ++k)
            gw[k] = (gphi[t.idx[k]] - dot) / W;

        double gtheta[3] = {0, 0, 0}, gc[3] = {0, 0, 0}, gs[3] = {0, 0, 0};
        double gh = 0;
        for (int k = 0; k < 3; ++k) {
            if (gw[k] == 0) continue;
            const int kp = (k + 1) % 3, km = (k + 2) % 3;
            const double gN = gw[k] / t.den[k];
            const double gB = -gw[k] * t.w[k] / t.den[k];
            // num = theta_k - c_kp * theta_km - c_km * theta_kp
            gtheta[k] += gN;
            gtheta[km] += -gN * t.c[kp];
            gtheta[kp] += -gN * t.c[km];
            gc[kp] += -gN * t.theta[km];
            gc[km] += -gN * t.theta[kp];
            // den = d_k * sin(theta_kp) * s_km
            gd[t.idx[k]] += gB * std::sin(t.theta[kp]) * t.s[km];
            gtheta[kp] += gB * d[t.idx[k]] * std::cos(t.theta[kp]) * t.s[km];
            gs[km] += gB * d[t.idx[k]] * std::sin(t.theta[kp]);
        }
        for (int k = 0; k < 3; ++k) {
            if (gs[k] == 0) continue;
            gc[k] += gs[k] * (-t.sgn * t.c[k] / std::abs(t.s[k]));
        }
        for (int k = 0; k < 3; ++k) {
            if (gc[k] == 0) continue;
            const int kp = (k + 1) % 3, km = (k + 2) % 3;
            const double denom = std::sin(t.theta[kp]) * std::sin(t.theta[km]);
            gh += gc[k] * 2.0 * std::sin(2.0 * t.h - t.theta[k]) / denom;
            gtheta[k] += gc[k] * (-2.0 * std::sin(t.h) * std::cos(t.h - t.theta[k]) / denom);
            gtheta[kp] += gc[k] * (-(t.c[k] + 1.0) * std::cos(t.theta[kp]) / std::sin(t.theta[kp]));
            gtheta[km] += gc[k] * (-(t.c[k] + 1.0) * std::cos(t.theta[km]) / std::sin(t.theta[km]));
        }
        if (gh != 0)
            for (int k = 0; k < 3; ++k) gtheta[k] += 0.5 * gh;
        for (int k = 0; k < 3; ++k) {
            if (gtheta[k] == 0) continue;
            const int kp = (k + 1) % 3, km = (k + 2) % 3;
            const double gl = gtheta[k] / std::sqrt(std::max(1.0 - 0.25 * t.l[k] * t.l[k], 1e-300));
            const Vec3 diff = (u[t.idx[kp]] - u[t.idx[km]]) * (gl / t.l[k]);
            gu[t.idx[kp]] += diff;
            gu[t.idx[km]] -= diff;
        }
    }

    for (std::size_t j = 0; j < n; ++j) {
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        const Vec3 gv =
            gd[j] * u[j] + (gu[j] - u[j] * u[j].dot(gu[j])) / d[j];
        out.grad.row(jj) += gv.transpose();
    }
}

} // namespace

MvcLossValue mvc_loss(const std::vector<Vec3>& samples, const CageMesh& cage,
                      const MatX3& rest_positions, const MvcLossConfig& cfg, int threads) {
    require_closed(cage, "mvc_loss");
    if (rest_positions.rows() != static_cast<Eigen::Index>(cage.vertex_count()))
        throw Error("mvc_loss: rest position count mismatch");
    const double diag = cage.bounds().diag();
    const double coef =
        cfg.mu / (static_cast<double>(cage.vertex_count()) * static_cast<double>(samples.size()));

    std::vector<SampleGrad> per(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        thread_local detail::MvcScratch scratch;
        thread_local VecX w;
        sample_penalty_gradient(samples[i], cage.vertices, cage.faces, diag, coef, false,
                                scratch, w, per[i]);
    });

    MvcLossValue out;
    for (const SampleGrad& s : per) {
        if (s.skipped) ++out.skipped_samples;
        else out.penalty += s.penalty;
    }
    double anchor = 0;
    for (std::size_t j = 0; j < cage.vertex_count(); ++j)
        anchor += (cage.vertices[j] - rest_positions.row(static_cast<Eigen::Index>(j)).transpose())
                      .squaredNorm();
    out.loss = out.penalty + cfg.rho * anchor;
    return out;
}

MvcLossGradient mvc_loss_gradient(const std::vector<Vec3>& samples, const CageMesh& cage,
                                  const MatX3& rest_positions, const MvcLossConfig& cfg,
                                  int threads) {
    require_closed(cage, "mvc_loss_gradient");
    if (rest_positions.rows() != static_cast<Eigen::Index>(cage.vertex_count()))
        throw Error("mvc_loss_gradient: rest position count mismatch");
    const double diag = cage.bounds().diag();
    const std::size_t n = cage.vertex_count();
    const double coef =
        cfg.mu / (static_cast<double>(n) * static_cast<double>(samples.size()));

    std::vector<SampleGrad> per(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        thread_local detail::MvcScratch scratch;
        thread_local VecX w;
        sample_penalty_gradient(samples[i], cage.vertices, cage.faces, diag, coef, true,
                                scratch, w, per[i]);
    });

    MvcLossGradient out;
    out.gradient = MatX3::Zero(static_cast<Eigen::Index>(n), 3);
    double penalty = 0;
    for (std::size_t i = 0; i < per.size(); ++i) {
        if (per[i].skipped) {
            ++out.skipped_samples;
            out.skipped.push_back(static_cast<int>(i));
            continue;
        }
        penalty += per[i].penalty;
        if (per[i].touched) out.gradient += per[i].grad;
    }
    double anchor = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        const Vec3 delta = cage.vertices[j] - rest_positions.row(jj).transpose();
        anchor += delta.squaredNorm();
        out.gradient.row(jj) += 2.0 * cfg.rho * delta.transpose();
    }
    out.loss = penalty + cfg.rho * anchor;
    return out;
}

} // namespace splatcage
