#include "specmorph/interpolation.hpp"

#include <cmath>
#include <limits>

#include "specmorph/adam.hpp"
#include "specmorph/error.hpp"
#include "specmorph/rigid.hpp"

namespace specmorph {

namespace {

// Per-vertex variance of alignment-error magnitudes over k = 1..T, one
// trajectory direction. Gradients land on the free frames of both shapes.
Real variance_term(const Trajectory& traj_src, const Trajectory& traj_dst,
                   const PointMap& map, Real weight, bool with_gradients,
                   std::vector<Mat3>* d_src, std::vector<Mat3>* d_dst) {
    const int T = traj_src.steps();
    const Eigen::Index n = traj_src.vertex_count();
    if (T < 2) return 0.0;

    std::vector<Mat3> residual(static_cast<size_t>(T)); // k = 1..T
    Mat errors(n, T);
    for (int k = 1; k <= T; ++k) {
        const Mat mapped = apply_pointmap(map, traj_dst.frames[static_cast<size_t>(T - k)]);
        residual[static_cast<size_t>(k - 1)] = traj_src.frames[static_cast<size_t>(k)] - mapped;
        errors.col(k - 1) = residual[static_cast<size_t>(k - 1)].rowwise().norm();
    }
    const Vec mean = errors.rowwise().mean();
    const Mat centered = errors.colwise() - mean;
    const Real value = centered.squaredNorm() / static_cast<Real>(T - 1);

    if (with_gradients) {
        for (int k = 1; k <= T; ++k) {
            const Mat3& res = residual[static_cast<size_t>(k - 1)];
            Mat3 d_res(n, 3);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Real e = errors(i, k - 1);
                if (e > 0.0) {
                    const Real coeff =
                        weight * 2.0 * centered(i, k - 1) / static_cast<Real>(T - 1);
                    d_res.row(i) = (coeff / e) * res.row(i);
                } else {
                    d_res.row(i).setZero();
                }
            }
            (*d_src)[static_cast<size_t>(k - 1)] += d_res;
            if (T - k >= 1)
                scatter_pointmap_gradient(map, -d_res, (*d_dst)[static_cast<size_t>(T - k - 1)]);
        }
    }
    return value;
}

} // namespace

ArapResult arap_energy(const Adjacency& one_rings, Mat3Ref p, Mat3Ref q) {
    const Eigen::Index n = p.rows();
    if (q.rows() != n || static_cast<Eigen::Index>(one_rings.size()) != n)
        throw DimensionError("arap_energy: position/adjacency size mismatch");

    ArapResult out;
    out.rotations.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j : one_rings[static_cast<size_t>(i)]) {
            const Vec3 ep = (p.row(i) - p.row(j)).transpose();
            const Vec3 eq = (q.row(i) - q.row(j)).transpose();
            cov += ep * eq.transpose();
        }
        const Eigen::Matrix3d r = kabsch_rotation(cov);
        out.rotations[static_cast<size_t>(i)] = r;
        for (int j : one_rings[static_cast<size_t>(i)]) {
            const Vec3 ep = (p.row(i) - p.row(j)).transpose();
            const Vec3 eq = (q.row(i) - q.row(j)).transpose();
            out.energy += (r * ep - eq).squaredNorm();
        }
    }
    return out;
}

ArapResult arap_energy(const Mesh& mesh, Mat3Ref p, Mat3Ref q) {
    return arap_energy(vertex_adjacency(mesh), p, q);
}

void arap_gradient(const Adjacency& one_rings, Mat3Ref p, Mat3Ref q,
                   const std::vector<Eigen::Matrix3d>& rotations, Real weight,
                   Eigen::Ref<Mat3> d_p, Eigen::Ref<Mat3> d_q) {
    const Eigen::Index n = p.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Matrix3d& r = rotations[static_cast<size_t>(i)];
        for (int j : one_rings[static_cast<size_t>(i)]) {
            const Vec3 ep = (p.row(i) - p.row(j)).transpose();
            const Vec3 eq = (q.row(i) - q.row(j)).transpose();
            const Vec3 res = r * ep - eq;
            const Vec3 dq = -2.0 * weight * res;
            const Vec3 dp = 2.0 * weight * (r.transpose() * res);
            d_q.row(i) += dq.transpose();
            d_q.row(j) -= dq.transpose();
            d_p.row(i) += dp.transpose();
            d_p.row(j) -= dp.transpose();
        }
    }
}

SpatialLossResult spatial_loss(const Adjacency& rings_x, const Adjacency& rings_y,
                               const Trajectory& traj_x, const Trajectory& traj_y,
                               const PointMap& pi_xy, const PointMap& pi_yx,
                               const SpatialWeights& w, bool with_gradients) {
    const int T = traj_x.steps();
    if (traj_y.steps() != T)
        throw DimensionError("spatial_loss: trajectories have different step counts");
    if (T < 1)
        throw DimensionError("spatial_loss: need at least one step");

    SpatialLossResult out;
    if (with_gradients) {
        out.d_x.assign(static_cast<size_t>(T), Mat3::Zero(traj_x.vertex_count(), 3));
        out.d_y.assign(static_cast<size_t>(T), Mat3::Zero(traj_y.vertex_count(), 3));
    }

    // endpoint alignment against the mapped opposite source
    const Mat mapped_y = apply_pointmap(pi_xy, traj_y.frames.front());
    const Mat mapped_x = apply_pointmap(pi_yx, traj_x.frames.front());
    const Mat3 align_x = traj_x.frames.back() - mapped_y;
    const Mat3 align_y = traj_y.frames.back() - mapped_x;
    out.align = align_x.squaredNorm() + align_y.squaredNorm();
    if (with_gradients) {
        out.d_x.back() += w.align * 2.0 * align_x;
        out.d_y.back() += w.align * 2.0 * align_y;
    }

    // ARAP along both frame sequences
    for (int k = 0; k < T; ++k) {
        const ArapResult ax = arap_energy(rings_x, traj_x.frames[static_cast<size_t>(k)],
                                          traj_x.frames[static_cast<size_t>(k + 1)]);
        const ArapResult ay = arap_energy(rings_y, traj_y.frames[static_cast<size_t>(k)],
                                          traj_y.frames[static_cast<size_t>(k + 1)]);
        out.arap += ax.energy + ay.energy;
        if (with_gradients) {
            Mat3 sink_x = Mat3::Zero(traj_x.vertex_count(), 3);
            Mat3 sink_y = Mat3::Zero(traj_y.vertex_count(), 3);
            Eigen::Ref<Mat3> dp_x = k >= 1 ? out.d_x[static_cast<size_t>(k - 1)] : sink_x;
            Eigen::Ref<Mat3> dp_y = k >= 1 ? out.d_y[static_cast<size_t>(k - 1)] : sink_y;
            arap_gradient(rings_x, traj_x.frames[static_cast<size_t>(k)],
                          traj_x.frames[static_cast<size_t>(k + 1)], ax.rotations, w.arap,
                          dp_x, out.d_x[static_cast<size_t>(k)]);
            arap_gradient(rings_y, traj_y.frames[static_cast<size_t>(k)],
                          traj_y.frames[static_cast<size_t>(k + 1)], ay.rotations, w.arap,
                          dp_y, out.d_y[static_cast<size_t>(k)]);
        }
    }

    // trajectory symmetry, both directions
    for (int k = 1; k <= T - 1; ++k) {
        const Mat mapped_yk = apply_pointmap(pi_xy, traj_y.frames[static_cast<size_t>(T - k)]);
        const Mat3 sym_x = traj_x.frames[static_cast<size_t>(k)] - mapped_yk;
        const Mat mapped_xk = apply_pointmap(pi_yx, traj_x.frames[static_cast<size_t>(T - k)]);
        const Mat3 sym_y = traj_y.frames[static_cast<size_t>(k)] - mapped_xk;
        out.sym += sym_x.squaredNorm() + sym_y.squaredNorm();
        if (with_gradients) {
            out.d_x[static_cast<size_t>(k - 1)] += w.sym * 2.0 * sym_x;
            scatter_pointmap_gradient(pi_xy, w.sym * -2.0 * sym_x,
                                      out.d_y[static_cast<size_t>(T - k - 1)]);
            out.d_y[static_cast<size_t>(k - 1)] += w.sym * 2.0 * sym_y;
            scatter_pointmap_gradient(pi_yx, w.sym * -2.0 * sym_y,
                                      out.d_x[static_cast<size_t>(T - k - 1)]);
        }
    }

    out.var = variance_term(traj_x, traj_y, pi_xy, w.var, with_gradients, &out.d_x, &out.d_y) +
              variance_term(traj_y, traj_x, pi_yx, w.var, with_gradients, &out.d_y, &out.d_x);

    out.value = w.align * out.align + w.arap * out.arap + w.sym * out.sym + w.var * out.var;
    return out;
}

SpatialLossResult spatial_loss(const Mesh& mesh_x, const Mesh& mesh_y,
                               const Trajectory& traj_x, const Trajectory& traj_y,
                               const PointMap& pi_xy, const PointMap& pi_yx,
                               const SpatialWeights& w, bool with_gradients) {
    return spatial_loss(vertex_adjacency(mesh_x), vertex_adjacency(mesh_y), traj_x, traj_y,
                        pi_xy, pi_yx, w, with_gradients);
}

Trajectory linear_trajectory(Mat3Ref source, const PointMap& map, Mat3Ref target, int T) {
    const Mat3 pulled = apply_pointmap(map, target);
    Trajectory traj;
    traj.frames.reserve(static_cast<size_t>(T) + 1);
    for (int k = 0; k <= T; ++k) {
        const Real t = static_cast<Real>(k) / static_cast<Real>(T);
        traj.frames.push_back(source + t * (pulled - source));
    }
    traj.frames.front() = source; // bit-exact pin
    return traj;
}

InterpResult optimize_trajectory(const Mesh& mesh_x, const Mesh& mesh_y,
                                 const PointMap& pi_xy, const PointMap& pi_yx, int T,
                                 const SpatialWeights& w, int iters, Real step_size) {
    if (T < 2)
        throw DimensionError("optimize_trajectory: T must be >= 2");
    if (iters < 1)
        throw DimensionError("optimize_trajectory: iters must be >= 1");

    const Adjacency rings_x = vertex_adjacency(mesh_x);
    const Adjacency rings_y = vertex_adjacency(mesh_y);

    InterpResult result;
    Trajectory traj_x = linear_trajectory(mesh_x.vertices, pi_xy, mesh_y.vertices, T);
    Trajectory traj_y = linear_trajectory(mesh_y.vertices, pi_yx, mesh_x.vertices, T);

    std::vector<AdamState> adam_x, adam_y;
    for (int k = 0; k < T; ++k) {
        adam_x.emplace_back(traj_x.vertex_count(), 3);
        adam_y.emplace_back(traj_y.vertex_count(), 3);
    }

    result.best_loss = std::numeric_limits<Real>::infinity();
    for (int it = 0; it < iters; ++it) {
        SpatialLossResult loss =
            spatial_loss(rings_x, rings_y, traj_x, traj_y, pi_xy, pi_yx, w);
        if (!std::isfinite(loss.value))
            throw ConvergenceError("optimize_trajectory: loss became non-finite at iteration " +
                                   std::to_string(it));
        result.loss_trace.push_back(loss.value);
        if (loss.value < result.best_loss) {
            result.best_loss = loss.value;
            result.best_iter = it;
            result.x = traj_x;
            result.y = traj_y;
        }
        if (it + 1 < iters) {
            for (int k = 0; k < T; ++k) {
                adam_x[static_cast<size_t>(k)].step(traj_x.frames[static_cast<size_t>(k + 1)],
                                                    loss.d_x[static_cast<size_t>(k)], step_size);
                adam_y[static_cast<size_t>(k)].step(traj_y.frames[static_cast<size_t>(k + 1)],
                                                    loss.d_y[static_cast<size_t>(k)], step_size);
            }
        }
    }
    return result;
}

} // namespace specmorph
