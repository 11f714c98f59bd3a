#include "specmorph/tta.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "specmorph/adam.hpp"
#include "specmorph/error.hpp"

namespace specmorph {

NearestNeighbors::NearestNeighbors(Mat3Ref points) : points_(points) {
    if (points_.rows() == 0)
        throw EmptyInputError("nearest neighbors: empty point set");
    if (points_.rows() < 64) return; // brute force is fine for tiny sets

    const Vec3 lo = points_.colwise().minCoeff();
    const Vec3 hi = points_.colwise().maxCoeff();
    const Vec3 extent = hi - lo;
    const Real diag = extent.norm();
    if (!(diag > 0.0)) return; // all points coincide

    const Real target_cells = std::cbrt(static_cast<Real>(points_.rows()));
    cell_ = std::max(extent.maxCoeff() / std::max(target_cells, 1.0), 1e-12 * diag);
    origin_ = lo;
    for (int c = 0; c < 3; ++c)
        dims_[c] = std::max(1, static_cast<int>(std::floor(extent[c] / cell_)) + 1);

    cells_.assign(static_cast<size_t>(dims_[0]) * dims_[1] * dims_[2], {});
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
        int cx = std::clamp(static_cast<int>((points_(i, 0) - origin_.x()) / cell_), 0, dims_[0] - 1);
        int cy = std::clamp(static_cast<int>((points_(i, 1) - origin_.y()) / cell_), 0, dims_[1] - 1);
        int cz = std::clamp(static_cast<int>((points_(i, 2) - origin_.z()) / cell_), 0, dims_[2] - 1);
        cells_[static_cast<size_t>(cell_index(cx, cy, cz))].push_back(static_cast<int>(i));
    }
    brute_force_ = false;
}

int NearestNeighbors::nearest(const Vec3& query, Real* squared_distance) const {
    int best = -1;
    Real best_sq = std::numeric_limits<Real>::infinity();
    auto consider = [&](int idx) {
        const Real d = (points_.row(idx).transpose() - query).squaredNorm();
        if (d < best_sq || (d == best_sq && idx < best)) {
            best_sq = d;
            best = idx;
        }
    };

    if (brute_force_) {
        for (int i = 0; i < points_.rows(); ++i) consider(i);
    } else {
        const int qx = std::clamp(static_cast<int>((query.x() - origin_.x()) / cell_), 0, dims_[0] - 1);
        const int qy = std::clamp(static_cast<int>((query.y() - origin_.y()) / cell_), 0, dims_[1] - 1);
        const int qz = std::clamp(static_cast<int>((query.z() - origin_.z()) / cell_), 0, dims_[2] - 1);
        const int max_radius = std::max({dims_[0], dims_[1], dims_[2]});
        for (int radius = 0; radius <= max_radius; ++radius) {
            // cells at Chebyshev distance `radius`; any point in a farther
            // shell is at least (radius - 1) * cell away, so once the best
            // distance beats that bound the search is complete
            if (best >= 0 && radius >= 2) {
                const Real bound = static_cast<Real>(radius - 1) * cell_;
                if (best_sq <= bound * bound) break;
            }
            for (int dz = -radius; dz <= radius; ++dz) {
                const int cz = qz + dz;
                if (cz < 0 || cz >= dims_[2]) continue;
                for (int dy = -radius; dy <= radius; ++dy) {
                    const int cy = qy + dy;
                    if (cy < 0 || cy >= dims_[1]) continue;
                    const bool face_z = std::abs(dz) == radius;
                    const bool face_y = std::abs(dy) == radius;
                    for (int dx = -radius; dx <= radius; ++dx) {
                        if (!face_z && !face_y && std::abs(dx) != radius) continue;
                        const int cx = qx + dx;
                        if (cx < 0 || cx >= dims_[0]) continue;
                        for (int idx : cells_[static_cast<size_t>(cell_index(cx, cy, cz))])
                            consider(idx);
                    }
                }
            }
        }
    }
    if (squared_distance) *squared_distance = best_sq;
    return best;
}

Real chamfer(Mat3Ref s1, Mat3Ref s2) {
    if (s1.rows() == 0 || s2.rows() == 0)
        throw EmptyInputError("chamfer: empty point set");
    const NearestNeighbors nn1(s1);
    const NearestNeighbors nn2(s2);
    Real sum1 = 0.0, sum2 = 0.0;
    for (Eigen::Index i = 0; i < s1.rows(); ++i) {
        Real d;
        nn2.nearest(s1.row(i).transpose(), &d);
        sum1 += d;
    }
    for (Eigen::Index j = 0; j < s2.rows(); ++j) {
        Real d;
        nn1.nearest(s2.row(j).transpose(), &d);
        sum2 += d;
    }
    return sum1 / static_cast<Real>(s1.rows()) + sum2 / static_cast<Real>(s2.rows());
}

ChamferGrad chamfer_with_gradient(Mat3Ref s1, Mat3Ref s2) {
    if (s1.rows() == 0 || s2.rows() == 0)
        throw EmptyInputError("chamfer: empty point set");
    const NearestNeighbors nn1(s1);
    const NearestNeighbors nn2(s2);
    ChamferGrad out;
    out.d_s1 = Mat3::Zero(s1.rows(), 3);
    const Real inv_n1 = 1.0 / static_cast<Real>(s1.rows());
    for (Eigen::Index i = 0; i < s1.rows(); ++i) {
        Real d;
        const int j = nn2.nearest(s1.row(i).transpose(), &d);
        out.value += inv_n1 * d;
        out.d_s1.row(i) += 2.0 * inv_n1 * (s1.row(i) - s2.row(j));
    }
    const Real inv_n2 = 1.0 / static_cast<Real>(s2.rows());
    for (Eigen::Index j = 0; j < s2.rows(); ++j) {
        Real d;
        const int i = nn1.nearest(s2.row(j).transpose(), &d);
        out.value += inv_n2 * d;
        out.d_s1.row(i) += 2.0 * inv_n2 * (s1.row(i) - s2.row(j));
    }
    return out;
}

Real dirichlet(const SpMat& laplacian, Mat3Ref field) {
    if (field.rows() != laplacian.rows())
        throw DimensionError("dirichlet: field has " + std::to_string(field.rows()) +
                             " rows, Laplacian has " + std::to_string(laplacian.rows()));
    return (field.transpose() * (laplacian * field)).trace();
}

Real dirichlet(const Mesh& mesh, Mat3Ref field) {
    return dirichlet(build_operators(mesh).laplacian, field);
}

AdaptResult adapt(const Trajectory& traj_x, const Trajectory& traj_y, const Mesh& mesh_x,
                  Real lambda_d, int iters, Real step_size) {
    const int T = traj_x.steps();
    if (traj_y.steps() != T)
        throw DimensionError("adapt: trajectories have different step counts");
    if (lambda_d < 0.0)
        throw DimensionError("adapt: lambda_d must be non-negative");
    if (iters < 1)
        throw DimensionError("adapt: iters must be >= 1");

    const SpMat laplacian = build_operators(mesh_x).laplacian;
    const Eigen::Index n = traj_x.vertex_count();

    AdaptResult out;
    out.field.deltas.assign(static_cast<size_t>(T) + 1, Mat3::Zero(n, 3));
    out.objective_traces.resize(static_cast<size_t>(T) + 1);
    out.chamfer_before.resize(static_cast<size_t>(T) + 1);
    out.chamfer_after.resize(static_cast<size_t>(T) + 1);

    for (int k = 0; k <= T; ++k) {
        const Mat3& source = traj_x.frames[static_cast<size_t>(k)];
        const Mat3& target = traj_y.frames[static_cast<size_t>(T - k)];
        out.chamfer_before[static_cast<size_t>(k)] = chamfer(source, target);

        Mat3 delta = Mat3::Zero(n, 3);
        Mat3 best_delta = delta;
        Real best_objective = std::numeric_limits<Real>::infinity();
        VectorAdamState adam(n);
        auto& trace = out.objective_traces[static_cast<size_t>(k)];
        trace.reserve(static_cast<size_t>(iters));

        for (int it = 0; it < iters; ++it) {
            const Mat3 moved = source + delta;
            // fixed nearest-neighbor assignments for this iteration
            ChamferGrad cd = chamfer_with_gradient(moved, target);
            Mat3 grad = std::move(cd.d_s1);

            const Real smooth = dirichlet(laplacian, delta);
            const Real objective = cd.value + lambda_d * smooth;
            if (!std::isfinite(objective))
                throw ConvergenceError("adapt: objective became non-finite at frame " +
                                       std::to_string(k));
            trace.push_back(objective);
            if (objective < best_objective) {
                best_objective = objective;
                best_delta = delta;
            }
            if (it + 1 < iters) {
                grad += lambda_d * 2.0 * (laplacian * delta);
                adam.step(delta, grad, step_size);
            }
        }
        out.field.deltas[static_cast<size_t>(k)] = best_delta;
        out.chamfer_after[static_cast<size_t>(k)] = chamfer(source + best_delta, target);
    }
    return out;
}

Mat3 blend(const Trajectory& traj_x, const Trajectory& traj_y, const ShapeField& field,
           const PointMap& pi_xy, int t_index, Real t_s) {
    const int T = traj_x.steps();
    if (t_index < 0 || t_index > T)
        throw DimensionError("blend: t_index out of range");
    if (t_s < 0.0 || t_s > 1.0)
        throw DimensionError("blend: t_s must lie in [0, 1]");
    if (static_cast<int>(field.deltas.size()) != T + 1)
        throw DimensionError("blend: shape field frame count mismatch");

    const PointMap hard = harden(pi_xy);
    const Mat3 adapted = traj_x.frames[static_cast<size_t>(t_index)] +
                         field.deltas[static_cast<size_t>(t_index)];
    const Mat3 pulled = apply_pointmap(hard, traj_y.frames[static_cast<size_t>(T - t_index)]);
    return (1.0 - t_s) * adapted + t_s * pulled;
}

PointMap final_pointmap(const Mesh& mesh_y, Mat3Ref positions) {
    if (!positions.allFinite())
        throw DimensionError("final_pointmap: non-finite positions");
    const NearestNeighbors nn(mesh_y.vertices);
    IdxVec hard(positions.rows());
    for (Eigen::Index i = 0; i < positions.rows(); ++i)
        hard[i] = nn.nearest(positions.row(i).transpose());
    return PointMap::from_hard(std::move(hard));
}

void save_shape_field(const std::filesystem::path& path, const ShapeField& field) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ParseError("cannot open " + path.string() + " for writing");
    out.write("SFLD1", 5);
    const uint64_t frames = field.deltas.size();
    const uint64_t n = field.deltas.empty() ? 0 : static_cast<uint64_t>(field.deltas[0].rows());
    out.write(reinterpret_cast<const char*>(&frames), 8);
    out.write(reinterpret_cast<const char*>(&n), 8);
    for (const Mat3& delta : field.deltas)
        for (Eigen::Index i = 0; i < delta.rows(); ++i)
            for (int c = 0; c < 3; ++c) {
                const double v = delta(i, c);
                out.write(reinterpret_cast<const char*>(&v), 8);
            }
}

ShapeField load_shape_field(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open shape field " + path.string());
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "SFLD1", 5) != 0)
        throw ParseError("shape field " + path.string() + ": bad magic");
    uint64_t frames = 0, n = 0;
    in.read(reinterpret_cast<char*>(&frames), 8);
    in.read(reinterpret_cast<char*>(&n), 8);
    if (!in || frames == 0)
        throw ParseError("shape field " + path.string() + ": bad header");
    ShapeField field;
    field.deltas.assign(frames, Mat3::Zero(static_cast<Eigen::Index>(n), 3));
    for (Mat3& delta : field.deltas)
        for (Eigen::Index i = 0; i < delta.rows(); ++i)
            for (int c = 0; c < 3; ++c) {
                double v;
                in.read(reinterpret_cast<char*>(&v), 8);
                delta(i, c) = v;
            }
    if (!in)
        throw ParseError("shape field " + path.string() + ": truncated payload");
    return field;
}

} // namespace specmorph
