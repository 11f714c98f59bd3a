#pragma once

#include <vector>

#include "specmorph/mesh.hpp"
#include "specmorph/pointmap.hpp"
#include "specmorph/types.hpp"

namespace specmorph {

/// Time-discretized deformation X(k/T) for k = 0..T; frames[0] is the source
/// vertex matrix, bit-exact.
struct Trajectory {
    std::vector<Mat3> frames;

    int steps() const { return static_cast<int>(frames.size()) - 1; }
    Eigen::Index vertex_count() const { return frames.empty() ? 0 : frames.front().rows(); }
};

struct SpatialWeights {
    Real align = 5.0;
    Real arap = 100.0;
    Real sym = 1.0;
    Real var = 1.0;
};

using Adjacency = std::vector<std::vector<int>>;

struct ArapResult {
    Real energy = 0.0;
    std::vector<Eigen::Matrix3d> rotations; // best per-one-ring rotations
};

/// As-rigid-as-possible energy between two embeddings of the same mesh:
/// per vertex the best rotation of its one-ring edge fan (closed-form via
/// SVD with the determinant sign fixed), summed squared residuals with
/// uniform edge weights.
ArapResult arap_energy(const Adjacency& one_rings, Mat3Ref p, Mat3Ref q);
ArapResult arap_energy(const Mesh& mesh, Mat3Ref p, Mat3Ref q);

/// Accumulates the energy gradients with the rotations held fixed (the
/// local-global treatment: gradients flow through edge vectors only).
void arap_gradient(const Adjacency& one_rings, Mat3Ref p, Mat3Ref q,
                   const std::vector<Eigen::Matrix3d>& rotations, Real weight,
                   Eigen::Ref<Mat3> d_p, Eigen::Ref<Mat3> d_q);

struct SpatialLossResult {
    Real value = 0.0;
    Real align = 0.0;
    Real arap = 0.0;
    Real sym = 0.0;
    Real var = 0.0;
    // gradients for the free frames k = 1..T of each trajectory
    std::vector<Mat3> d_x, d_y;
};

/// Full spatial loss of a trajectory pair: endpoint alignment, ARAP along
/// both frame sequences, trajectory symmetry over k = 1..T-1 and the
/// temporal variance of per-vertex alignment-error magnitudes over k = 1..T,
/// each applied in both directions.
SpatialLossResult spatial_loss(const Adjacency& rings_x, const Adjacency& rings_y,
                               const Trajectory& traj_x, const Trajectory& traj_y,
                               const PointMap& pi_xy, const PointMap& pi_yx,
                               const SpatialWeights& w, bool with_gradients = true);
SpatialLossResult spatial_loss(const Mesh& mesh_x, const Mesh& mesh_y,
                               const Trajectory& traj_x, const Trajectory& traj_y,
                               const PointMap& pi_xy, const PointMap& pi_yx,
                               const SpatialWeights& w, bool with_gradients = true);

/// Builds the linear interpolation path X_k = X + (k/T)(Pi_XY Y - X).
Trajectory linear_trajectory(Mat3Ref source, const PointMap& map, Mat3Ref target, int T);

struct InterpResult {
    Trajectory x, y;
    std::vector<Real> loss_trace;
    Real best_loss = 0.0;
    int best_iter = -1;
};

/// Direct optimization of both trajectories under the spatial loss: frames
/// 1..T are free (frame 0 pinned to the source vertices), initialized on the
/// linear path, Adam descent, best-loss iterate returned.
InterpResult optimize_trajectory(const Mesh& mesh_x, const Mesh& mesh_y,
                                 const PointMap& pi_xy, const PointMap& pi_yx, int T,
                                 const SpatialWeights& w, int iters, Real step_size);

} // namespace specmorph
