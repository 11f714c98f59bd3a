#pragma once

#include <filesystem>
#include <vector>

#include "specmorph/interpolation.hpp"
#include "specmorph/mesh.hpp"
#include "specmorph/operators.hpp"
#include "specmorph/pointmap.hpp"
#include "specmorph/types.hpp"

namespace specmorph {

/// Exact nearest-neighbor queries over a fixed point set, accelerated by a
/// uniform grid with expanding-shell search.
class NearestNeighbors {
public:
    explicit NearestNeighbors(Mat3Ref points);

    /// Index of the closest point (ties to the smallest index) and its
    /// squared distance.
    int nearest(const Vec3& query, Real* squared_distance = nullptr) const;

    Eigen::Index size() const { return points_.rows(); }

private:
    Mat3 points_;
    Vec3 origin_ = Vec3::Zero();
    Real cell_ = 1.0;
    int dims_[3] = {1, 1, 1};
    std::vector<std::vector<int>> cells_;
    bool brute_force_ = true;

    int cell_index(int cx, int cy, int cz) const {
        return (cz * dims_[1] + cy) * dims_[0] + cx;
    }
};

/// Symmetric mean of squared nearest-neighbor distances between two point
/// sets (exact). Throws EmptyInputError on an empty set.
Real chamfer(Mat3Ref s1, Mat3Ref s2);

/// Chamfer value plus its gradient with respect to s1 under the current
/// nearest-neighbor assignments (the exact subgradient of the piecewise
/// smooth objective).
struct ChamferGrad {
    Real value = 0.0;
    Mat3 d_s1;
};
ChamferGrad chamfer_with_gradient(Mat3Ref s1, Mat3Ref s2);

/// trace(field^T L field) with the cotangent Laplacian; zero on constant
/// fields.
Real dirichlet(const SpMat& laplacian, Mat3Ref field);
Real dirichlet(const Mesh& mesh, Mat3Ref field);

/// Per-frame displacement fields Delta_s(k/T) on the source shape.
struct ShapeField {
    std::vector<Mat3> deltas; // T+1 entries, n x 3 each
};

struct AdaptResult {
    ShapeField field;
    std::vector<std::vector<Real>> objective_traces; // one per frame
    std::vector<Real> chamfer_before, chamfer_after;
};

/// Per-frame minimization of Chamfer(X_k + Delta, Y_{T-k}) + lambda_d *
/// Dirichlet(Delta) with the rotation-equivariant Adam variant. Nearest
/// neighbors are held fixed within an iteration and recomputed every step;
/// fields start at zero and the best-objective iterate per frame is kept.
AdaptResult adapt(const Trajectory& traj_x, const Trajectory& traj_y, const Mesh& mesh_x,
                  Real lambda_d, int iters, Real step_size = 1e-3);

/// Two-parameter interpolation surface at (t = t_index / T, t_s):
/// (1 - t_s) * (X_k + Delta_s(k)) + t_s * (Pi_XY Y_{T-k}) with Y's frame
/// pulled back to X's vertex set through the hardened map.
Mat3 blend(const Trajectory& traj_x, const Trajectory& traj_y, const ShapeField& field,
           const PointMap& pi_xy, int t_index, Real t_s);

/// Nearest vertex of Y for each row of the given positions, ties to the
/// smallest index.
PointMap final_pointmap(const Mesh& mesh_y, Mat3Ref positions);

/// Binary format: "SFLD1" magic, T+1 and n as 64-bit little-endian, then
/// row-major f64 frames.
void save_shape_field(const std::filesystem::path& path, const ShapeField& field);
ShapeField load_shape_field(const std::filesystem::path& path);

} // namespace specmorph
