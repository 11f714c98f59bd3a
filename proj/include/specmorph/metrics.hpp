#pragma once

#include <utility>
#include <vector>

#include "specmorph/mesh.hpp"
#include "specmorph/pointmap.hpp"
#include "specmorph/types.hpp"

namespace specmorph {

/// Graph geodesic distances (Dijkstra over mesh edges with Euclidean
/// lengths), normalized by sqrt(total surface area). `dist` has one row per
/// source; unreachable vertices carry +infinity.
struct GeodesicTable {
    Mat dist;                 // sources x n
    std::vector<int> sources; // source vertex per row
    std::vector<int> row_of;  // vertex -> row index, or -1

    Real between(int source_vertex, int target_vertex) const;
};

GeodesicTable geodesics(const Mesh& mesh, const std::vector<int>& sources);

/// Per-source-vertex geodesic error dist(pred(i), gt(i)) on the target mesh
/// and its mean.
std::pair<Real, Vec> geodesic_error(const PointMap& pred, const PointMap& gt,
                                    const GeodesicTable& geo);

struct PckCurve {
    std::vector<std::pair<Real, Real>> points; // (threshold, fraction)
    Real auc = 0.0;
};

/// Fraction of errors below each of `steps` thresholds uniform on
/// [0, max_threshold]; AUC is the trapezoidal integral divided by the range.
PckCurve pck_auc(VecRef errors, Real max_threshold, int steps);

/// Per-source-triangle conformal distortion of the map sending each vertex
/// to `mapped_positions`: s1/s2 + s2/s1 - 2 of the in-plane singular values
/// (0 for conformal maps). Throws DegenerateError on a zero-area source
/// triangle.
Vec conformal_distortion(const Mesh& mesh_src, Mat3Ref mapped_positions);

/// Cumulative fraction of values <= x over `steps` thresholds.
PckCurve cumulative_curve(VecRef values, Real max_x, int steps);

struct EvalReport {
    Real mean_geo_err = 0.0;
    PckCurve pck;
    PckCurve conformal;
};

} // namespace specmorph
