#include "specmorph/metrics.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <queue>

#include "specmorph/error.hpp"

namespace specmorph {

Real GeodesicTable::between(int source_vertex, int target_vertex) const {
    if (source_vertex < 0 || source_vertex >= static_cast<int>(row_of.size()) ||
        row_of[static_cast<size_t>(source_vertex)] < 0)
        throw DimensionError("geodesic table: vertex " + std::to_string(source_vertex) +
                             " is not a source");
    if (target_vertex < 0 || target_vertex >= dist.cols())
        throw DimensionError("geodesic table: target vertex out of range");
    return dist(row_of[static_cast<size_t>(source_vertex)], target_vertex);
}

GeodesicTable geodesics(const Mesh& mesh, const std::vector<int>& sources) {
    if (sources.empty())
        throw EmptyInputError("geodesics: no sources");
    const Eigen::Index n = mesh.vertex_count();
    const Real norm = std::sqrt(total_surface_area(mesh));
    if (!(norm > 0.0))
        throw DegenerateError("geodesics: zero surface area");

    const auto rings = vertex_adjacency(mesh);
    std::vector<std::vector<std::pair<int, Real>>> graph(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (int j : rings[static_cast<size_t>(i)])
            graph[static_cast<size_t>(i)].push_back(
                {j, (mesh.vertices.row(i) - mesh.vertices.row(j)).norm()});

    GeodesicTable table;
    table.sources = sources;
    table.row_of.assign(static_cast<size_t>(n), -1);
    table.dist.resize(static_cast<Eigen::Index>(sources.size()), n);

    const Real inf = std::numeric_limits<Real>::infinity();
    std::vector<Real> dist(static_cast<size_t>(n));
    for (size_t row = 0; row < sources.size(); ++row) {
        const int source = sources[row];
        if (source < 0 || source >= n)
            throw DimensionError("geodesics: source vertex out of range");
        table.row_of[static_cast<size_t>(source)] = static_cast<int>(row);

        std::fill(dist.begin(), dist.end(), inf);
        dist[static_cast<size_t>(source)] = 0.0;
        using Entry = std::pair<Real, int>;
        std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
        queue.push({0.0, source});
        while (!queue.empty()) {
            const auto [d, u] = queue.top();
            queue.pop();
            if (d > dist[static_cast<size_t>(u)]) continue;
            for (const auto& [v, w] : graph[static_cast<size_t>(u)]) {
                const Real cand = d + w;
                if (cand < dist[static_cast<size_t>(v)]) {
                    dist[static_cast<size_t>(v)] = cand;
                    queue.push({cand, v});
                }
            }
        }

        bool any_reached = false;
        for (Eigen::Index j = 0; j < n; ++j) {
            table.dist(static_cast<Eigen::Index>(row), j) = dist[static_cast<size_t>(j)] / norm;
            if (j != source && std::isfinite(dist[static_cast<size_t>(j)])) any_reached = true;
        }
        if (!any_reached && n > 1)
            throw DisconnectedError("geodesics: source " + std::to_string(source) +
                                    " reaches no other vertex");
    }
    return table;
}

std::pair<Real, Vec> geodesic_error(const PointMap& pred, const PointMap& gt,
                                    const GeodesicTable& geo) {
    const PointMap pred_hard = harden(pred);
    const PointMap gt_hard = harden(gt);
    if (pred_hard.hard.size() != gt_hard.hard.size())
        throw DimensionError("geodesic_error: maps cover different source meshes");

    Vec errors(pred_hard.hard.size());
    for (Eigen::Index i = 0; i < errors.size(); ++i)
        errors[i] = geo.between(gt_hard.hard[i], pred_hard.hard[i]);
    return {errors.mean(), errors};
}

PckCurve pck_auc(VecRef errors, Real max_threshold, int steps) {
    if (!(max_threshold > 0.0))
        throw DimensionError("pck_auc: max_threshold must be positive");
    if (steps < 2)
        throw DimensionError("pck_auc: need at least two thresholds");

    PckCurve curve;
    curve.points.reserve(static_cast<size_t>(steps));
    const Real count = static_cast<Real>(errors.size());
    for (int s = 0; s < steps; ++s) {
        const Real tau = max_threshold * static_cast<Real>(s) / static_cast<Real>(steps - 1);
        Real hits = 0.0;
        for (Eigen::Index i = 0; i < errors.size(); ++i)
            if (errors[i] <= tau) hits += 1.0;
        curve.points.push_back({tau, count > 0.0 ? hits / count : 0.0});
    }
    // thresholds are uniform, so the trapezoidal integral divided by the
    // range reduces to the mean of interior trapezoids; this form is exact
    // for a constant-one curve
    Real weighted = 0.0;
    for (size_t s = 1; s < curve.points.size(); ++s)
        weighted += 0.5 * (curve.points[s - 1].second + curve.points[s].second);
    curve.auc = weighted / static_cast<Real>(steps - 1);
    return curve;
}

PckCurve cumulative_curve(VecRef values, Real max_x, int steps) {
    return pck_auc(values, max_x, steps);
}

Vec conformal_distortion(const Mesh& mesh_src, Mat3Ref mapped_positions) {
    if (mapped_positions.rows() != mesh_src.vertex_count())
        throw DimensionError("conformal_distortion: mapped positions have " +
                             std::to_string(mapped_positions.rows()) + " rows, mesh has " +
                             std::to_string(mesh_src.vertex_count()) + " vertices");
    if (!mapped_positions.allFinite())
        throw DimensionError("conformal_distortion: non-finite mapped positions");

    // 2D edge coordinates of a triangle (a, b, c) in its own plane
    auto plane_coords = [](const Vec3& a, const Vec3& b, const Vec3& c,
                           Eigen::Matrix2d& out) -> bool {
        const Vec3 e1 = b - a;
        const Vec3 e2 = c - a;
        const Vec3 normal = e1.cross(e2);
        if (normal.norm() < 1e-300) return false;
        const Vec3 u = e1.normalized();
        const Vec3 v = normal.cross(e1).normalized();
        out << e1.dot(u), e2.dot(u), e1.dot(v), e2.dot(v);
        return true;
    };

    Vec distortions(mesh_src.face_count());
    for (Eigen::Index f = 0; f < mesh_src.face_count(); ++f) {
        const int i0 = mesh_src.faces(f, 0);
        const int i1 = mesh_src.faces(f, 1);
        const int i2 = mesh_src.faces(f, 2);
        Eigen::Matrix2d src;
        if (!plane_coords(mesh_src.vertices.row(i0), mesh_src.vertices.row(i1),
                          mesh_src.vertices.row(i2), src) ||
            std::abs(src.determinant()) < 1e-300)
            throw DegenerateError("conformal_distortion: degenerate source triangle " +
                                  std::to_string(f));
        Eigen::Matrix2d img;
        if (!plane_coords(mapped_positions.row(i0), mapped_positions.row(i1),
                          mapped_positions.row(i2), img)) {
            // collapsed image triangle: fully degenerate map
            distortions[f] = std::numeric_limits<Real>::infinity();
            continue;
        }
        const Eigen::Matrix2d jacobian = img * src.inverse();
        Eigen::JacobiSVD<Eigen::Matrix2d> svd(jacobian);
        const Real s1 = svd.singularValues()[0];
        const Real s2 = svd.singularValues()[1];
        distortions[f] =
            s2 > 0.0 ? s1 / s2 + s2 / s1 - 2.0 : std::numeric_limits<Real>::infinity();
    }
    return distortions;
}

} // namespace specmorph
