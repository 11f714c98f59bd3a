#include "specmorph/operators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "specmorph/error.hpp"

namespace specmorph {

namespace {

constexpr Real kCotClamp = 1e6;

// cot of the angle at `apex` in triangle (apex, a, b), clamped for slivers.
Real clamped_cot(const Vec3& apex, const Vec3& a, const Vec3& b) {
    const Vec3 u = a - apex;
    const Vec3 v = b - apex;
    const Real cross_norm = u.cross(v).norm();
    Real cot;
    if (cross_norm < 1e-300) {
        cot = u.dot(v) >= 0.0 ? kCotClamp : -kCotClamp;
    } else {
        cot = u.dot(v) / cross_norm;
    }
    return std::clamp(cot, -kCotClamp, kCotClamp);
}

} // namespace

Operators build_operators(const Mesh& mesh) {
    const Eigen::Index n = mesh.vertex_count();
    Operators ops;
    ops.mass = Vec::Zero(n);
    ops.edges = vertex_adjacency(mesh);

    // Half-weights accumulated per undirected edge so both triangles of an
    // edge land in the same accumulator; emitting (i,j) and (j,i) from it
    // makes the matrix symmetric bit-exactly.
    std::map<std::pair<int, int>, Real> edge_weight;
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        const int i0 = mesh.faces(f, 0);
        const int i1 = mesh.faces(f, 1);
        const int i2 = mesh.faces(f, 2);
        const Vec3 p0 = mesh.vertices.row(i0);
        const Vec3 p1 = mesh.vertices.row(i1);
        const Vec3 p2 = mesh.vertices.row(i2);

        const Real area = 0.5 * (p1 - p0).cross(p2 - p0).norm();
        ops.mass[i0] += area / 3.0;
        ops.mass[i1] += area / 3.0;
        ops.mass[i2] += area / 3.0;

        auto add = [&](int a, int b, Real half_cot) {
            auto key = std::minmax(a, b);
            edge_weight[{key.first, key.second}] += half_cot;
        };
        add(i1, i2, 0.5 * clamped_cot(p0, p1, p2));
        add(i0, i2, 0.5 * clamped_cot(p1, p0, p2));
        add(i0, i1, 0.5 * clamped_cot(p2, p0, p1));
    }

    for (Eigen::Index i = 0; i < n; ++i)
        if (!(ops.mass[i] > 0.0))
            throw DegenerateError("mesh '" + mesh.name + "': vertex " + std::to_string(i) +
                                  " has zero lumped area");

    std::vector<Eigen::Triplet<Real>> triplets;
    triplets.reserve(edge_weight.size() * 2 + static_cast<size_t>(n));
    Vec diagonal = Vec::Zero(n);
    for (const auto& [edge, w] : edge_weight) {
        triplets.emplace_back(edge.first, edge.second, -w);
        triplets.emplace_back(edge.second, edge.first, -w);
        diagonal[edge.first] += w;
        diagonal[edge.second] += w;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        triplets.emplace_back(i, i, diagonal[i]);

    ops.laplacian.resize(n, n);
    ops.laplacian.setFromTriplets(triplets.begin(), triplets.end());
    ops.laplacian.makeCompressed();
    return ops;
}

} // namespace specmorph
