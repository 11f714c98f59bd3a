#pragma once

#include <vector>

#include "specmorph/mesh.hpp"
#include "specmorph/types.hpp"

namespace specmorph {

/// Discrete differential operators of a mesh: lumped vertex areas, the
/// cotangent Laplacian (PSD convention: positive diagonal, L * 1 = 0) and
/// one-ring adjacency.
struct Operators {
    Vec mass;                              // n, strictly positive
    SpMat laplacian;                       // n x n, symmetric
    std::vector<std::vector<int>> edges;   // one-ring neighbors per vertex
};

/// Builds the lumped mass vector (one-third triangle-area rule), the
/// cotangent Laplacian with off-diagonal entries -(cot a + cot b)/2 and the
/// adjacency list. Cotangents are clamped to [-1e6, 1e6] so sliver triangles
/// stay usable. Throws DegenerateError on a vertex with zero lumped area.
Operators build_operators(const Mesh& mesh);

} // namespace specmorph
