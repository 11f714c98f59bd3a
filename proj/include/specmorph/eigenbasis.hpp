#pragma once

#include <filesystem>

#include "specmorph/operators.hpp"
#include "specmorph/types.hpp"

namespace specmorph {

/// Truncated Laplace-Beltrami eigenbasis. Columns of `phi` are mass-orthonormal
/// (Phi^T M Phi = I) and ordered by ascending eigenvalue; each column's sign is
/// fixed so its largest-magnitude entry is positive.
struct EigenBasis {
    Mat phi;     // n x k
    Vec lambda;  // k, non-negative, non-decreasing
    Vec mass;    // n, lumped vertex areas of the source mesh
    int k = 0;

    Eigen::Index size() const { return phi.rows(); }
};

/// Solves the truncated generalized eigenproblem L phi = lambda M phi for the
/// k smallest eigenpairs with shift-invert Lanczos (sparse Cholesky of
/// L + 1e-8 M, full reorthogonalization, bounded subspace restarts). Every
/// returned pair satisfies ||L phi - lambda M phi|| / ||M phi|| <= 1e-6.
EigenBasis compute_eigenbasis(const Operators& ops, int k);

/// Spectral coefficients of a vertex function: Phi^T M f.
Mat project(const EigenBasis& basis, MatRef f);

/// Vertex function from spectral coefficients: Phi a.
Mat unproject(const EigenBasis& basis, MatRef a);

/// Basis cache: "SPEC1" magic, n and k as 64-bit little-endian, then
/// row-major little-endian f64 phi followed by lambda.
void save_basis_cache(const std::filesystem::path& path, const EigenBasis& basis);
EigenBasis load_basis_cache(const std::filesystem::path& path, const Vec& mass);

} // namespace specmorph
