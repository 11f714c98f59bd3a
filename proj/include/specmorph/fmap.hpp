#pragma once

#include <filesystem>

#include "specmorph/eigenbasis.hpp"
#include "specmorph/pointmap.hpp"
#include "specmorph/types.hpp"

namespace specmorph {

/// Spectral map C_XY (k_y x k_x): takes coefficients in X's eigenbasis to
/// coefficients in Y's eigenbasis.
struct FunctionalMap {
    Mat c;

    Eigen::Index k_y() const { return c.rows(); }
    Eigen::Index k_x() const { return c.cols(); }
};

/// Eigenvalue-dependent penalty promoting Laplacian-commuting maps.
struct ResolventMask {
    Mat m; // k_y x k_x, non-negative
    Real gamma = 0.5;
};

/// M_ij built from the squared differences of the two resolvent components
/// at Lambda_Y(i) and Lambda_X(j); zero exactly when the eigenvalues match.
ResolventMask resolvent_mask(VecRef lambda_x, VecRef lambda_y, Real gamma);

/// Minimizes ||C A - B||_F^2 + lambda_reg * sum_ij C_ij^2 M_ij row by row:
/// (A A^T + lambda_reg diag(M_i)) c_i = A b_i. Throws SingularError when a
/// row system is numerically singular.
FunctionalMap solve_fmap(MatRef a, MatRef b, const ResolventMask& mask, Real lambda_reg);

/// Nearest-neighbor conversion in the spectral domain: vertex i of Y maps to
/// argmin_j ||(Phi_Y C)_i - (Phi_X)_j||, ties to the smallest index.
PointMap fmap_to_pointmap(const FunctionalMap& c, const EigenBasis& basis_x,
                          const EigenBasis& basis_y);

/// C = Phi_Y^dagger (Pi_YX Phi_X) with the mass-weighted pseudoinverse.
FunctionalMap pointmap_to_fmap(const PointMap& pi_yx, const EigenBasis& basis_x,
                               const EigenBasis& basis_y);

struct SpectralWeights {
    Real bij = 1.0;
    Real orth = 1.0;
    Real structural = 1.0;
    Real couple = 1.0;
};

/// Value and exact gradients of the spectral loss with respect to its direct
/// inputs (both functional maps and both soft point maps).
struct SpectralLossResult {
    Real value = 0.0;
    Real bij = 0.0;
    Real orth = 0.0;
    Real couple = 0.0;
    Mat d_cxy, d_cyx;   // same shapes as the maps
    Mat d_pixy, d_piyx; // same shapes as the soft point maps
};

/// L = w.structural * (w.bij * L_bij + w.orth * L_orth) + w.couple * L_couple
/// with L_bij the two-sided inverse penalty, L_orth = ||C^T C - I||_F^2 per
/// direction and L_couple = ||C - Phi^dagger Pi Phi||_F^2 in both directions.
SpectralLossResult spectral_loss(const FunctionalMap& c_xy, const FunctionalMap& c_yx,
                                 const PointMap& pi_xy, const PointMap& pi_yx,
                                 const EigenBasis& basis_x, const EigenBasis& basis_y,
                                 const SpectralWeights& weights, bool with_gradients = true);

/// Binary format: "FMAP1" magic, k_y and k_x as 64-bit little-endian, then
/// row-major f64 entries.
void save_fmap(const std::filesystem::path& path, const FunctionalMap& map);
FunctionalMap load_fmap(const std::filesystem::path& path);

} // namespace specmorph
