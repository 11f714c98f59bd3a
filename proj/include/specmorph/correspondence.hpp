#pragma once

#include <vector>

#include "specmorph/eigenbasis.hpp"
#include "specmorph/fmap.hpp"
#include "specmorph/pointmap.hpp"
#include "specmorph/wks.hpp"

namespace specmorph {

/// Hyperparameters of the per-pair feature optimization.
struct MatchConfig {
    Real temperature = 0.07;
    int feature_dim = 128;
    int iters = 300;
    Real step_size = 1e-3;
    Real lambda_reg = 100.0;
    Real gamma = 0.5;
    SpectralWeights weights;

    void validate() const;
};

/// Row-softmax of F_X F_Y^T / temperature (max-subtracted for stability).
/// Both feature fields must be row-normalized and share the same dimension.
PointMap soft_correspondence(const FeatureField& f_x, const FeatureField& f_y,
                             Real temperature);

struct MatchResult {
    FeatureField features_x, features_y; // optimized, row-normalized
    FunctionalMap c_xy, c_yx;
    PointMap pi_xy, pi_yx; // soft
    std::vector<Real> loss_trace;
    Real best_loss = 0.0;
    int best_iter = -1;
};

/// Gradient descent on free per-vertex features of both shapes under the
/// spectral loss: each iterate recomputes soft maps (both directions) and
/// functional maps through the regularized solver, with gradients flowing
/// through the softmax, the row normalization and the linear solve (implicit
/// differentiation of the per-row normal equations). Returns the best-loss
/// iterate. Throws ConvergenceError only if the loss becomes non-finite.
MatchResult optimize_features(const EigenBasis& basis_x, const EigenBasis& basis_y,
                              const FeatureField& init_x, const FeatureField& init_y,
                              const MatchConfig& cfg);

/// Value and feature gradients of one evaluation of the optimization
/// objective (exposed separately so the gradients can be checked against
/// finite differences).
struct FeatureLossResult {
    Real value = 0.0;
    Mat d_fx, d_fy;
    FunctionalMap c_xy, c_yx;
    PointMap pi_xy, pi_yx;
};

FeatureLossResult feature_loss(const EigenBasis& basis_x, const EigenBasis& basis_y,
                               MatRef raw_fx, MatRef raw_fy,
                               const ResolventMask& mask_xy, const ResolventMask& mask_yx,
                               const MatchConfig& cfg, bool with_gradients = true);

} // namespace specmorph
