#pragma once

#include "specmorph/eigenbasis.hpp"
#include "specmorph/types.hpp"

namespace specmorph {

/// Per-vertex feature matrix (n x d). `normalized` marks unit-norm rows.
struct FeatureField {
    Mat values;
    bool normalized = false;

    Eigen::Index dim() const { return values.cols(); }
};

/// Wave kernel signature with d energy levels, log-spaced over the nonzero
/// part of the spectrum with a 2-sigma margin and sigma = 7x the level
/// spacing. Eigenpairs with lambda <= 1e-6 carry no information and are
/// skipped. Each energy level's Gaussian weights are normalized, so values
/// are convex combinations of squared eigenfunctions.
FeatureField wks(const EigenBasis& basis, int d = 128);

/// Scales each row to unit Euclidean norm. Throws DegenerateError on a zero
/// row.
FeatureField row_normalize(const FeatureField& f);

} // namespace specmorph
