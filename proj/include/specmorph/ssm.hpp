#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "specmorph/types.hpp"

namespace specmorph {

/// Point distribution model over corresponded shapes: Procrustes-aligned
/// mean, orthonormal principal directions (rows, flattened as x0 y0 z0 x1
/// ...) and per-mode variances in descending order. The aligned training
/// shapes are kept for specificity evaluation.
struct SSModel {
    Mat3 mean;
    Mat components;              // modes x 3n, orthonormal rows
    Vec variances;               // modes, descending
    std::vector<Mat3> training;  // Procrustes-aligned input shapes

    Eigen::Index point_count() const { return mean.rows(); }
    int modes() const { return static_cast<int>(components.rows()); }
};

/// Generalized Procrustes alignment (rigid, no scaling) followed by PCA of
/// the flattened residuals. Modes beyond the numerical rank are dropped, so
/// the returned model may hold fewer than q modes.
SSModel build_ssm(const std::vector<Mat3>& shapes, int q);

/// mean + sum_j coefficients[j] * sqrt(variance_j) * component_j. Missing
/// trailing coefficients are treated as zero.
Mat3 sample_ssm(const SSModel& model, VecRef coefficients);

/// Rigid-aligns `shape` to the model mean and reconstructs it from the first
/// q modes; returns the aligned input and its reconstruction.
struct Reconstruction {
    Mat3 aligned;
    Mat3 reconstructed;
};
Reconstruction reconstruct(const SSModel& model, Mat3Ref shape, int q);

/// Mean over leave-one-out folds of the root Chamfer distance between the
/// held-out shape (aligned) and its q-mode reconstruction.
Real generality(const std::vector<Mat3>& shapes, int q);

/// Mean root Chamfer distance from random model samples (standard-normal
/// coefficients truncated at +-3) to the nearest training shape.
Real specificity(const SSModel& model, int q, int trials, uint64_t seed);

/// File format: one-line JSON header, then little-endian f64 payload (mean,
/// components, variances, training shapes).
void save_ssm(const std::filesystem::path& path, const SSModel& model);
SSModel load_ssm(const std::filesystem::path& path);

} // namespace specmorph
