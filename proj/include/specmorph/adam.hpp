#pragma once

#include <cmath>

#include "specmorph/types.hpp"

namespace specmorph {

/// Standard Adam moments over a matrix of parameters (beta1 = 0.9,
/// beta2 = 0.999, eps = 1e-8).
class AdamState {
public:
    AdamState(Eigen::Index rows, Eigen::Index cols)
        : m_(Mat::Zero(rows, cols)), v_(Mat::Zero(rows, cols)) {}

    void step(Eigen::Ref<Mat> params, MatRef grad, Real lr) {
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
        const Real bc1 = 1.0 - std::pow(beta1_, t_);
        const Real bc2 = 1.0 - std::pow(beta2_, t_);
        params -= (lr / bc1) * m_.cwiseQuotient(((v_ / bc2).cwiseSqrt().array() + eps_).matrix());
    }

private:
    Mat m_, v_;
    int t_ = 0;
    Real beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

/// Rotation-equivariant Adam variant for per-vertex 3-vectors: the second
/// moment accumulates the squared row norm instead of per-coordinate squares,
/// so update directions are equivariant under global rotations.
class VectorAdamState {
public:
    explicit VectorAdamState(Eigen::Index rows)
        : m_(Mat::Zero(rows, 3)), v_(Vec::Zero(rows)) {}

    void step(Eigen::Ref<Mat3> params, Mat3Ref grad, Real lr) {
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.rowwise().squaredNorm();
        const Real bc1 = 1.0 - std::pow(beta1_, t_);
        const Real bc2 = 1.0 - std::pow(beta2_, t_);
        const Vec denom = ((v_ / bc2).cwiseSqrt().array() + eps_).matrix();
        params -= (lr / bc1) * denom.cwiseInverse().asDiagonal() * m_;
    }

private:
    Mat m_;
    Vec v_;
    int t_ = 0;
    Real beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

} // namespace specmorph
