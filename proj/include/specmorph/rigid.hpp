#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "specmorph/types.hpp"

namespace specmorph {

/// Proper rotation maximizing trace(R * covariance) (Kabsch with the
/// reflection case fixed through the determinant sign).
inline Eigen::Matrix3d kabsch_rotation(const Eigen::Matrix3d& covariance) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(covariance,
                                          Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixV() * svd.matrixU().transpose();
    if (r.determinant() < 0.0) {
        Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixV() * flip * svd.matrixU().transpose();
    }
    return r;
}

/// Rigid transform (rotation + translation, no scaling) taking `source` rows
/// as close as possible to `target` rows in the least-squares sense.
struct RigidTransform {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();

    Mat3 apply(Mat3Ref points) const {
        return (points * rotation.transpose()).rowwise() + translation.transpose();
    }
};

inline RigidTransform rigid_align(Mat3Ref source, Mat3Ref target) {
    const Vec3 mu_s = source.colwise().mean();
    const Vec3 mu_t = target.colwise().mean();
    const Mat3 sc = source.rowwise() - mu_s.transpose();
    const Mat3 tc = target.rowwise() - mu_t.transpose();
    RigidTransform out;
    out.rotation = kabsch_rotation(sc.transpose() * tc);
    out.translation = mu_t - out.rotation * mu_s;
    return out;
}

} // namespace specmorph
