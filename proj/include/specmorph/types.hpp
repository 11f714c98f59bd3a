#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace specmorph {

using Real = double;

using Mat = Eigen::MatrixXd;
using Mat3 = Eigen::Matrix<Real, Eigen::Dynamic, 3>;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;
using IdxVec = Eigen::VectorXi;
using SpMat = Eigen::SparseMatrix<Real>;

using MatRef = Eigen::Ref<const Mat>;
using Mat3Ref = Eigen::Ref<const Mat3>;
using VecRef = Eigen::Ref<const Vec>;

} // namespace specmorph
