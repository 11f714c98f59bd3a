#include "specmorph/fmap.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "specmorph/error.hpp"

namespace specmorph {

namespace {

Real resolvent_re(Real lambda, Real gamma) {
    const Real lg = std::pow(lambda, gamma);
    return lg / (lg * lg + 1.0);
}

Real resolvent_im(Real lambda, Real gamma) {
    const Real lg = std::pow(lambda, gamma);
    return 1.0 / (lg * lg + 1.0);
}

} // namespace

ResolventMask resolvent_mask(VecRef lambda_x, VecRef lambda_y, Real gamma) {
    if (!(gamma > 0.0))
        throw DimensionError("resolvent_mask: gamma must be positive");
    ResolventMask mask;
    mask.gamma = gamma;
    mask.m.resize(lambda_y.size(), lambda_x.size());
    for (Eigen::Index i = 0; i < lambda_y.size(); ++i) {
        const Real re_y = resolvent_re(lambda_y[i], gamma);
        const Real im_y = resolvent_im(lambda_y[i], gamma);
        for (Eigen::Index j = 0; j < lambda_x.size(); ++j) {
            const Real dre = re_y - resolvent_re(lambda_x[j], gamma);
            const Real dim = im_y - resolvent_im(lambda_x[j], gamma);
            mask.m(i, j) = dre * dre + dim * dim;
        }
    }
    return mask;
}

FunctionalMap solve_fmap(MatRef a, MatRef b, const ResolventMask& mask, Real lambda_reg) {
    if (a.cols() != b.cols())
        throw DimensionError("solve_fmap: descriptor dimension mismatch (" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
    if (mask.m.rows() != b.rows() || mask.m.cols() != a.rows())
        throw DimensionError("solve_fmap: mask shape mismatch");
    if (lambda_reg < 0.0)
        throw DimensionError("solve_fmap: lambda_reg must be non-negative");

    const Mat gram = a * a.transpose(); // k_x x k_x
    FunctionalMap map;
    map.c.resize(b.rows(), a.rows());
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
        Mat h = gram;
        h.diagonal() += lambda_reg * mask.m.row(i).transpose();
        const Vec rhs = a * b.row(i).transpose();

        Eigen::LLT<Mat> llt(h);
        Vec c_i;
        if (llt.info() == Eigen::Success) {
            c_i = llt.solve(rhs);
        } else {
            Eigen::LDLT<Mat> ldlt(h);
            const Real pivot_max = ldlt.vectorD().cwiseAbs().maxCoeff();
            const Real pivot_min = ldlt.vectorD().cwiseAbs().minCoeff();
            if (ldlt.info() != Eigen::Success || !(pivot_max > 0.0) ||
                pivot_min < 1e-12 * pivot_max)
                throw SingularError("solve_fmap: row " + std::to_string(i) + " system singular");
            c_i = ldlt.solve(rhs);
        }
        const Real residual = (h * c_i - rhs).norm();
        if (!c_i.allFinite() || residual > 1e-8 * (rhs.norm() + 1.0))
            throw SingularError("solve_fmap: row " + std::to_string(i) + " system singular");
        map.c.row(i) = c_i.transpose();
    }
    return map;
}

PointMap fmap_to_pointmap(const FunctionalMap& c, const EigenBasis& basis_x,
                          const EigenBasis& basis_y) {
    if (c.k_x() != basis_x.k || c.k_y() != basis_y.k)
        throw DimensionError("fmap_to_pointmap: map is " + std::to_string(c.k_y()) + "x" +
                             std::to_string(c.k_x()) + ", bases have k = " +
                             std::to_string(basis_y.k) + ", " + std::to_string(basis_x.k));

    const Mat embedded = basis_y.phi * c.c; // n_y x k_x
    const Mat& target = basis_x.phi;        // n_x x k_x
    const Vec target_norms = target.rowwise().squaredNorm();
    const Mat gram = embedded * target.transpose(); // n_y x n_x

    IdxVec hard(embedded.rows());
    for (Eigen::Index i = 0; i < embedded.rows(); ++i) {
        Eigen::Index best = 0;
        Real best_value = target_norms[0] - 2.0 * gram(i, 0);
        for (Eigen::Index j = 1; j < target.rows(); ++j) {
            const Real value = target_norms[j] - 2.0 * gram(i, j);
            if (value < best_value) {
                best_value = value;
                best = j;
            }
        }
        hard[i] = static_cast<int>(best);
    }
    return PointMap::from_hard(std::move(hard));
}

FunctionalMap pointmap_to_fmap(const PointMap& pi_yx, const EigenBasis& basis_x,
                               const EigenBasis& basis_y) {
    if (pi_yx.source_count() != basis_y.size())
        throw DimensionError("pointmap_to_fmap: map has " +
                             std::to_string(pi_yx.source_count()) + " source rows, basis has " +
                             std::to_string(basis_y.size()));
    FunctionalMap map;
    map.c = project(basis_y, apply_pointmap(pi_yx, basis_x.phi));
    return map;
}

SpectralLossResult spectral_loss(const FunctionalMap& c_xy, const FunctionalMap& c_yx,
                                 const PointMap& pi_xy, const PointMap& pi_yx,
                                 const EigenBasis& basis_x, const EigenBasis& basis_y,
                                 const SpectralWeights& weights, bool with_gradients) {
    if (c_xy.k_x() != c_yx.k_y() || c_xy.k_y() != c_yx.k_x())
        throw DimensionError("spectral_loss: functional map shapes incompatible");
    if (c_xy.k_x() != basis_x.k || c_xy.k_y() != basis_y.k)
        throw DimensionError("spectral_loss: maps do not match basis sizes");

    const Mat& cxy = c_xy.c;
    const Mat& cyx = c_yx.c;
    SpectralLossResult out;
    out.d_cxy = Mat::Zero(cxy.rows(), cxy.cols());
    out.d_cyx = Mat::Zero(cyx.rows(), cyx.cols());

    const Mat bij_y = cxy * cyx - Mat::Identity(cxy.rows(), cxy.rows());
    const Mat bij_x = cyx * cxy - Mat::Identity(cyx.rows(), cyx.rows());
    out.bij = bij_y.squaredNorm() + bij_x.squaredNorm();

    const Mat orth_xy = cxy.transpose() * cxy - Mat::Identity(cxy.cols(), cxy.cols());
    const Mat orth_yx = cyx.transpose() * cyx - Mat::Identity(cyx.cols(), cyx.cols());
    out.orth = orth_xy.squaredNorm() + orth_yx.squaredNorm();

    const Mat coupled_yx = pointmap_to_fmap(pi_yx, basis_x, basis_y).c; // vs C_XY
    const Mat coupled_xy = pointmap_to_fmap(pi_xy, basis_y, basis_x).c; // vs C_YX
    const Mat diff_xy = cxy - coupled_yx;
    const Mat diff_yx = cyx - coupled_xy;
    out.couple = diff_xy.squaredNorm() + diff_yx.squaredNorm();

    const Real w_bij = weights.structural * weights.bij;
    const Real w_orth = weights.structural * weights.orth;
    out.value = w_bij * out.bij + w_orth * out.orth + weights.couple * out.couple;

    if (!with_gradients) return out;

    out.d_cxy += w_bij * 2.0 * (bij_y * cyx.transpose() + cyx.transpose() * bij_x);
    out.d_cyx += w_bij * 2.0 * (cxy.transpose() * bij_y + bij_x * cxy.transpose());

    out.d_cxy += w_orth * 4.0 * (cxy * orth_xy);
    out.d_cyx += w_orth * 4.0 * (cyx * orth_yx);

    out.d_cxy += weights.couple * 2.0 * diff_xy;
    out.d_cyx += weights.couple * 2.0 * diff_yx;

    // The coupling term also differentiates through soft point maps:
    // d/dPi ||C - Phi^T M Pi Phi'||^2 = -2 M Phi (C - ...) Phi'^T.
    if (pi_yx.kind == PointMap::Kind::Soft) {
        out.d_piyx = weights.couple * -2.0 *
                     (basis_y.mass.asDiagonal() * basis_y.phi) * diff_xy *
                     basis_x.phi.transpose();
    }
    if (pi_xy.kind == PointMap::Kind::Soft) {
        out.d_pixy = weights.couple * -2.0 *
                     (basis_x.mass.asDiagonal() * basis_x.phi) * diff_yx *
                     basis_y.phi.transpose();
    }
    return out;
}

void save_fmap(const std::filesystem::path& path, const FunctionalMap& map) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ParseError("cannot open " + path.string() + " for writing");
    out.write("FMAP1", 5);
    const uint64_t ky = static_cast<uint64_t>(map.k_y());
    const uint64_t kx = static_cast<uint64_t>(map.k_x());
    out.write(reinterpret_cast<const char*>(&ky), 8);
    out.write(reinterpret_cast<const char*>(&kx), 8);
    for (Eigen::Index i = 0; i < map.c.rows(); ++i)
        for (Eigen::Index j = 0; j < map.c.cols(); ++j) {
            const double v = map.c(i, j);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
}

FunctionalMap load_fmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open functional map " + path.string());
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "FMAP1", 5) != 0)
        throw ParseError("functional map " + path.string() + ": bad magic");
    uint64_t ky = 0, kx = 0;
    in.read(reinterpret_cast<char*>(&ky), 8);
    in.read(reinterpret_cast<char*>(&kx), 8);
    if (!in || ky == 0 || kx == 0)
        throw ParseError("functional map " + path.string() + ": bad header");
    FunctionalMap map;
    map.c.resize(static_cast<Eigen::Index>(ky), static_cast<Eigen::Index>(kx));
    for (Eigen::Index i = 0; i < map.c.rows(); ++i)
        for (Eigen::Index j = 0; j < map.c.cols(); ++j) {
            double v;
            in.read(reinterpret_cast<char*>(&v), 8);
            map.c(i, j) = v;
        }
    if (!in)
        throw ParseError("functional map " + path.string() + ": truncated payload");
    return map;
}

} // namespace specmorph
