#include "specmorph/correspondence.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "specmorph/adam.hpp"
#include "specmorph/error.hpp"

namespace specmorph {

namespace {

Mat row_softmax(MatRef scores) {
    Mat out(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const Real row_max = scores.row(i).maxCoeff();
        out.row(i) = (scores.row(i).array() - row_max).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

// d(loss)/d(scores) for a row-softmax, given d(loss)/d(probabilities).
Mat row_softmax_backward(MatRef probs, MatRef grad) {
    Mat out(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const Real dot = probs.row(i).dot(grad.row(i));
        out.row(i) = probs.row(i).array() * (grad.row(i).array() - dot);
    }
    return out;
}

Mat normalize_rows(MatRef raw) {
    Mat out(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        const Real norm = raw.row(i).norm();
        if (!(norm > 0.0))
            throw DegenerateError("feature optimization: zero feature row " + std::to_string(i));
        out.row(i) = raw.row(i) / norm;
    }
    return out;
}

// d(loss)/d(raw) for unit-normalized rows r = f / ||f||.
Mat normalize_rows_backward(MatRef raw, MatRef normalized, MatRef grad) {
    Mat out(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        const Real norm = raw.row(i).norm();
        const Real dot = grad.row(i).dot(normalized.row(i));
        out.row(i) = (grad.row(i) - dot * normalized.row(i)) / norm;
    }
    return out;
}

// Implicit differentiation of the per-row normal equations of solve_fmap:
// with H_i = A A^T + lambda diag(m_i) and H_i c_i = A b_i, the adjoint
// u_i = H_i^{-1} g_i yields
//   dL/dA = U^T B - (U^T C + C^T U) A,   dL/dB(row i) = u_i^T A,
// where U stacks the u_i as rows.
void solve_fmap_backward(MatRef a, MatRef b, const ResolventMask& mask, Real lambda_reg,
                         const Mat& c, MatRef grad_c, Mat& d_a, Mat& d_b) {
    const Mat gram = a * a.transpose();
    Mat adjoint(c.rows(), c.cols());
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
        Mat h = gram;
        h.diagonal() += lambda_reg * mask.m.row(i).transpose();
        Eigen::LLT<Mat> llt(h);
        if (llt.info() == Eigen::Success) {
            adjoint.row(i) = llt.solve(grad_c.row(i).transpose()).transpose();
        } else {
            Eigen::LDLT<Mat> ldlt(h);
            if (ldlt.info() != Eigen::Success)
                throw SingularError("solve_fmap gradient: row " + std::to_string(i) +
                                    " system singular");
            adjoint.row(i) = ldlt.solve(grad_c.row(i).transpose()).transpose();
        }
    }
    const Mat mixed = adjoint.transpose() * c; // k_x x k_x
    d_a += adjoint.transpose() * b - (mixed + mixed.transpose()) * a;
    d_b += adjoint * a;
}

} // namespace

void MatchConfig::validate() const {
    if (iters < 1)
        throw DimensionError("match config: iters must be >= 1");
    if (!(temperature > 0.0))
        throw DimensionError("match config: temperature must be positive");
    if (feature_dim < 2)
        throw DimensionError("match config: feature_dim must be >= 2");
    if (!(step_size > 0.0))
        throw DimensionError("match config: step_size must be positive");
    if (lambda_reg < 0.0)
        throw DimensionError("match config: lambda_reg must be non-negative");
}

PointMap soft_correspondence(const FeatureField& f_x, const FeatureField& f_y,
                             Real temperature) {
    if (f_x.dim() != f_y.dim())
        throw DimensionError("soft_correspondence: feature dimensions differ (" +
                             std::to_string(f_x.dim()) + " vs " + std::to_string(f_y.dim()) + ")");
    if (!f_x.normalized || !f_y.normalized)
        throw DimensionError("soft_correspondence: features must be row-normalized");
    if (!(temperature > 0.0))
        throw DimensionError("soft_correspondence: temperature must be positive");
    const Mat scores = (f_x.values * f_y.values.transpose()) / temperature;
    return PointMap::from_soft(row_softmax(scores));
}

FeatureLossResult feature_loss(const EigenBasis& basis_x, const EigenBasis& basis_y,
                               MatRef raw_fx, MatRef raw_fy,
                               const ResolventMask& mask_xy, const ResolventMask& mask_yx,
                               const MatchConfig& cfg, bool with_gradients) {
    const Mat nx = normalize_rows(raw_fx);
    const Mat ny = normalize_rows(raw_fy);

    const Mat scores = nx * ny.transpose();
    const Mat pi_xy = row_softmax(scores / cfg.temperature);
    const Mat pi_yx = row_softmax(scores.transpose() / cfg.temperature);

    const Mat a = project(basis_x, nx); // k_x x d
    const Mat b = project(basis_y, ny); // k_y x d

    FeatureLossResult out;
    out.c_xy = solve_fmap(a, b, mask_xy, cfg.lambda_reg);
    out.c_yx = solve_fmap(b, a, mask_yx, cfg.lambda_reg);
    out.pi_xy = PointMap::from_soft(pi_xy);
    out.pi_yx = PointMap::from_soft(pi_yx);

    const SpectralLossResult loss =
        spectral_loss(out.c_xy, out.c_yx, out.pi_xy, out.pi_yx, basis_x, basis_y, cfg.weights,
                      with_gradients);
    out.value = loss.value;
    if (!with_gradients) return out;

    Mat d_nx = Mat::Zero(nx.rows(), nx.cols());
    Mat d_ny = Mat::Zero(ny.rows(), ny.cols());

    Mat d_a = Mat::Zero(a.rows(), a.cols());
    Mat d_b = Mat::Zero(b.rows(), b.cols());
    solve_fmap_backward(a, b, mask_xy, cfg.lambda_reg, out.c_xy.c, loss.d_cxy, d_a, d_b);
    solve_fmap_backward(b, a, mask_yx, cfg.lambda_reg, out.c_yx.c, loss.d_cyx, d_b, d_a);
    d_nx += basis_x.mass.asDiagonal() * (basis_x.phi * d_a);
    d_ny += basis_y.mass.asDiagonal() * (basis_y.phi * d_b);

    const Mat d_scores = (row_softmax_backward(pi_xy, loss.d_pixy) +
                          row_softmax_backward(pi_yx, loss.d_piyx).transpose()) /
                         cfg.temperature;
    d_nx += d_scores * ny;
    d_ny += d_scores.transpose() * nx;

    out.d_fx = normalize_rows_backward(raw_fx, nx, d_nx);
    out.d_fy = normalize_rows_backward(raw_fy, ny, d_ny);
    return out;
}

MatchResult optimize_features(const EigenBasis& basis_x, const EigenBasis& basis_y,
                              const FeatureField& init_x, const FeatureField& init_y,
                              const MatchConfig& cfg) {
    cfg.validate();
    if (basis_x.k != basis_y.k)
        throw DimensionError("optimize_features: bases must share k");
    if (init_x.dim() != init_y.dim())
        throw DimensionError("optimize_features: init feature dimensions differ");
    if (!init_x.values.allFinite() || !init_y.values.allFinite())
        throw DimensionError("optimize_features: non-finite init features");

    const ResolventMask mask_xy = resolvent_mask(basis_x.lambda, basis_y.lambda, cfg.gamma);
    const ResolventMask mask_yx = resolvent_mask(basis_y.lambda, basis_x.lambda, cfg.gamma);

    Mat fx = init_x.values;
    Mat fy = init_y.values;
    AdamState adam_x(fx.rows(), fx.cols());
    AdamState adam_y(fy.rows(), fy.cols());

    MatchResult result;
    result.best_loss = std::numeric_limits<Real>::infinity();
    result.loss_trace.reserve(static_cast<size_t>(cfg.iters));

    for (int it = 0; it < cfg.iters; ++it) {
        FeatureLossResult eval =
            feature_loss(basis_x, basis_y, fx, fy, mask_xy, mask_yx, cfg);
        if (!std::isfinite(eval.value))
            throw ConvergenceError("optimize_features: loss became non-finite at iteration " +
                                   std::to_string(it));
        result.loss_trace.push_back(eval.value);
        if (eval.value < result.best_loss) {
            result.best_loss = eval.value;
            result.best_iter = it;
            result.features_x = FeatureField{normalize_rows(fx), true};
            result.features_y = FeatureField{normalize_rows(fy), true};
            result.c_xy = std::move(eval.c_xy);
            result.c_yx = std::move(eval.c_yx);
            result.pi_xy = std::move(eval.pi_xy);
            result.pi_yx = std::move(eval.pi_yx);
        }
        if (it + 1 < cfg.iters) {
            adam_x.step(fx, eval.d_fx, cfg.step_size);
            adam_y.step(fy, eval.d_fy, cfg.step_size);
        }
    }
    return result;
}

} // namespace specmorph
