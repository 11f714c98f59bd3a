#include "specmorph/eigenbasis.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <vector>

#include "specmorph/error.hpp"

namespace specmorph {

namespace {

constexpr Real kShiftEps = 1e-8;
constexpr Real kResidualTol = 1e-6;

void fix_column_signs(Mat& phi) {
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
        Eigen::Index imax = 0;
        Real best = 0.0;
        for (Eigen::Index i = 0; i < phi.rows(); ++i) {
            const Real a = std::abs(phi(i, j));
            if (a > best) {
                best = a;
                imax = i;
            }
        }
        if (phi(imax, j) < 0.0) phi.col(j) = -phi.col(j);
    }
}

struct LanczosResult {
    Mat phi;
    Vec lambda;
    bool converged = false;
};

// Lanczos on the operator K^{-1} M, self-adjoint in the M-inner product,
// where K = L + eps M. Ritz values theta approximate 1/(lambda + eps), so
// the wanted (smallest-lambda) end of the spectrum converges first. The
// constant kernel vector is deflated explicitly: its transformed eigenvalue
// 1/eps would otherwise dwarf the remaining cluster and wash out their
// precision.
LanczosResult lanczos_pass(const SpMat& laplacian, const Vec& mass, int k, int subspace,
                           std::mt19937_64& rng) {
    const Eigen::Index n = laplacian.rows();
    SpMat shifted = laplacian;
    for (Eigen::Index i = 0; i < n; ++i)
        shifted.coeffRef(i, i) += kShiftEps * mass[i];
    shifted.makeCompressed();

    Eigen::SimplicialLDLT<SpMat> solver(shifted);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError("eigenbasis: factorization of shifted Laplacian failed");

    const Vec constant = Vec::Constant(n, 1.0 / std::sqrt(mass.sum()));
    LanczosResult out;
    out.phi.resize(n, k);
    out.lambda.resize(k);
    out.phi.col(0) = constant;
    out.lambda[0] = 0.0;

    const int wanted = k - 1; // non-constant pairs
    const int m = std::min<int>(subspace, static_cast<int>(n) - 1);
    if (wanted > 0 && m < wanted) return out;

    if (wanted > 0) {
        Mat basis(n, m);
        Vec alpha = Vec::Zero(m);
        Vec beta = Vec::Zero(m); // beta[j] links v_j and v_{j+1}

        auto deflate = [&](Vec& w, int cols) {
            w -= constant * constant.dot(mass.cwiseProduct(w));
            if (cols > 0) {
                const Vec coeffs = basis.leftCols(cols).transpose() * mass.cwiseProduct(w);
                w -= basis.leftCols(cols) * coeffs;
            }
        };

        std::normal_distribution<Real> gauss(0.0, 1.0);
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(rng);
        deflate(v, 0);
        v /= std::sqrt(v.dot(mass.cwiseProduct(v)));
        basis.col(0) = v;

        int built = m;
        for (int j = 0; j < m; ++j) {
            Vec w = solver.solve(mass.cwiseProduct(basis.col(j)));
            alpha[j] = w.dot(mass.cwiseProduct(basis.col(j)));
            w -= alpha[j] * basis.col(j);
            if (j > 0) w -= beta[j - 1] * basis.col(j - 1);
            // full reorthogonalization in the M-inner product, applied twice
            deflate(w, j + 1);
            deflate(w, j + 1);
            if (j + 1 < m) {
                const Real norm = std::sqrt(w.dot(mass.cwiseProduct(w)));
                if (norm < 1e-14) {
                    // invariant subspace found; truncate
                    built = j + 1;
                    break;
                }
                beta[j] = norm;
                basis.col(j + 1) = w / norm;
            }
        }

        Mat tri = Mat::Zero(built, built);
        for (int j = 0; j < built; ++j) {
            tri(j, j) = alpha[j];
            if (j + 1 < built) {
                tri(j, j + 1) = beta[j];
                tri(j + 1, j) = beta[j];
            }
        }
        Eigen::SelfAdjointEigenSolver<Mat> es(tri);
        if (es.info() != Eigen::Success)
            throw ConvergenceError("eigenbasis: tridiagonal eigensolve failed");
        if (built < wanted) return out;

        // largest theta <-> smallest lambda
        Mat ritz = basis.leftCols(built) * es.eigenvectors();
        std::vector<int> order(static_cast<size_t>(built));
        for (int i = 0; i < built; ++i) order[static_cast<size_t>(i)] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return es.eigenvalues()[a] > es.eigenvalues()[b];
        });

        for (int i = 0; i < wanted; ++i) {
            const int src = order[static_cast<size_t>(i)];
            const Real theta = es.eigenvalues()[src];
            if (!(theta > 0.0)) return out;
            out.phi.col(i + 1) = ritz.col(src);
            out.lambda[i + 1] = std::max(0.0, 1.0 / theta - kShiftEps);
        }
    }

    // verify the actual generalized residual per pair
    for (int i = 0; i < k; ++i) {
        const Vec mphi = mass.cwiseProduct(out.phi.col(i));
        const Real residual = (laplacian * out.phi.col(i) - out.lambda[i] * mphi).norm();
        const Real denom = mphi.norm();
        if (!(denom > 0.0) || residual / denom > kResidualTol) return out;
    }
    out.converged = true;
    return out;
}

} // namespace

// For meshes small enough that the Krylov space would span most of the
// complement anyway, a dense solve of M^{-1/2} L M^{-1/2} is cheaper and
// immune to exactly repeated eigenvalues (regular solids), where a single
// Lanczos vector sees only one direction per eigenspace.
LanczosResult dense_pass(const SpMat& laplacian, const Vec& mass, int k) {
    const Vec inv_sqrt_mass = mass.cwiseSqrt().cwiseInverse();
    const Mat whitened =
        inv_sqrt_mass.asDiagonal() * Mat(laplacian) * inv_sqrt_mass.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(whitened);
    if (es.info() != Eigen::Success)
        throw ConvergenceError("eigenbasis: dense eigensolve failed");

    LanczosResult out;
    out.phi = inv_sqrt_mass.asDiagonal() * es.eigenvectors().leftCols(k);
    out.lambda = es.eigenvalues().head(k).cwiseMax(0.0);
    for (int i = 0; i < k; ++i) {
        const Vec mphi = mass.cwiseProduct(out.phi.col(i));
        const Real residual = (laplacian * out.phi.col(i) - out.lambda[i] * mphi).norm();
        if (residual / mphi.norm() > kResidualTol) return out;
    }
    out.converged = true;
    return out;
}

EigenBasis compute_eigenbasis(const Operators& ops, int k) {
    const Eigen::Index n = ops.laplacian.rows();
    if (k < 1 || k >= n)
        throw DimensionError("eigenbasis: k = " + std::to_string(k) +
                             " outside [1, n-1] with n = " + std::to_string(n));

    LanczosResult result;
    if (n <= std::max(3 * k + 30, 150)) {
        result = dense_pass(ops.laplacian, ops.mass, k);
        if (!result.converged)
            throw ConvergenceError("eigenbasis: dense pass missed the residual tolerance");
    } else {
        std::mt19937_64 rng(0x5eedULL);
        for (int subspace : {2 * k + 20, 4 * k + 40, static_cast<int>(n)}) {
            result = lanczos_pass(ops.laplacian, ops.mass, k, subspace, rng);
            if (result.converged) break;
        }
        if (!result.converged)
            throw ConvergenceError("eigenbasis: Lanczos did not converge after restarts");
    }

    // ensure ascending eigenvalues (ties keep Ritz order)
    std::vector<int> order(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) order[static_cast<size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return result.lambda[a] < result.lambda[b]; });

    EigenBasis basis;
    basis.k = k;
    basis.mass = ops.mass;
    basis.phi.resize(n, k);
    basis.lambda.resize(k);
    for (int i = 0; i < k; ++i) {
        basis.phi.col(i) = result.phi.col(order[static_cast<size_t>(i)]);
        basis.lambda[i] = result.lambda[order[static_cast<size_t>(i)]];
    }
    fix_column_signs(basis.phi);
    return basis;
}

Mat project(const EigenBasis& basis, MatRef f) {
    if (f.rows() != basis.phi.rows())
        throw DimensionError("project: function has " + std::to_string(f.rows()) +
                             " rows, basis has " + std::to_string(basis.phi.rows()));
    return basis.phi.transpose() * (basis.mass.asDiagonal() * f);
}

Mat unproject(const EigenBasis& basis, MatRef a) {
    if (a.rows() != basis.k)
        throw DimensionError("unproject: coefficients have " + std::to_string(a.rows()) +
                             " rows, basis has k = " + std::to_string(basis.k));
    return basis.phi * a;
}

void save_basis_cache(const std::filesystem::path& path, const EigenBasis& basis) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ParseError("cannot open " + path.string() + " for writing");
    out.write("SPEC1", 5);
    const uint64_t n = static_cast<uint64_t>(basis.phi.rows());
    const uint64_t k = static_cast<uint64_t>(basis.k);
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(reinterpret_cast<const char*>(&k), 8);
    for (Eigen::Index i = 0; i < basis.phi.rows(); ++i)
        for (Eigen::Index j = 0; j < basis.phi.cols(); ++j) {
            const double v = basis.phi(i, j);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
    for (int j = 0; j < basis.k; ++j) {
        const double v = basis.lambda[j];
        out.write(reinterpret_cast<const char*>(&v), 8);
    }
}

EigenBasis load_basis_cache(const std::filesystem::path& path, const Vec& mass) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open basis cache " + path.string());
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, "SPEC1", 5) != 0)
        throw ParseError("basis cache " + path.string() + ": bad magic");
    uint64_t n = 0, k = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    in.read(reinterpret_cast<char*>(&k), 8);
    if (!in || n == 0 || k == 0 || k > n)
        throw ParseError("basis cache " + path.string() + ": bad header");
    if (mass.size() != static_cast<Eigen::Index>(n))
        throw DimensionError("basis cache " + path.string() + ": mass size mismatch");

    EigenBasis basis;
    basis.k = static_cast<int>(k);
    basis.mass = mass;
    basis.phi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < basis.phi.rows(); ++i)
        for (Eigen::Index j = 0; j < basis.phi.cols(); ++j) {
            double v;
            in.read(reinterpret_cast<char*>(&v), 8);
            basis.phi(i, j) = v;
        }
    basis.lambda.resize(static_cast<Eigen::Index>(k));
    for (uint64_t j = 0; j < k; ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), 8);
        basis.lambda[static_cast<Eigen::Index>(j)] = v;
    }
    if (!in)
        throw ParseError("basis cache " + path.string() + ": truncated payload");
    return basis;
}

} // namespace specmorph
