#include <doctest.h>

#include <filesystem>
#include <random>

#include "specmorph/error.hpp"
#include "specmorph/fmap.hpp"
#include "support/finite_diff.hpp"
#include "support/test_shapes.hpp"

using namespace specmorph;

namespace {

// synthetic mass-orthonormal basis for loss-level tests
EigenBasis synthetic_basis(Eigen::Index n, int k, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> mass_dist(0.5, 2.0);
    std::normal_distribution<Real> gauss(0.0, 1.0);

    EigenBasis basis;
    basis.k = k;
    basis.mass.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) basis.mass[i] = mass_dist(rng);
    basis.phi.resize(n, k);
    for (int j = 0; j < k; ++j) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(rng);
        for (int p = 0; p < j; ++p)
            v -= basis.phi.col(p).dot(basis.mass.cwiseProduct(v)) * basis.phi.col(p);
        basis.phi.col(j) = v / std::sqrt(v.dot(basis.mass.cwiseProduct(v)));
    }
    basis.lambda = Vec::LinSpaced(k, 0.0, static_cast<Real>(k - 1));
    return basis;
}

Mat random_row_stochastic(Eigen::Index rows, Eigen::Index cols, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Real> uniform(0.05, 1.0);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng);
        m.row(i) /= m.row(i).sum();
    }
    return m;
}

Real fmap_objective(MatRef a, MatRef b, const ResolventMask& mask, Real lambda_reg,
                    const Mat& c) {
    return (c * a - b).squaredNorm() + lambda_reg * (c.array().square() * mask.m.array()).sum();
}

} // namespace

TEST_CASE("resolvent mask closed form") {
    Vec lambda(2);
    lambda << 0.0, 1.0;
    const ResolventMask mask = resolvent_mask(lambda, lambda, 0.5);
    CHECK(mask.m(0, 0) == 0.0);
    CHECK(mask.m(1, 1) == 0.0);
    // lambda = 0: (re, im) = (0, 1); lambda = 1: (1/2, 1/2)
    CHECK(mask.m(0, 1) == doctest::Approx(0.5));
    CHECK(mask.m(1, 0) == doctest::Approx(0.5));
    CHECK(mask.m.minCoeff() >= 0.0);
}

TEST_CASE("equal eigenvalues zero the mask exactly") {
    Vec lx(3), ly(3);
    lx << 0.0, 1.7, 3.2;
    ly << 1.7, 3.2, 9.0;
    const ResolventMask mask = resolvent_mask(lx, ly, 0.5);
    CHECK(mask.m(0, 1) == 0.0);
    CHECK(mask.m(1, 2) == 0.0);
}

TEST_CASE("solve_fmap recovers the identity and a planted map") {
    std::mt19937_64 rng(11);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    Mat a(5, 8);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i / 8, i % 8) = gauss(rng);

    ResolventMask mask;
    mask.m = Mat::Zero(5, 5);

    SUBCASE("identity when A = B") {
        const FunctionalMap c = solve_fmap(a, a, mask, 0.0);
        CHECK((c.c - Mat::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
    }

    SUBCASE("planted Q") {
        Mat q(5, 5);
        for (Eigen::Index i = 0; i < q.size(); ++i) q(i / 5, i % 5) = gauss(rng);
        const FunctionalMap c = solve_fmap(a, q * a, mask, 0.0);
        CHECK((c.c - q).norm() < 1e-8);
    }

    SUBCASE("huge regularization with a positive mask drives C to zero") {
        mask.m = Mat::Ones(5, 5);
        const FunctionalMap c = solve_fmap(a, a, mask, 1e14);
        CHECK(c.c.cwiseAbs().maxCoeff() < 1e-6);
    }

    SUBCASE("rank-deficient unregularized system is singular") {
        Mat flat = Mat::Zero(5, 8); // A A^T = 0
        CHECK_THROWS_AS(solve_fmap(flat, flat, mask, 0.0), SingularError);
    }
}

TEST_CASE("solve_fmap returns the global minimizer") {
    std::mt19937_64 rng(23);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    Mat a(4, 9), b(4, 9);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i / 9, i % 9) = gauss(rng);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i / 9, i % 9) = gauss(rng);
    Vec lx = Vec::LinSpaced(4, 0.0, 3.0), ly = Vec::LinSpaced(4, 0.5, 3.5);
    const ResolventMask mask = resolvent_mask(lx, ly, 0.5);
    const FunctionalMap c = solve_fmap(a, b, mask, 2.0);
    const Real at_minimum = fmap_objective(a, b, mask, 2.0, c.c);
    for (int trial = 0; trial < 100; ++trial) {
        Mat perturbed = c.c;
        for (Eigen::Index i = 0; i < perturbed.size(); ++i)
            perturbed(i / 4, i % 4) += 1e-3 * gauss(rng);
        CHECK(fmap_objective(a, b, mask, 2.0, perturbed) >= at_minimum);
    }
}

TEST_CASE("fmap_to_pointmap with the identity map") {
    const EigenBasis basis = synthetic_basis(12, 5, 31);
    FunctionalMap identity;
    identity.c = Mat::Identity(5, 5);

    SUBCASE("identical bases give the identity point map") {
        const PointMap map = fmap_to_pointmap(identity, basis, basis);
        for (Eigen::Index i = 0; i < 12; ++i) CHECK(map.hard[i] == i);
    }

    SUBCASE("permuted X basis composes the permutation") {
        std::vector<int> perm = {4, 7, 0, 2, 9, 11, 1, 3, 10, 5, 8, 6};
        EigenBasis permuted = basis;
        for (Eigen::Index i = 0; i < 12; ++i) {
            permuted.phi.row(perm[static_cast<size_t>(i)]) = basis.phi.row(i);
            permuted.mass[perm[static_cast<size_t>(i)]] = basis.mass[i];
        }
        const PointMap base_map = fmap_to_pointmap(identity, basis, basis);
        const PointMap perm_map = fmap_to_pointmap(identity, permuted, basis);
        for (Eigen::Index i = 0; i < 12; ++i)
            CHECK(perm_map.hard[i] == perm[static_cast<size_t>(base_map.hard[i])]);
    }

    SUBCASE("constant-only basis ties to index 0") {
        EigenBasis tiny = basis;
        tiny.k = 1;
        tiny.phi = Mat::Constant(12, 1, 0.3);
        tiny.lambda = Vec::Zero(1);
        FunctionalMap one;
        one.c = Mat::Identity(1, 1);
        const PointMap map = fmap_to_pointmap(one, tiny, tiny);
        for (Eigen::Index i = 0; i < 12; ++i) CHECK(map.hard[i] == 0);
    }
}

TEST_CASE("pointmap_to_fmap") {
    const EigenBasis basis = synthetic_basis(14, 6, 37);

    SUBCASE("identity point map gives the identity functional map") {
        const FunctionalMap c = pointmap_to_fmap(PointMap::identity(14), basis, basis);
        CHECK((c.c - Mat::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
    }

    SUBCASE("uniform soft rows map everything onto constants") {
        // uniform averaging sends every function to a constant, so the
        // output coefficients live on the constant mode: only the first row
        // of C survives
        const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(1), 0.1);
        const EigenBasis real_basis = compute_eigenbasis(build_operators(mesh), 5);
        const Eigen::Index n = real_basis.size();
        const PointMap uniform =
            PointMap::from_soft(Mat::Constant(n, n, 1.0 / static_cast<Real>(n)));
        const FunctionalMap c = pointmap_to_fmap(uniform, real_basis, real_basis);
        CHECK(c.c.bottomRows(4).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(c.c.row(0).cwiseAbs().maxCoeff() > 0.0);
    }

    SUBCASE("conversion round trip stays within truncation error at k = 50") {
        const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(2), 0.12);
        const Eigen::Index n = mesh.vertex_count();
        std::vector<int> perm(static_cast<size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            perm[static_cast<size_t>(i)] = static_cast<int>((i * 733 + 5) % n);
        Mesh permuted = mesh;
        for (Eigen::Index i = 0; i < n; ++i)
            permuted.vertices.row(perm[static_cast<size_t>(i)]) = mesh.vertices.row(i);
        for (Eigen::Index f = 0; f < mesh.face_count(); ++f)
            for (int c = 0; c < 3; ++c)
                permuted.faces(f, c) = perm[static_cast<size_t>(mesh.faces(f, c))];

        const EigenBasis basis_x = compute_eigenbasis(build_operators(mesh), 50);
        const EigenBasis basis_y = compute_eigenbasis(build_operators(permuted), 50);
        // ground-truth map Y -> X: vertex perm[i] of Y corresponds to i of X
        IdxVec gt(n);
        for (Eigen::Index i = 0; i < n; ++i) gt[perm[static_cast<size_t>(i)]] = static_cast<int>(i);
        const PointMap pi_yx = PointMap::from_hard(gt);

        const FunctionalMap c_gt = pointmap_to_fmap(pi_yx, basis_x, basis_y);
        const PointMap converted = fmap_to_pointmap(c_gt, basis_x, basis_y);
        const FunctionalMap c_back = pointmap_to_fmap(converted, basis_x, basis_y);
        CHECK((c_back.c - c_gt.c).norm() / c_gt.c.norm() <= 0.1);

        // exact isometry with equal bases: C is approximately orthogonal
        const Mat gram = c_gt.c.transpose() * c_gt.c;
        CHECK((gram - Mat::Identity(50, 50)).norm() / std::sqrt(50.0) <= 0.1);
    }
}

TEST_CASE("spectral loss values") {
    const EigenBasis basis = synthetic_basis(10, 2, 41);
    SpectralWeights weights; // all ones

    SUBCASE("exact identity configuration scores zero") {
        FunctionalMap identity;
        identity.c = Mat::Identity(2, 2);
        const PointMap pi = PointMap::identity(10);
        const SpectralLossResult loss =
            spectral_loss(identity, identity, pi, pi, basis, basis, weights);
        CHECK(loss.value == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("2I / I/2 pair: bijectivity zero, orthogonality by hand") {
        FunctionalMap big, small;
        big.c = 2.0 * Mat::Identity(2, 2);
        small.c = 0.5 * Mat::Identity(2, 2);
        weights.couple = 0.0;
        const PointMap pi = PointMap::identity(10);
        const SpectralLossResult loss =
            spectral_loss(big, small, pi, pi, basis, basis, weights);
        CHECK(loss.bij == doctest::Approx(0.0).epsilon(1e-12));
        // ||(4-1) I||^2 + ||(1/4 - 1) I||^2 over 2x2 identities
        CHECK(loss.orth == doctest::Approx(2.0 * (9.0 + 9.0 / 16.0)));
        CHECK(loss.value == doctest::Approx(loss.orth));
    }

    SUBCASE("loss is non-negative on random inputs") {
        std::mt19937_64 rng(5);
        std::normal_distribution<Real> gauss(0.0, 1.0);
        for (int trial = 0; trial < 20; ++trial) {
            FunctionalMap cxy, cyx;
            cxy.c.resize(2, 2);
            cyx.c.resize(2, 2);
            for (int i = 0; i < 4; ++i) {
                cxy.c(i / 2, i % 2) = gauss(rng);
                cyx.c(i / 2, i % 2) = gauss(rng);
            }
            const PointMap pi_xy = PointMap::from_soft(random_row_stochastic(10, 10, 100 + trial));
            const PointMap pi_yx = PointMap::from_soft(random_row_stochastic(10, 10, 200 + trial));
            const SpectralLossResult loss =
                spectral_loss(cxy, cyx, pi_xy, pi_yx, basis, basis, weights);
            CHECK(loss.value >= 0.0);
        }
    }
}

TEST_CASE("spectral loss gradients match finite differences") {
    const EigenBasis basis_x = synthetic_basis(9, 4, 51);
    const EigenBasis basis_y = synthetic_basis(11, 4, 53);
    SpectralWeights weights;
    weights.bij = 1.3;
    weights.orth = 0.7;
    weights.structural = 1.1;
    weights.couple = 0.9;

    std::mt19937_64 rng(59);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    Mat cxy0(4, 4), cyx0(4, 4);
    for (int i = 0; i < 16; ++i) {
        cxy0(i / 4, i % 4) = gauss(rng);
        cyx0(i / 4, i % 4) = gauss(rng);
    }
    const Mat pixy0 = random_row_stochastic(9, 11, 61);
    const Mat piyx0 = random_row_stochastic(11, 9, 67);

    auto eval = [&](const Mat& cxy, const Mat& cyx, const Mat& pixy, const Mat& piyx) {
        FunctionalMap a{cxy}, b{cyx};
        return spectral_loss(a, b, PointMap::from_soft(pixy), PointMap::from_soft(piyx),
                             basis_x, basis_y, weights, false)
            .value;
    };

    FunctionalMap a{cxy0}, b{cyx0};
    const SpectralLossResult analytic =
        spectral_loss(a, b, PointMap::from_soft(pixy0), PointMap::from_soft(piyx0), basis_x,
                      basis_y, weights);

    const Vec fd_cxy = testfd::central_gradient(
        [&](const Vec& v) { return eval(testfd::unflatten(v, 4, 4), cyx0, pixy0, piyx0); },
        testfd::flatten(cxy0));
    CHECK(testfd::relative_error(testfd::flatten(analytic.d_cxy), fd_cxy) <= 1e-4);

    const Vec fd_cyx = testfd::central_gradient(
        [&](const Vec& v) { return eval(cxy0, testfd::unflatten(v, 4, 4), pixy0, piyx0); },
        testfd::flatten(cyx0));
    CHECK(testfd::relative_error(testfd::flatten(analytic.d_cyx), fd_cyx) <= 1e-4);

    const Vec fd_pixy = testfd::central_gradient(
        [&](const Vec& v) { return eval(cxy0, cyx0, testfd::unflatten(v, 9, 11), piyx0); },
        testfd::flatten(pixy0));
    CHECK(testfd::relative_error(testfd::flatten(analytic.d_pixy), fd_pixy) <= 1e-4);

    const Vec fd_piyx = testfd::central_gradient(
        [&](const Vec& v) { return eval(cxy0, cyx0, pixy0, testfd::unflatten(v, 11, 9)); },
        testfd::flatten(piyx0));
    CHECK(testfd::relative_error(testfd::flatten(analytic.d_piyx), fd_piyx) <= 1e-4);
}

TEST_CASE("functional map file round-trip") {
    FunctionalMap map;
    map.c = Mat::Random(7, 5);
    const auto path = std::filesystem::temp_directory_path() / "specmorph_fmap.bin";
    save_fmap(path, map);
    const FunctionalMap back = load_fmap(path);
    CHECK(back.k_y() == 7);
    CHECK(back.k_x() == 5);
    CHECK((back.c - map.c).norm() == 0.0);
    std::filesystem::remove(path);
}
