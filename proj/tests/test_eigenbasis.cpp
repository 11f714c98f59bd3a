#include <doctest.h>

#include <filesystem>

#include "specmorph/eigenbasis.hpp"
#include "specmorph/error.hpp"
#include "support/test_shapes.hpp"

using namespace specmorph;

namespace {

EigenBasis sphere_basis(int subdiv, int k) {
    const Mesh sphere = testshapes::make_icosphere(subdiv);
    return compute_eigenbasis(build_operators(sphere), k);
}

} // namespace

TEST_CASE("sphere spectrum approximates l(l+1)") {
    // unit sphere eigenvalues: 0, then 2 (x3), 6 (x5), 12 (x7)
    const EigenBasis basis = sphere_basis(3, 16);
    CHECK(basis.lambda[0] <= 1e-6);
    for (int i = 1; i <= 3; ++i) CHECK(basis.lambda[i] == doctest::Approx(2.0).epsilon(0.05));
    for (int i = 4; i <= 8; ++i) CHECK(basis.lambda[i] == doctest::Approx(6.0).epsilon(0.05));
    for (int i = 9; i <= 15; ++i) CHECK(basis.lambda[i] == doctest::Approx(12.0).epsilon(0.05));
}

TEST_CASE("first eigenfunction is the constant 1/sqrt(area)") {
    const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(2), 0.1);
    const EigenBasis basis = compute_eigenbasis(build_operators(mesh), 8);
    const Real expected = 1.0 / std::sqrt(total_surface_area(mesh));
    CHECK((basis.phi.col(0).array() - expected).abs().maxCoeff() < 1e-6);
}

TEST_CASE("basis is mass-orthonormal with non-decreasing eigenvalues") {
    const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(2), 0.12);
    const EigenBasis basis = compute_eigenbasis(build_operators(mesh), 20);
    const Mat gram = basis.phi.transpose() * basis.mass.asDiagonal() * basis.phi;
    CHECK((gram - Mat::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-8);
    for (int i = 1; i < 20; ++i) CHECK(basis.lambda[i] >= basis.lambda[i - 1]);
    // sign convention: largest-magnitude entry positive
    for (int j = 0; j < 20; ++j) {
        Eigen::Index imax;
        basis.phi.col(j).cwiseAbs().maxCoeff(&imax);
        CHECK(basis.phi(imax, j) > 0.0);
    }
}

TEST_CASE("k outside [1, n-1] is a dimension error") {
    const Mesh tri = testshapes::make_triangle();
    const Operators ops = build_operators(tri);
    CHECK_THROWS_AS(compute_eigenbasis(ops, 3), DimensionError);
    CHECK_THROWS_AS(compute_eigenbasis(ops, 0), DimensionError);
    CHECK_NOTHROW(compute_eigenbasis(ops, 2));
}

TEST_CASE("projection identities") {
    const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(2), 0.1);
    const EigenBasis basis = compute_eigenbasis(build_operators(mesh), 10);

    SUBCASE("eigenfunction projects to a unit coordinate vector") {
        const Mat coeffs = project(basis, basis.phi.col(3));
        Vec expected = Vec::Zero(10);
        expected[3] = 1.0;
        CHECK((coeffs.col(0) - expected).cwiseAbs().maxCoeff() < 1e-8);
    }

    SUBCASE("constant projects to (c sqrt(area), 0, ...)") {
        const Real c = 2.5;
        const Real area = total_surface_area(mesh);
        const Mat coeffs = project(basis, Mat::Constant(mesh.vertex_count(), 1, c));
        CHECK(coeffs(0, 0) == doctest::Approx(c * std::sqrt(area)).epsilon(1e-6));
        CHECK(coeffs.col(0).tail(9).cwiseAbs().maxCoeff() < 1e-6);
    }

    SUBCASE("project of unproject is the identity on coefficients") {
        Mat a = Mat::Random(10, 4);
        const Mat again = project(basis, unproject(basis, a));
        CHECK((again - a).cwiseAbs().maxCoeff() < 1e-8);
    }

    SUBCASE("unproject(project(f)) is an M-orthogonal projection") {
        const Mat f = mesh.vertices; // any vertex function
        const Mat filtered = unproject(basis, project(basis, f));
        const Mat residual = f - filtered;
        // residual orthogonal to span(phi) under the M-inner product
        const Mat inner = basis.phi.transpose() * basis.mass.asDiagonal() * residual;
        CHECK(inner.cwiseAbs().maxCoeff() < 1e-6);
    }

    SUBCASE("zero coefficients give the zero function") {
        CHECK(unproject(basis, Mat::Zero(10, 2)).norm() == 0.0);
    }

    SUBCASE("wrong row counts raise dimension errors") {
        CHECK_THROWS_AS(project(basis, Mat::Zero(mesh.vertex_count() + 1, 1)), DimensionError);
        CHECK_THROWS_AS(unproject(basis, Mat::Zero(11, 1)), DimensionError);
    }
}

TEST_CASE("spectrum is rigid-motion invariant and scales as 1/s^2") {
    const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(2), 0.1);
    const EigenBasis base = compute_eigenbasis(build_operators(mesh), 12);

    Mesh moved = mesh;
    const Real angle = 0.83;
    Eigen::Matrix3d rot;
    rot << std::cos(angle), -std::sin(angle), 0, std::sin(angle), std::cos(angle), 0, 0, 0, 1;
    moved.vertices = (mesh.vertices * rot.transpose()).rowwise() + Eigen::RowVector3d(3, -2, 1);
    const EigenBasis rotated = compute_eigenbasis(build_operators(moved), 12);
    for (int i = 1; i < 12; ++i)
        CHECK(rotated.lambda[i] ==
              doctest::Approx(base.lambda[i]).epsilon(1e-6));

    Mesh scaled = mesh;
    const Real s = 2.5;
    scaled.vertices = mesh.vertices * s;
    const EigenBasis shrunk = compute_eigenbasis(build_operators(scaled), 12);
    for (int i = 1; i < 12; ++i)
        CHECK(shrunk.lambda[i] ==
              doctest::Approx(base.lambda[i] / (s * s)).epsilon(1e-6));
}

TEST_CASE("eigenpair residuals meet the tolerance") {
    const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(2), 0.1);
    const Operators ops = build_operators(mesh);
    const EigenBasis basis = compute_eigenbasis(ops, 15);
    for (int i = 0; i < 15; ++i) {
        const Vec mphi = ops.mass.cwiseProduct(basis.phi.col(i));
        const Real residual = (ops.laplacian * basis.phi.col(i) - basis.lambda[i] * mphi).norm();
        CHECK(residual / mphi.norm() <= 1e-6);
    }
}

TEST_CASE("lanczos path agrees with a dense solve") {
    // n = 642 forces the shift-invert Lanczos path; the dense whitened
    // eigensolve serves as the independent oracle
    const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(3), 0.12);
    const Operators ops = build_operators(mesh);
    const int k = 12;
    const EigenBasis basis = compute_eigenbasis(ops, k);

    const Vec inv_sqrt = ops.mass.cwiseSqrt().cwiseInverse();
    const Mat whitened = inv_sqrt.asDiagonal() * Mat(ops.laplacian) * inv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> dense(whitened);
    for (int i = 0; i < k; ++i) {
        const Real reference = std::max(dense.eigenvalues()[i], 0.0);
        CHECK(basis.lambda[i] == doctest::Approx(reference).epsilon(1e-6));
    }
    const Mat gram = basis.phi.transpose() * ops.mass.asDiagonal() * basis.phi;
    CHECK((gram - Mat::Identity(k, k)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("basis cache round-trips bit-exactly") {
    const Mesh mesh = testshapes::make_icosphere(1);
    const Operators ops = build_operators(mesh);
    const EigenBasis basis = compute_eigenbasis(ops, 6);
    const auto path = std::filesystem::temp_directory_path() / "specmorph_basis.bin";
    save_basis_cache(path, basis);
    const EigenBasis back = load_basis_cache(path, ops.mass);
    CHECK((back.phi - basis.phi).norm() == 0.0);
    CHECK((back.lambda - basis.lambda).norm() == 0.0);
    std::filesystem::remove(path);
}
