#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "specmorph/error.hpp"
#include "specmorph/mesh.hpp"
#include "specmorph/operators.hpp"
#include "support/test_shapes.hpp"

using namespace specmorph;

TEST_CASE("off parsing: single triangle") {
    const std::string data = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
    const Mesh mesh = parse_mesh(data, MeshFormat::Off, "tri");
    CHECK(mesh.vertex_count() == 3);
    CHECK(mesh.face_count() == 1);
    CHECK(mesh.vertices(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("obj quad face fan-triangulates") {
    const std::string data =
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
    const Mesh mesh = parse_mesh(data, MeshFormat::Obj, "quad");
    REQUIRE(mesh.face_count() == 2);
    CHECK(mesh.faces(0, 0) == 0);
    CHECK(mesh.faces(0, 1) == 1);
    CHECK(mesh.faces(0, 2) == 2);
    CHECK(mesh.faces(1, 0) == 0);
    CHECK(mesh.faces(1, 1) == 2);
    CHECK(mesh.faces(1, 2) == 3);
}

TEST_CASE("off out-of-range face index is a parse error") {
    const std::string data = "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 99\n";
    CHECK_THROWS_AS(parse_mesh(data, MeshFormat::Off, "bad"), ParseError);
}

TEST_CASE("face repeating a vertex is rejected") {
    const std::string data = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 1\n";
    CHECK_THROWS_AS(parse_mesh(data, MeshFormat::Off, "bad"), ParseError);
}

TEST_CASE("edge shared by three faces is a topology error") {
    const std::string data =
        "OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 -1 0\n3 0 1 2\n3 0 1 3\n3 0 1 4\n";
    CHECK_THROWS_AS(parse_mesh(data, MeshFormat::Off, "fan"), TopologyError);
}

TEST_CASE("ply ascii and binary little-endian round-trip a triangle") {
    const std::string ascii =
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n"
        "property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
        "end_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
    const Mesh from_ascii = parse_mesh(ascii, MeshFormat::Ply, "tri");
    CHECK(from_ascii.vertex_count() == 3);
    CHECK(from_ascii.face_count() == 1);

    std::string binary =
        "ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty double x\n"
        "property double y\nproperty double z\nelement face 1\n"
        "property list uchar int vertex_indices\nend_header\n";
    const double coords[9] = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    binary.append(reinterpret_cast<const char*>(coords), sizeof(coords));
    const unsigned char count = 3;
    const int32_t idx[3] = {0, 1, 2};
    binary.push_back(static_cast<char>(count));
    binary.append(reinterpret_cast<const char*>(idx), sizeof(idx));
    const Mesh from_binary = parse_mesh(binary, MeshFormat::Ply, "tri");
    CHECK(from_binary.vertex_count() == 3);
    CHECK((from_binary.vertices - from_ascii.vertices).norm() == doctest::Approx(0.0));
}

TEST_CASE("big-endian ply is rejected") {
    const std::string data = "ply\nformat binary_big_endian 1.0\nend_header\n";
    CHECK_THROWS_AS(parse_mesh(data, MeshFormat::Ply, "be"), ParseError);
}

TEST_CASE("obj writer round-trips bit-exactly") {
    const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(1), 0.1);
    const auto path = std::filesystem::temp_directory_path() / "specmorph_roundtrip.obj";
    save_obj(path, mesh);
    const Mesh back = load_mesh(path);
    CHECK(back.vertex_count() == mesh.vertex_count());
    CHECK((back.vertices - mesh.vertices).norm() == 0.0);
    CHECK((back.faces - mesh.faces).norm() == 0);
    std::filesystem::remove(path);
}

TEST_CASE("normalize: unit cube scales by 1/sqrt(6) and centers") {
    const Mesh cube = testshapes::make_cube();
    CHECK(total_surface_area(cube) == doctest::Approx(6.0));
    NormalizeTransform info;
    const Mesh normalized = normalize_mesh(cube, &info);
    CHECK(info.scale == doctest::Approx(1.0 / std::sqrt(6.0)));
    CHECK(total_surface_area(normalized) == doctest::Approx(1.0));
    CHECK(area_centroid(normalized).norm() < 1e-12);
    // input untouched
    CHECK(cube.vertices(0, 0) == 0.0);
}

TEST_CASE("normalize is idempotent within 1e-12") {
    const Mesh once = normalize_mesh(testshapes::make_icosphere(2));
    const Mesh twice = normalize_mesh(once);
    CHECK((twice.vertices - once.vertices).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalize rejects zero-area meshes") {
    Mesh degenerate;
    degenerate.name = "flat";
    degenerate.vertices.resize(3, 3);
    degenerate.vertices << 0, 0, 0, 1, 1, 1, 2, 2, 2; // collinear
    degenerate.faces.resize(1, 3);
    degenerate.faces << 0, 1, 2;
    CHECK_THROWS_AS(normalize_mesh(degenerate), DegenerateError);
}

TEST_CASE("cotan weights on right isoceles triangle pairs") {
    // square split along the diagonal: both angles opposite the diagonal are
    // the right angles, so its weight is (cot 90 + cot 90)/2 = 0; each
    // boundary side sees one 45-degree angle, weight cot(45)/2 = 1/2
    const Operators square = build_operators(testshapes::make_square());
    CHECK(square.laplacian.coeff(0, 2) == doctest::Approx(0.0));
    CHECK(square.laplacian.coeff(0, 1) == doctest::Approx(-0.5));
    CHECK(square.laplacian.coeff(1, 2) == doctest::Approx(-0.5));

    // interior edge with 45-degree angles on both sides: (cot45 + cot45)/2 = 1
    Mesh pair;
    pair.name = "pair";
    pair.vertices.resize(4, 3);
    pair.vertices << 0, 0, 0, 1, 0, 0, 1, 1, 0, 2, 0, 0;
    pair.faces.resize(2, 3);
    pair.faces << 0, 1, 2, 1, 3, 2;
    const Operators ops = build_operators(pair);
    CHECK(ops.laplacian.coeff(1, 2) == doctest::Approx(-1.0));
    CHECK(ops.laplacian.coeff(2, 1) == doctest::Approx(-1.0));
}

TEST_CASE("equilateral one-ring has equal off-diagonal weights") {
    // hexagonal fan of equilateral triangles around the origin
    Mesh fan;
    fan.name = "fan";
    fan.vertices.resize(7, 3);
    fan.vertices.row(0) << 0, 0, 0;
    for (int i = 0; i < 6; ++i) {
        const Real angle = M_PI / 3.0 * i;
        fan.vertices.row(i + 1) << std::cos(angle), std::sin(angle), 0;
    }
    fan.faces.resize(6, 3);
    for (int i = 0; i < 6; ++i) fan.faces.row(i) << 0, i + 1, (i + 1) % 6 + 1;
    const Operators ops = build_operators(fan);
    const Real w = ops.laplacian.coeff(0, 1);
    for (int i = 2; i <= 6; ++i)
        CHECK(ops.laplacian.coeff(0, i) == doctest::Approx(w));
}

TEST_CASE("mass sums to total surface area") {
    const Mesh sphere = testshapes::make_icosphere(3);
    const Operators ops = build_operators(sphere);
    CHECK(ops.mass.sum() ==
          doctest::Approx(total_surface_area(sphere)).epsilon(1e-12));
    CHECK(ops.mass.minCoeff() > 0.0);
}

TEST_CASE("laplacian kernel, symmetry and positive semi-definiteness") {
    const Mesh mesh = testshapes::perturb_radial(testshapes::make_icosphere(2), 0.15);
    const Operators ops = build_operators(mesh);
    const Eigen::Index n = mesh.vertex_count();

    const Vec ones = Vec::Ones(n);
    CHECK((ops.laplacian * ones).cwiseAbs().maxCoeff() < 1e-10);

    const SpMat diff = SpMat(ops.laplacian.transpose()) - ops.laplacian;
    CHECK(Mat(diff).cwiseAbs().maxCoeff() == 0.0); // bit-exact symmetry

    std::mt19937_64 rng(7);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(rng);
        CHECK(v.dot(ops.laplacian * v) >= -1e-10);
    }
}

TEST_CASE("sliver triangles survive through cotangent clamping") {
    // near-collinear triangle attached to a healthy one
    Mesh mesh;
    mesh.name = "sliver";
    mesh.vertices.resize(4, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 0.5, 1e-13, 0, 0.5, -1, 0;
    mesh.faces.resize(2, 3);
    mesh.faces << 0, 1, 2, 0, 3, 1;
    const Operators ops = build_operators(mesh);
    CHECK(Mat(ops.laplacian).allFinite());
    // the sliver's opposite angles are clamped at 1e6 half-weights
    CHECK(std::abs(ops.laplacian.coeff(0, 2)) <= 1e6 + 1.0);
    CHECK(ops.mass.minCoeff() > 0.0);
}

TEST_CASE("isolated vertex yields zero lumped area") {
    Mesh mesh = testshapes::make_triangle();
    mesh.vertices.conservativeResize(4, 3);
    mesh.vertices.row(3) << 5, 5, 5; // never referenced
    CHECK_THROWS_AS(build_operators(mesh), DegenerateError);
}

TEST_CASE("missing file raises ParseError with the path") {
    try {
        load_mesh("/nonexistent/mesh.obj");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("/nonexistent/mesh.obj") != std::string::npos);
    }
}
