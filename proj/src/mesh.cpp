#include "specmorph/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "specmorph/error.hpp"

namespace specmorph {

namespace {

Real triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

} // namespace

void validate_mesh(const Mesh& mesh) {
    const Eigen::Index n = mesh.vertex_count();
    if (!mesh.vertices.allFinite())
        throw ParseError("mesh '" + mesh.name + "': non-finite vertex coordinate");
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        const auto row = mesh.faces.row(f);
        for (int c = 0; c < 3; ++c) {
            if (row[c] < 0 || row[c] >= n)
                throw ParseError("mesh '" + mesh.name + "': face " + std::to_string(f) +
                                 " references vertex " + std::to_string(row[c]) +
                                 " outside [0, " + std::to_string(n) + ")");
        }
        if (row[0] == row[1] || row[1] == row[2] || row[0] == row[2])
            throw ParseError("mesh '" + mesh.name + "': face " + std::to_string(f) +
                             " repeats a vertex");
    }
    std::map<std::pair<int, int>, int> edge_count;
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        for (int c = 0; c < 3; ++c) {
            int a = mesh.faces(f, c);
            int b = mesh.faces(f, (c + 1) % 3);
            auto key = std::minmax(a, b);
            if (++edge_count[{key.first, key.second}] > 2)
                throw TopologyError("mesh '" + mesh.name + "': edge (" +
                                    std::to_string(key.first) + ", " + std::to_string(key.second) +
                                    ") shared by more than two faces");
        }
    }
}

Real total_surface_area(const Mesh& mesh) {
    Real area = 0.0;
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        area += triangle_area(mesh.vertices.row(mesh.faces(f, 0)),
                              mesh.vertices.row(mesh.faces(f, 1)),
                              mesh.vertices.row(mesh.faces(f, 2)));
    }
    return area;
}

Vec3 area_centroid(const Mesh& mesh) {
    Vec3 acc = Vec3::Zero();
    Real area = 0.0;
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        const Vec3 a = mesh.vertices.row(mesh.faces(f, 0));
        const Vec3 b = mesh.vertices.row(mesh.faces(f, 1));
        const Vec3 c = mesh.vertices.row(mesh.faces(f, 2));
        const Real w = triangle_area(a, b, c);
        acc += w * (a + b + c) / 3.0;
        area += w;
    }
    if (area <= 0.0)
        throw DegenerateError("mesh '" + mesh.name + "': zero total surface area");
    return acc / area;
}

Mesh normalize_mesh(const Mesh& mesh, NormalizeTransform* transform) {
    const Real area = total_surface_area(mesh);
    if (area <= 0.0)
        throw DegenerateError("mesh '" + mesh.name + "': zero total surface area");
    const Vec3 centroid = area_centroid(mesh);
    const Real scale = 1.0 / std::sqrt(area);

    Mesh out;
    out.name = mesh.name;
    out.faces = mesh.faces;
    out.vertices = (mesh.vertices.rowwise() - centroid.transpose()) * scale;
    if (transform) {
        transform->centroid = centroid;
        transform->scale = scale;
    }
    return out;
}

std::vector<std::vector<int>> vertex_adjacency(const Mesh& mesh) {
    std::vector<std::vector<int>> nbrs(static_cast<size_t>(mesh.vertex_count()));
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        for (int c = 0; c < 3; ++c) {
            int a = mesh.faces(f, c);
            int b = mesh.faces(f, (c + 1) % 3);
            nbrs[static_cast<size_t>(a)].push_back(b);
            nbrs[static_cast<size_t>(b)].push_back(a);
        }
    }
    for (auto& ring : nbrs) {
        std::sort(ring.begin(), ring.end());
        ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
    }
    return nbrs;
}

} // namespace specmorph
