#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "specmorph/types.hpp"

namespace specmorph {

/// Triangle mesh: vertex positions (rows of `vertices`) and 0-based face
/// indices (rows of `faces`). Immutable by convention; operations return
/// new meshes.
struct Mesh {
    Mat3 vertices;                 // n x 3
    Eigen::MatrixX3i faces;        // m x 3
    std::string name;

    Eigen::Index vertex_count() const { return vertices.rows(); }
    Eigen::Index face_count() const { return faces.rows(); }
};

enum class MeshFormat { Off, Obj, Ply, FromExtension };

/// Rigid-plus-scale transform recorded by normalize_mesh so callers can map
/// results back into the input's original coordinates.
struct NormalizeTransform {
    Vec3 centroid = Vec3::Zero(); // area-weighted centroid of the input
    Real scale = 1.0;             // factor applied after centering
};

/// Checks index ranges, repeated-vertex faces, finite coordinates and the
/// per-edge face count (> 2 is rejected). Throws ParseError or TopologyError.
void validate_mesh(const Mesh& mesh);

/// Reads OFF, OBJ (v/f records) or PLY (ascii / binary little-endian).
/// Polygon faces are fan-triangulated. Format inferred from the extension
/// unless given explicitly.
Mesh load_mesh(const std::filesystem::path& path,
               MeshFormat format = MeshFormat::FromExtension);

/// Parses mesh data from an in-memory buffer (used by load_mesh and tests).
Mesh parse_mesh(const std::string& data, MeshFormat format, const std::string& name);

/// Writes an OBJ file (1-based indices, full double precision).
void save_obj(const std::filesystem::path& path, const Mesh& mesh);
void save_obj(const std::filesystem::path& path, const Mat3& vertices,
              const Eigen::MatrixX3i& faces);

Real total_surface_area(const Mesh& mesh);

/// Area-weighted centroid of the surface.
Vec3 area_centroid(const Mesh& mesh);

/// Translates the area-weighted centroid to the origin and scales the mesh
/// to unit surface area. The input is left untouched; the applied transform
/// is reported through `transform` when non-null.
Mesh normalize_mesh(const Mesh& mesh, NormalizeTransform* transform = nullptr);

/// One-ring vertex adjacency (sorted, deduplicated) from the face list.
std::vector<std::vector<int>> vertex_adjacency(const Mesh& mesh);

} // namespace specmorph
