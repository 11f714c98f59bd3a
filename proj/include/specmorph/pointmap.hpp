#pragma once

#include <filesystem>

#include "specmorph/types.hpp"

namespace specmorph {

/// Vertex correspondence from a source mesh to a destination mesh, either a
/// row-stochastic soft assignment or a hard index map.
struct PointMap {
    enum class Kind { Soft, Hard };

    Kind kind = Kind::Hard;
    Mat soft;    // n_src x n_dst, rows sum to 1 (Kind::Soft)
    IdxVec hard; // n_src indices into dst (Kind::Hard)

    Eigen::Index source_count() const {
        return kind == Kind::Soft ? soft.rows() : hard.size();
    }

    static PointMap identity(Eigen::Index n);
    static PointMap from_hard(IdxVec indices);
    static PointMap from_soft(Mat matrix);
};

/// Applies the map to per-destination-vertex values: soft maps multiply,
/// hard maps gather rows.
Mat apply_pointmap(const PointMap& map, MatRef dst_values);

/// Accumulates d(loss)/d(dst_values) given d(loss)/d(mapped values): the
/// transpose action of apply_pointmap.
void scatter_pointmap_gradient(const PointMap& map, MatRef mapped_grad,
                               Eigen::Ref<Mat> dst_grad);

/// Per-row argmax; ties resolve to the smallest index.
PointMap harden(const PointMap& map);

/// Text format: one 0-based destination index per line.
void save_pointmap(const std::filesystem::path& path, const PointMap& map);
PointMap load_pointmap(const std::filesystem::path& path);

} // namespace specmorph
