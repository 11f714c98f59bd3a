#include "specmorph/pointmap.hpp"

#include <fstream>

#include "specmorph/error.hpp"

namespace specmorph {

PointMap PointMap::identity(Eigen::Index n) {
    PointMap map;
    map.kind = Kind::Hard;
    map.hard = IdxVec::LinSpaced(n, 0, static_cast<int>(n) - 1);
    return map;
}

PointMap PointMap::from_hard(IdxVec indices) {
    PointMap map;
    map.kind = Kind::Hard;
    map.hard = std::move(indices);
    return map;
}

PointMap PointMap::from_soft(Mat matrix) {
    PointMap map;
    map.kind = Kind::Soft;
    map.soft = std::move(matrix);
    return map;
}

Mat apply_pointmap(const PointMap& map, MatRef dst_values) {
    if (map.kind == PointMap::Kind::Soft) {
        if (map.soft.cols() != dst_values.rows())
            throw DimensionError("apply_pointmap: soft map expects " +
                                 std::to_string(map.soft.cols()) + " destination rows, got " +
                                 std::to_string(dst_values.rows()));
        return map.soft * dst_values;
    }
    Mat out(map.hard.size(), dst_values.cols());
    for (Eigen::Index i = 0; i < map.hard.size(); ++i) {
        if (map.hard[i] < 0 || map.hard[i] >= dst_values.rows())
            throw DimensionError("apply_pointmap: hard index out of range");
        out.row(i) = dst_values.row(map.hard[i]);
    }
    return out;
}

void scatter_pointmap_gradient(const PointMap& map, MatRef mapped_grad,
                               Eigen::Ref<Mat> dst_grad) {
    if (map.kind == PointMap::Kind::Soft) {
        dst_grad += map.soft.transpose() * mapped_grad;
        return;
    }
    for (Eigen::Index i = 0; i < map.hard.size(); ++i)
        dst_grad.row(map.hard[i]) += mapped_grad.row(i);
}

PointMap harden(const PointMap& map) {
    if (map.kind == PointMap::Kind::Hard) return map;
    IdxVec hard(map.soft.rows());
    for (Eigen::Index i = 0; i < map.soft.rows(); ++i) {
        Eigen::Index best = 0;
        Real best_value = map.soft(i, 0);
        for (Eigen::Index j = 1; j < map.soft.cols(); ++j) {
            if (map.soft(i, j) > best_value) {
                best_value = map.soft(i, j);
                best = j;
            }
        }
        hard[i] = static_cast<int>(best);
    }
    return PointMap::from_hard(std::move(hard));
}

void save_pointmap(const std::filesystem::path& path, const PointMap& map) {
    const PointMap hard = harden(map);
    std::ofstream out(path);
    if (!out)
        throw ParseError("cannot open " + path.string() + " for writing");
    for (Eigen::Index i = 0; i < hard.hard.size(); ++i)
        out << hard.hard[i] << "\n";
}

PointMap load_pointmap(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open point map " + path.string());
    std::vector<int> indices;
    int value;
    while (in >> value) indices.push_back(value);
    if (indices.empty())
        throw ParseError("point map " + path.string() + ": no indices");
    IdxVec hard(static_cast<Eigen::Index>(indices.size()));
    for (size_t i = 0; i < indices.size(); ++i)
        hard[static_cast<Eigen::Index>(i)] = indices[i];
    return PointMap::from_hard(std::move(hard));
}

} // namespace specmorph
