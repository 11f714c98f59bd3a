#include "specmorph/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "specmorph/error.hpp"
#include "specmorph/rigid.hpp"
#include "specmorph/tta.hpp"

namespace specmorph {

namespace {

Vec flatten(Mat3Ref shape) {
    Vec out(shape.rows() * 3);
    for (Eigen::Index i = 0; i < shape.rows(); ++i)
        for (int c = 0; c < 3; ++c) out[3 * i + c] = shape(i, c);
    return out;
}

Mat3 unflatten(VecRef v) {
    Mat3 out(v.size() / 3, 3);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (int c = 0; c < 3; ++c) out(i, c) = v[3 * i + c];
    return out;
}

} // namespace

SSModel build_ssm(const std::vector<Mat3>& shapes, int q) {
    if (shapes.size() < 2)
        throw DimensionError("build_ssm: need at least two shapes");
    const Eigen::Index n = shapes.front().rows();
    for (const Mat3& s : shapes)
        if (s.rows() != n)
            throw DimensionError("build_ssm: shapes have differing vertex counts");
    const int count = static_cast<int>(shapes.size());
    if (q < 1 || q > count - 1)
        throw DimensionError("build_ssm: q must lie in [1, count - 1]");

    // generalized Procrustes: center, then iterate alignment to the mean
    std::vector<Mat3> aligned(shapes.size());
    for (size_t i = 0; i < shapes.size(); ++i) {
        const Vec3 centroid = shapes[i].colwise().mean();
        aligned[i] = shapes[i].rowwise() - centroid.transpose();
    }
    Mat3 mean = aligned.front();
    for (int iter = 0; iter < 64; ++iter) {
        for (Mat3& shape : aligned) {
            const Eigen::Matrix3d r = kabsch_rotation(shape.transpose() * mean);
            shape = shape * r.transpose();
        }
        Mat3 new_mean = Mat3::Zero(n, 3);
        for (const Mat3& shape : aligned) new_mean += shape;
        new_mean /= static_cast<Real>(count);
        const Real change = (new_mean - mean).norm();
        mean = new_mean;
        if (change < 1e-13 * (mean.norm() + 1.0)) break;
    }

    Mat residuals(count, 3 * n);
    for (int i = 0; i < count; ++i)
        residuals.row(i) = flatten(aligned[static_cast<size_t>(i)] - mean).transpose();

    // PCA via the Gram matrix; population variance so a +-c family along a
    // unit direction reports variance c^2
    const Mat gram = residuals * residuals.transpose() / static_cast<Real>(count);
    Eigen::SelfAdjointEigenSolver<Mat> es(gram);
    if (es.info() != Eigen::Success)
        throw ConvergenceError("build_ssm: PCA eigensolve failed");

    SSModel model;
    model.mean = mean;
    model.training = std::move(aligned);

    const Real scale = std::max<Real>(es.eigenvalues().maxCoeff(), 0.0);
    std::vector<std::pair<Real, int>> order;
    for (int i = 0; i < count; ++i) {
        const Real value = es.eigenvalues()[i];
        if (value > 1e-14 * std::max<Real>(scale, 1.0)) order.push_back({value, i});
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    const int modes = std::min<int>(q, static_cast<int>(order.size()));

    model.components.resize(modes, 3 * n);
    model.variances.resize(modes);
    for (int m = 0; m < modes; ++m) {
        const Vec direction = residuals.transpose() * es.eigenvectors().col(order[m].second);
        model.components.row(m) = direction.normalized().transpose();
        model.variances[m] = order[m].first;
    }
    return model;
}

Mat3 sample_ssm(const SSModel& model, VecRef coefficients) {
    if (!coefficients.allFinite())
        throw DimensionError("sample_ssm: non-finite coefficients");
    Vec flat = flatten(model.mean);
    const int used = std::min<int>(model.modes(), static_cast<int>(coefficients.size()));
    for (int m = 0; m < used; ++m)
        flat += coefficients[m] * std::sqrt(model.variances[m]) *
                model.components.row(m).transpose();
    return unflatten(flat);
}

Reconstruction reconstruct(const SSModel& model, Mat3Ref shape, int q) {
    if (shape.rows() != model.point_count())
        throw DimensionError("reconstruct: vertex count mismatch");
    const Vec3 centroid = shape.colwise().mean();
    Mat3 centered = shape.rowwise() - centroid.transpose();
    const Eigen::Matrix3d r = kabsch_rotation(centered.transpose() * model.mean);
    Reconstruction out;
    out.aligned = centered * r.transpose();

    const Vec residual = flatten(out.aligned - model.mean);
    Vec recon = flatten(model.mean);
    const int used = std::min<int>(q, model.modes());
    for (int m = 0; m < used; ++m)
        recon += model.components.row(m).dot(residual) * model.components.row(m).transpose();
    out.reconstructed = unflatten(recon);
    return out;
}

Real generality(const std::vector<Mat3>& shapes, int q) {
    if (shapes.size() < 3)
        throw DimensionError("generality: need at least three shapes for leave-one-out");
    Real total = 0.0;
    for (size_t held = 0; held < shapes.size(); ++held) {
        std::vector<Mat3> fold;
        fold.reserve(shapes.size() - 1);
        for (size_t i = 0; i < shapes.size(); ++i)
            if (i != held) fold.push_back(shapes[i]);
        const int fold_q = std::min<int>(q, static_cast<int>(fold.size()) - 1);
        const SSModel model = build_ssm(fold, fold_q);
        const Reconstruction rec = reconstruct(model, shapes[held], q);
        total += std::sqrt(chamfer(rec.reconstructed, rec.aligned));
    }
    return total / static_cast<Real>(shapes.size());
}

Real specificity(const SSModel& model, int q, int trials, uint64_t seed) {
    if (trials < 1)
        throw DimensionError("specificity: trials must be >= 1");
    if (model.training.empty())
        throw DimensionError("specificity: model carries no training shapes");

    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    const int used = std::min<int>(q, model.modes());

    Real total = 0.0;
    for (int t = 0; t < trials; ++t) {
        Vec coeffs = Vec::Zero(used);
        for (int m = 0; m < used; ++m)
            coeffs[m] = std::clamp(gauss(rng), -3.0, 3.0);
        const Mat3 sample = sample_ssm(model, coeffs);
        Real best = std::numeric_limits<Real>::infinity();
        for (const Mat3& shape : model.training)
            best = std::min(best, chamfer(sample, shape));
        total += std::sqrt(best);
    }
    return total / static_cast<Real>(trials);
}

void save_ssm(const std::filesystem::path& path, const SSModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw ParseError("cannot open " + path.string() + " for writing");
    nlohmann::json header = {
        {"format", "ssm-1"},
        {"n", model.point_count()},
        {"modes", model.modes()},
        {"shapes", model.training.size()},
    };
    out << header.dump() << "\n";
    auto write_all = [&out](const Real* data, size_t count) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
    };
    const Vec mean = flatten(model.mean);
    write_all(mean.data(), static_cast<size_t>(mean.size()));
    for (int m = 0; m < model.modes(); ++m) {
        const Vec row = model.components.row(m).transpose();
        write_all(row.data(), static_cast<size_t>(row.size()));
    }
    write_all(model.variances.data(), static_cast<size_t>(model.variances.size()));
    for (const Mat3& shape : model.training) {
        const Vec flat = flatten(shape);
        write_all(flat.data(), static_cast<size_t>(flat.size()));
    }
}

SSModel load_ssm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open SSM file " + path.string());
    std::string header_line;
    if (!std::getline(in, header_line))
        throw ParseError("SSM file " + path.string() + ": missing header");
    nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "ssm-1")
        throw ParseError("SSM file " + path.string() + ": bad header");
    const Eigen::Index n = header.at("n").get<Eigen::Index>();
    const int modes = header.at("modes").get<int>();
    const size_t shapes = header.at("shapes").get<size_t>();

    auto read_vec = [&in, &path](Eigen::Index count) {
        Vec v(count);
        in.read(reinterpret_cast<char*>(v.data()), count * 8);
        if (!in)
            throw ParseError("SSM file " + path.string() + ": truncated payload");
        return v;
    };

    SSModel model;
    model.mean = unflatten(read_vec(3 * n));
    model.components.resize(modes, 3 * n);
    for (int m = 0; m < modes; ++m)
        model.components.row(m) = read_vec(3 * n).transpose();
    model.variances = read_vec(modes);
    model.training.reserve(shapes);
    for (size_t s = 0; s < shapes; ++s)
        model.training.push_back(unflatten(read_vec(3 * n)));
    return model;
}

} // namespace specmorph
