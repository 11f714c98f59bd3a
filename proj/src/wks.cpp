#include "specmorph/wks.hpp"

#include <cmath>
#include <vector>

#include "specmorph/error.hpp"

namespace specmorph {

FeatureField wks(const EigenBasis& basis, int d) {
    if (basis.k < 3)
        throw DimensionError("wks: need k >= 3 eigenpairs, got " + std::to_string(basis.k));
    if (d < 2)
        throw DimensionError("wks: need d >= 2 energy levels, got " + std::to_string(d));

    std::vector<int> used;
    for (int j = 0; j < basis.k; ++j)
        if (basis.lambda[j] > 1e-6) used.push_back(j);
    if (used.size() < 2)
        throw DimensionError("wks: fewer than two nonzero eigenvalues");

    const Real lo = std::log(basis.lambda[used.front()]);
    const Real hi = std::log(basis.lambda[used.back()]);
    // levels span [lo + 2 sigma, hi - 2 sigma] with sigma = 7 * spacing;
    // solving for the spacing gives (hi - lo) / (d + 27)
    const Real spacing = (hi - lo) / static_cast<Real>(d + 27);
    const Real sigma = 7.0 * spacing;
    const Real inv_two_sigma2 = sigma > 0.0 ? 1.0 / (2.0 * sigma * sigma) : 0.0;

    Vec log_lambda(static_cast<Eigen::Index>(used.size()));
    Mat phi2(basis.phi.rows(), static_cast<Eigen::Index>(used.size()));
    for (size_t j = 0; j < used.size(); ++j) {
        log_lambda[static_cast<Eigen::Index>(j)] = std::log(basis.lambda[used[j]]);
        phi2.col(static_cast<Eigen::Index>(j)) = basis.phi.col(used[j]).array().square();
    }

    FeatureField out;
    out.values.resize(basis.phi.rows(), d);
    for (int t = 0; t < d; ++t) {
        const Real e = lo + 2.0 * sigma + spacing * static_cast<Real>(t);
        Vec weights(log_lambda.size());
        for (Eigen::Index j = 0; j < log_lambda.size(); ++j) {
            const Real diff = e - log_lambda[j];
            weights[j] = std::exp(-diff * diff * inv_two_sigma2);
        }
        const Real total = weights.sum();
        if (!(total > 0.0))
            throw DegenerateError("wks: energy kernel vanished at level " + std::to_string(t));
        out.values.col(t) = phi2 * (weights / total);
    }
    return out;
}

FeatureField row_normalize(const FeatureField& f) {
    FeatureField out;
    out.values = f.values;
    for (Eigen::Index i = 0; i < out.values.rows(); ++i) {
        const Real norm = out.values.row(i).norm();
        if (!(norm > 0.0))
            throw DegenerateError("row_normalize: zero row " + std::to_string(i));
        out.values.row(i) /= norm;
    }
    out.normalized = true;
    return out;
}

} // namespace specmorph
