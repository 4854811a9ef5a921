#include "clustmd/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace clustmd {

void validate(const GeneratorSpec& spec) {
    const auto order = canonical_order(spec.schema);
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (order[k] != k) {
            throw SpecError("schema columns must be ordered continuous, ordinal, nominal");
        }
    }
    const auto layout = spec.layout();
    const auto& p = spec.params;
    if (p.clusters() < 1) {
        throw SpecError("params need at least one cluster");
    }
    if (p.dims() != layout.total || static_cast<std::size_t>(p.shape.cols()) != layout.total ||
        static_cast<std::size_t>(p.mu.rows()) != p.clusters() || static_cast<std::size_t>(p.shape.rows()) != p.clusters() ||
        static_cast<std::size_t>(p.lambda.size()) != p.clusters() ||
        static_cast<std::size_t>(p.lambda_tilde.size()) != p.clusters()) {
        throw SpecError("params dimensions do not match the schema's latent layout (P = " +
                        std::to_string(layout.total) + ")");
    }
    if (!(p.lambda.minCoeff() > 0.0) || !(p.lambda_tilde.minCoeff() > 0.0) || !(p.shape.minCoeff() > 0.0)) {
        throw SpecError("lambda, lambda~ and shape must be positive");
    }
    if (!(p.pi.minCoeff() > 0.0) || std::fabs(p.pi.sum() - 1.0) > 1e-9) {
        throw SpecError("pi must be positive and sum to 1");
    }
    const double violation = invariant_violation(p, layout);
    if (!(violation <= 1e-9)) {
        throw SpecError("params violate the model constraints (worst deviation " + std::to_string(violation) + ")");
    }
    if (spec.thresholds.size() != layout.ordinal) {
        throw SpecError("need one threshold list per ordinal column");
    }
    for (std::size_t o = 0; o < layout.ordinal; ++o) {
        const auto& col = spec.schema[layout.continuous + o];
        const auto& t = spec.thresholds[o];
        if (t.size() != static_cast<std::size_t>(col.levels - 1)) {
            throw SpecError("column " + col.name + ": expected " + std::to_string(col.levels - 1) + " thresholds");
        }
        for (std::size_t k = 0; k < t.size(); ++k) {
            if (!std::isfinite(t[k]) || (k > 0 && !(t[k] > t[k - 1]))) {
                throw SpecError("column " + col.name + ": thresholds must be finite and increasing");
            }
        }
    }
    if (spec.rows < 1) {
        throw SpecError("rows must be positive");
    }
    if (!(spec.latent_correlation >= 0.0 && spec.latent_correlation < 1.0)) {
        throw SpecError("latent_correlation must lie in [0, 1)");
    }
}

SimulatedData simulate(const GeneratorSpec& spec) {
    validate(spec);
    const auto layout = spec.layout();
    const auto& params = spec.params;
    const auto G = params.clusters();
    const auto N = static_cast<Eigen::Index>(spec.rows);
    const auto C = static_cast<Eigen::Index>(layout.continuous);
    const auto P = static_cast<Eigen::Index>(layout.total);

    std::vector<Eigen::ArrayXd> sd(G);
    for (std::size_t g = 0; g < G; ++g) sd[g] = sigma_diagonal(params, g, layout).array().sqrt();
    const double own = std::sqrt(1.0 - spec.latent_correlation);
    const double common = std::sqrt(spec.latent_correlation);

    std::mt19937_64 rng(spec.seed);
    std::discrete_distribution<int> cluster(params.pi.data(), params.pi.data() + params.pi.size());
    std::normal_distribution<double> normal;

    Eigen::MatrixXd continuous(N, C);
    Eigen::MatrixXi codes(N, static_cast<Eigen::Index>(layout.ordinal + layout.nominal.size()));
    std::vector<int> labels(spec.rows);
    Eigen::ArrayXd z(P);
    for (Eigen::Index i = 0; i < N; ++i) {
        const int g = cluster(rng);
        labels[static_cast<std::size_t>(i)] = g;
        const double f = normal(rng);
        for (Eigen::Index p = 0; p < P; ++p) z[p] = own * normal(rng) + common * f;
        z = params.mu.row(g).transpose().array() + sd[static_cast<std::size_t>(g)] * z;

        continuous.row(i) = z.head(C).matrix().transpose();
        for (std::size_t o = 0; o < layout.ordinal; ++o) {
            const auto& t = spec.thresholds[o];
            const double v = z[C + static_cast<Eigen::Index>(o)];
            codes(i, static_cast<Eigen::Index>(o)) = 1 + static_cast<int>(std::lower_bound(t.begin(), t.end(), v) - t.begin());
        }
        for (std::size_t j = 0; j < layout.nominal.size(); ++j) {
            const auto& block = layout.nominal[j];
            codes(i, static_cast<Eigen::Index>(layout.ordinal + j)) =
                nominal_category(z.data() + block.first, block.width);
        }
    }
    return {MixedDataset(spec.schema, std::move(continuous), std::move(codes)), std::move(labels)};
}

}  // namespace clustmd
