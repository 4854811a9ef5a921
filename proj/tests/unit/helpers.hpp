#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <random>

#include "clustmd/dataset.hpp"
#include "clustmd/latent_kernel.hpp"
#include "clustmd/model_params.hpp"
#include "clustmd/simulate.hpp"

namespace testing {

inline clustmd::MixedDataset dataset_from(const std::string& schema_json, const std::string& csv) {
    std::istringstream in(csv);
    return clustmd::read_dataset(in, clustmd::parse_schema(schema_json));
}

inline double phi_cdf(double x) {
    static const boost::math::normal_distribution<double> unit;
    if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
    return boost::math::cdf(unit, x);
}

// E[z^k 1{lo < z <= hi}] / P(lo < z <= hi) for z ~ N(mu, sigma^2), by adaptive
// Gauss-Kronrod quadrature in the standardized variable.
struct QuadratureMoments {
    double prob, mean, second;
};

inline QuadratureMoments quadrature_moments(double mu, double sigma, double lo, double hi) {
    using boost::math::quadrature::gauss_kronrod;
    const double a = (lo - mu) / sigma;
    const double b = (hi - mu) / sigma;
    const double inv = 1.0 / std::sqrt(2.0 * M_PI);
    // Shift the integrand to the nearer endpoint so far-tail intervals keep
    // relative precision: integrate exp(-(x^2 - x0^2)/2).
    const double x0 = (a > 0.0) ? a : ((b < 0.0) ? b : 0.0);
    auto integrate = [&](auto f) {
        // Integrate over the part of [a, b] carrying the mass in pieces of
        // unit width, each refined adaptively.
        const double l = std::max(a, x0 - 40.0);
        const double r = std::min(b, x0 + 40.0);
        if (!(r > l)) return 0.0;
        const int pieces = static_cast<int>(std::ceil(r - l));
        const double width = (r - l) / pieces;
        double total = 0.0;
        for (int k = 0; k < pieces; ++k) {
            const double from = l + k * width;
            const double to = k + 1 == pieces ? r : from + width;
            total += gauss_kronrod<double, 31>::integrate(f, from, to, 6, 1e-14);
        }
        return total;
    };
    auto scaled = [&](double x) { return std::exp(-0.5 * (x - x0) * (x + x0)); };
    const double m0 = integrate([&](double x) { return scaled(x); });
    const double m1 = integrate([&](double x) { return x * scaled(x); });
    const double m2 = integrate([&](double x) { return x * x * scaled(x); });
    const double mean_std = m1 / m0;
    const double second_std = m2 / m0;
    QuadratureMoments out;
    out.prob = inv * std::exp(-0.5 * x0 * x0) * m0;
    out.mean = mu + sigma * mean_std;
    out.second = mu * mu + 2.0 * mu * sigma * mean_std + sigma * sigma * second_std;
    return out;
}

// Random multiplicative/additive move of size `step` that respects the
// model's sharing pattern, followed by the nominal constraints, so the
// result is a feasible parameter set for the same model.
inline clustmd::ModelParams perturb_feasible(clustmd::ModelParams p, const clustmd::LatentLayout& layout,
                                             std::mt19937_64& rng, double step) {
    using namespace clustmd;
    std::normal_distribution<double> z;
    const auto G = p.pi.size();
    const auto P = static_cast<Eigen::Index>(layout.total);
    const auto d = static_cast<Eigen::Index>(layout.observed_scale_dims());
    for (Eigen::Index g = 0; g < G; ++g) p.pi[g] *= std::exp(step * z(rng));
    p.pi /= p.pi.sum();
    for (Eigen::Index k = 0; k < p.mu.size(); ++k) p.mu.data()[k] += step * z(rng);
    if (volume_varies(p.model)) {
        for (Eigen::Index g = 0; g < G; ++g) {
            p.lambda[g] *= std::exp(step * z(rng));
            p.lambda_tilde[g] *= std::exp(step * z(rng));
        }
    } else {
        p.lambda *= std::exp(step * z(rng));
    }
    switch (shape_kind(p.model)) {
        case ShapeKind::Identity: break;
        case ShapeKind::Shared:
            for (Eigen::Index c = 0; c < d; ++c) p.shape.col(c) *= std::exp(step * z(rng));
            break;
        case ShapeKind::Varying:
            for (Eigen::Index g = 0; g < G; ++g)
                for (Eigen::Index c = 0; c < P; ++c) p.shape(g, c) *= std::exp(step * z(rng));
            break;
    }
    normalize_shape(p, layout);
    return enforce_identifiability(std::move(p), layout);
}

// Two continuous, one three-level ordinal and one three-level nominal
// column, two well separated spherical clusters.
inline clustmd::GeneratorSpec small_mixed_spec(std::size_t rows, std::uint64_t seed, double separation = 1.5) {
    using namespace clustmd;
    GeneratorSpec spec;
    spec.schema = {{"x1", ColumnKind::Continuous, 0},
                   {"x2", ColumnKind::Continuous, 0},
                   {"o1", ColumnKind::Ordinal, 3},
                   {"n1", ColumnKind::Nominal, 3}};
    const auto layout = spec.layout();
    auto p = ModelParams::unit(CovModel::VII, 2, layout);
    p.mu.row(0) << -separation, -separation, -0.8, 0.6, -0.4;
    p.mu.row(1) << separation, separation, 0.8, -0.6, 0.4;
    p.lambda << 0.8, 1.2;
    p.lambda_tilde << 0.5, 0.5;
    spec.params = enforce_identifiability(p, layout);
    spec.thresholds = {{-0.5, 0.5}};
    spec.rows = rows;
    spec.seed = seed;
    return spec;
}

inline clustmd::GeneratorSpec small_ordinal_spec(std::size_t rows, std::uint64_t seed) {
    using namespace clustmd;
    GeneratorSpec spec;
    spec.schema = {{"x1", ColumnKind::Continuous, 0},
                   {"x2", ColumnKind::Continuous, 0},
                   {"o1", ColumnKind::Ordinal, 3},
                   {"o2", ColumnKind::Ordinal, 2}};
    const auto layout = spec.layout();
    auto p = ModelParams::unit(CovModel::VVI, 2, layout);
    p.mu.row(0) << -1.0, -0.5, -0.6, 0.3;
    p.mu.row(1) << 1.0, 0.5, 0.6, -0.3;
    p.lambda << 0.7, 1.3;
    spec.params = p;
    spec.thresholds = {{-0.4, 0.6}, {0.1}};
    spec.rows = rows;
    spec.seed = seed;
    return spec;
}

}  // namespace testing
