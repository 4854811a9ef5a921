#include <cmath>
#include <random>

#include "doctest.h"

#include "clustmd/model_params.hpp"

using namespace clustmd;

namespace {

// Four continuous, three ordinal (2, 4, 3 levels) and three nominal
// (3, 3, 4 levels) variables: C + O = 7, P = 14.
LatentLayout simulation_layout() {
    return build_layout({{"x1", ColumnKind::Continuous, 0}, {"x2", ColumnKind::Continuous, 0},
                         {"x3", ColumnKind::Continuous, 0}, {"x4", ColumnKind::Continuous, 0},
                         {"o1", ColumnKind::Ordinal, 2},    {"o2", ColumnKind::Ordinal, 4},
                         {"o3", ColumnKind::Ordinal, 3},    {"n1", ColumnKind::Nominal, 3},
                         {"n2", ColumnKind::Nominal, 3},    {"n3", ColumnKind::Nominal, 4}});
}

LatentLayout no_nominal_layout() {
    return build_layout({{"x1", ColumnKind::Continuous, 0}, {"x2", ColumnKind::Continuous, 0},
                         {"x3", ColumnKind::Continuous, 0}, {"x4", ColumnKind::Continuous, 0},
                         {"o1", ColumnKind::Ordinal, 2},    {"o2", ColumnKind::Ordinal, 4},
                         {"o3", ColumnKind::Ordinal, 3}});
}

LatentLayout small_nominal_layout() {
    return build_layout({{"x", ColumnKind::Continuous, 0}, {"n", ColumnKind::Nominal, 3}});
}

ModelParams random_params(CovModel model, std::size_t G, const LatentLayout& layout, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.2, 2.0);
    std::normal_distribution<double> z;
    ModelParams p;
    p.model = model;
    const auto g = static_cast<Eigen::Index>(G);
    const auto P = static_cast<Eigen::Index>(layout.total);
    p.pi.resize(g);
    for (Eigen::Index k = 0; k < g; ++k) p.pi[k] = u(rng);
    p.pi /= p.pi.sum();
    p.mu.resize(g, P);
    for (Eigen::Index k = 0; k < g * P; ++k) p.mu.data()[k] = z(rng);
    p.lambda.resize(g);
    p.lambda_tilde.resize(g);
    for (Eigen::Index k = 0; k < g; ++k) {
        p.lambda[k] = u(rng);
        p.lambda_tilde[k] = u(rng);
    }
    p.shape.resize(g, P);
    for (Eigen::Index k = 0; k < g * P; ++k) p.shape.data()[k] = u(rng);
    return p;
}

}  // namespace

TEST_CASE("model names round trip") {
    for (auto m : kAllModels) {
        CHECK(parse_model(model_name(m)) == m);
    }
    CHECK_FALSE(parse_model("XYZ").has_value());
    CHECK(volume_varies(CovModel::VEI));
    CHECK_FALSE(volume_varies(CovModel::EVI));
    CHECK(shape_kind(CovModel::EEI) == ShapeKind::Shared);
}

TEST_CASE("covariance diagonal") {
    const auto layout = small_nominal_layout();
    auto p = ModelParams::unit(CovModel::VVI, 2, layout);
    p.lambda.setConstant(2.0);
    p.lambda_tilde.setConstant(0.5);
    p.shape.setOnes();
    const auto d = sigma_diagonal(p, 1, layout);
    CHECK(d.size() == 3);
    CHECK(d[0] == 2.0);
    CHECK(d[1] == 0.5);
    CHECK(d[2] == 0.5);

    auto e = ModelParams::unit(CovModel::EEI, 3, layout);
    e.shape.col(0).setConstant(1.7);
    CHECK(sigma_diagonal(e, 0, layout) == sigma_diagonal(e, 2, layout));
}

TEST_CASE("identifiability examples") {
    const auto layout = small_nominal_layout();
    SUBCASE("single cluster") {
        auto p = ModelParams::unit(CovModel::VVI, 1, layout);
        p.mu << 3.0, 0.7, -0.2;
        p.lambda_tilde << 4.0;
        p.shape << 1.0, 2.0, 3.0;
        const auto q = enforce_identifiability(p, layout);
        CHECK(q.mu(0, 0) == 3.0);
        CHECK(q.mu(0, 1) == 0.0);
        CHECK(q.mu(0, 2) == 0.0);
        CHECK(q.lambda_tilde[0] == 1.0);
        CHECK(q.shape(0, 1) == 1.0);
    }
    SUBCASE("volume renormalized") {
        auto p = ModelParams::unit(CovModel::VII, 2, layout);
        p.lambda_tilde << 2.0, 2.0;
        const auto q = enforce_identifiability(p, layout);
        CHECK(q.lambda_tilde[0] == 0.5);
        CHECK(q.lambda_tilde[1] == 0.5);
    }
    SUBCASE("nominal shape renormalized") {
        auto p = ModelParams::unit(CovModel::EVI, 2, layout);
        p.shape.col(1) << 0.4, 1.6;
        const auto q = enforce_identifiability(p, layout);
        CHECK(q.shape(0, 1) == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(q.shape(1, 1) == doctest::Approx(0.8).epsilon(1e-15));
        CHECK(q.lambda_tilde[0] == 1.0);
    }
    SUBCASE("weighted recentring") {
        auto p = ModelParams::unit(CovModel::EII, 2, layout);
        p.pi << 0.25, 0.75;
        p.mu.col(1) << 1.0, 1.0;
        p.mu.col(2) << 4.0, 0.0;
        const auto q = enforce_identifiability(p, layout);
        CHECK(q.mu(0, 1) == 0.0);
        CHECK(q.mu(0, 2) == 3.0);
        CHECK(q.mu(1, 2) == -1.0);
    }
}

TEST_CASE("identifiability is idempotent and leaves the observed block alone") {
    const auto layout = simulation_layout();
    std::mt19937_64 rng(17);
    for (auto model : kAllModels) {
        for (std::size_t G = 1; G <= 4; ++G) {
            auto p = random_params(model, G, layout, rng);
            normalize_shape(p, layout);
            const auto once = enforce_identifiability(p, layout);
            const auto twice = enforce_identifiability(once, layout);
            CHECK(flatten(once) == flatten(twice));
            const auto d = static_cast<Eigen::Index>(layout.observed_scale_dims());
            for (std::size_t g = 0; g < G; ++g) {
                CHECK(sigma_diagonal(once, g, layout).head(d) == sigma_diagonal(p, g, layout).head(d));
                CHECK(once.mu.row(static_cast<Eigen::Index>(g)).head(d) ==
                      p.mu.row(static_cast<Eigen::Index>(g)).head(d));
            }
            for (Eigen::Index c = d; c < static_cast<Eigen::Index>(layout.total); ++c) {
                CHECK(std::abs(once.pi.dot(once.mu.col(c))) < 1e-12);
            }
            if (volume_varies(model)) {
                CHECK(once.lambda_tilde.sum() == doctest::Approx(1.0).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("normalized shape has unit determinant on the observed block") {
    const auto layout = simulation_layout();
    std::mt19937_64 rng(4);
    auto p = random_params(CovModel::VVI, 3, layout, rng);
    normalize_shape(p, layout);
    for (Eigen::Index g = 0; g < 3; ++g) {
        CHECK(std::abs(p.shape.row(g).head(7).array().log().sum()) < 1e-12);
    }
}

TEST_CASE("covariance parameter counts reproduce the parsimony table") {
    // rows EII, VII, EEI, VEI, EVI, VVI; columns G = 1..4
    const long with_nominal[6][4] = {{1, 1, 1, 1},  {1, 3, 5, 7},    {7, 7, 7, 7},
                                     {7, 9, 11, 13}, {7, 19, 31, 43}, {3, 17, 31, 45}};
    const long without_nominal[6][4] = {{1, 1, 1, 1},   {1, 2, 3, 4},     {8, 8, 8, 8},
                                        {8, 9, 10, 11}, {8, 15, 22, 29}, {8, 16, 24, 32}};
    const auto nominal = simulation_layout();
    const auto plain = no_nominal_layout();
    for (std::size_t m = 0; m < kAllModels.size(); ++m) {
        for (long G = 1; G <= 4; ++G) {
            CAPTURE(model_name(kAllModels[m]));
            CAPTURE(G);
            CHECK(covariance_parameter_count(kAllModels[m], G, nominal) == with_nominal[m][G - 1]);
            CHECK(covariance_parameter_count(kAllModels[m], G, plain) == without_nominal[m][G - 1]);
        }
    }
}

TEST_CASE("free parameter totals") {
    const auto five = build_layout({{"a", ColumnKind::Continuous, 0}, {"b", ColumnKind::Continuous, 0},
                                    {"c", ColumnKind::Continuous, 0}, {"d", ColumnKind::Continuous, 0},
                                    {"e", ColumnKind::Continuous, 0}});
    CHECK(count_free_parameters(CovModel::EII, 1, five) == 6);
    CHECK(covariance_parameter_count(CovModel::VVI, 2, five) == 12);
    CHECK(count_free_parameters(CovModel::VVI, 2, five) == 1 + 10 + 12);
    // mixing 1, observed means 14, nominal means 7 (one centring constraint each), VII 3
    CHECK(count_free_parameters(CovModel::VII, 2, simulation_layout()) == 1 + 14 + 7 + 3);
}

TEST_CASE("parameter lattice without nominal variables") {
    for (const auto& layout : {no_nominal_layout(), build_layout({{"x", ColumnKind::Continuous, 0}}),
                               build_layout({{"o", ColumnKind::Ordinal, 3}, {"x", ColumnKind::Continuous, 0}})}) {
        for (long G = 1; G <= 6; ++G) {
            const auto nu = [&](CovModel m) { return count_free_parameters(m, G, layout); };
            CHECK(nu(CovModel::EII) <= nu(CovModel::VII));
            CHECK(nu(CovModel::VII) <= nu(CovModel::VVI));
            CHECK(nu(CovModel::EEI) <= nu(CovModel::VEI));
            CHECK(nu(CovModel::VEI) <= nu(CovModel::VVI));
        }
    }
}

TEST_CASE("parameter lattice with nominal variables from two clusters on") {
    // With a single cluster the nominal-column VVI count (O) falls below the
    // VEI count (C + O); the ordering holds from G = 2.
    const auto layout = simulation_layout();
    CHECK(covariance_parameter_count(CovModel::VVI, 1, layout) <
          covariance_parameter_count(CovModel::VEI, 1, layout));
    for (long G = 2; G <= 6; ++G) {
        const auto nu = [&](CovModel m) { return count_free_parameters(m, G, layout); };
        CHECK(nu(CovModel::EII) <= nu(CovModel::VII));
        CHECK(nu(CovModel::VII) <= nu(CovModel::VVI));
        CHECK(nu(CovModel::EEI) <= nu(CovModel::VEI));
        CHECK(nu(CovModel::VEI) <= nu(CovModel::VVI));
    }
}

TEST_CASE("flatten round trip") {
    const auto layout = simulation_layout();
    std::mt19937_64 rng(8);
    const auto p = random_params(CovModel::VEI, 3, layout, rng);
    const auto flat = flatten(p);
    CHECK(flat.size() == static_cast<Eigen::Index>(flat_names(3, layout.total).size()));
    const auto q = unflatten(flat, CovModel::VEI, 3, layout.total);
    CHECK(q.pi == p.pi);
    CHECK(q.mu == p.mu);
    CHECK(q.lambda_tilde == p.lambda_tilde);
    CHECK(q.shape == p.shape);
    CHECK(flat_names(2, 3)[2] == "mu[1,1]");
}

TEST_CASE("invariants hold for the unit start and fail when broken") {
    const auto layout = simulation_layout();
    for (auto model : kAllModels) {
        const auto p = ModelParams::unit(model, 3, layout);
        CHECK(invariant_violation(p, layout) < 1e-14);
        auto broken = p;
        broken.mu(0, 10) += 0.5;
        CHECK(invariant_violation(broken, layout) > 0.1);
    }
}
