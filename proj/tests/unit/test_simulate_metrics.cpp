#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

#include "clustmd/em_engine.hpp"
#include "clustmd/metrics.hpp"
#include "clustmd/serialize.hpp"
#include "clustmd/simulate.hpp"

using namespace clustmd;

namespace {

// Hubert-Arabie index by direct pair counting over all observation pairs.
double pair_count_ari(const std::vector<int>& a, const std::vector<int>& b) {
    double both = 0.0, in_a = 0.0, in_b = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j];
            const bool sb = b[i] == b[j];
            both += sa && sb;
            in_a += sa;
            in_b += sb;
            pairs += 1.0;
        }
    }
    const double expected = in_a * in_b / pairs;
    return (both - expected) / (0.5 * (in_a + in_b) - expected);
}

Eigen::MatrixXi prostate_table() {
    Eigen::MatrixXi t(3, 2);
    t << 207, 14, 21, 175, 45, 13;
    return t;
}

GeneratorSpec continuous_spec(std::size_t rows) {
    GeneratorSpec spec;
    spec.schema = {{"x1", ColumnKind::Continuous, 0}, {"x2", ColumnKind::Continuous, 0}};
    auto p = ModelParams::unit(CovModel::EEI, 1, spec.layout());
    p.mu << 1.5, -2.0;
    p.lambda << 2.0;
    p.shape << 2.0, 0.5;
    spec.params = p;
    spec.rows = rows;
    spec.seed = 99;
    return spec;
}

}  // namespace

TEST_CASE("simulated continuous moments") {
    const auto spec = continuous_spec(100000);
    const auto sim = simulate(spec);
    const double N = 100000.0;
    const Eigen::Vector2d var(4.0, 1.0);
    const Eigen::Vector2d mu(1.5, -2.0);
    for (Eigen::Index c = 0; c < 2; ++c) {
        const auto col = sim.data.continuous().col(c);
        const double mean = col.mean();
        const double v = (col.array() - mean).square().mean();
        CHECK(std::abs(mean - mu[c]) <= 3.0 * std::sqrt(var[c] / N));
        CHECK(std::abs(v - var[c]) <= 3.0 * var[c] * std::sqrt(2.0 / N));
    }
    CHECK(std::all_of(sim.labels.begin(), sim.labels.end(), [](int l) { return l == 0; }));
}

TEST_CASE("symmetric ordinal threshold splits evenly") {
    GeneratorSpec spec;
    spec.schema = {{"o", ColumnKind::Ordinal, 2}};
    spec.params = ModelParams::unit(CovModel::EII, 1, spec.layout());
    spec.thresholds = {{0.0}};
    spec.rows = 20000;
    const auto sim = simulate(spec);
    const double share = (sim.data.codes().col(0).array() == 1).cast<double>().mean();
    CHECK(std::abs(share - 0.5) <= 3.0 * std::sqrt(0.25 / 20000.0));
}

TEST_CASE("shipped generator has the mixed simulation layout") {
    const auto spec = load_generator(std::filesystem::path(CLUSTMD_DATA_DIR) / "sim_vii_g2.json");
    CHECK(spec.layout().total == 14);
    CHECK(spec.params.model == CovModel::VII);
    CHECK(spec.params.clusters() == 2);
    CHECK(spec.rows == 800);
    const auto sim = simulate(spec);
    CHECK(sim.data.rows() == 800);
    CHECK(sim.data.columns() == 10);
    CHECK(sim.data.nominal_count() == 3);
    CHECK(simulate(spec).data == sim.data);
    auto other = spec;
    other.seed += 1;
    CHECK_FALSE(simulate(other).data == sim.data);
}

TEST_CASE("generator validation") {
    auto spec = testing::small_mixed_spec(10, 1);
    CHECK_NOTHROW(validate(spec));
    auto bad = spec;
    bad.params.lambda[0] = 0.0;
    CHECK_THROWS_AS(simulate(bad), SpecError);
    bad = spec;
    bad.thresholds = {{0.5, -0.5}};
    CHECK_THROWS_AS(validate(bad), SpecError);
    bad = spec;
    bad.params.mu.conservativeResize(2, 4);
    CHECK_THROWS_AS(validate(bad), SpecError);
    bad = spec;
    bad.params.mu(0, 4) += 1.0;
    CHECK_THROWS_AS(validate(bad), SpecError);
    bad = spec;
    bad.latent_correlation = 1.0;
    CHECK_THROWS_AS(validate(bad), SpecError);
}

TEST_CASE("adjusted Rand index") {
    const std::vector<int> a{0, 0, 1, 1, 2, 2, 2};
    CHECK(adjusted_rand(a, a) == 1.0);
    CHECK(adjusted_rand(std::vector<int>(7, 0), a) == 0.0);
    const std::vector<int> relabelled{5, 5, 3, 3, 9, 9, 9};
    CHECK(adjusted_rand(a, relabelled) == 1.0);
    const std::vector<int> b{0, 1, 1, 1, 2, 0, 2};
    CHECK(adjusted_rand(a, b) == doctest::Approx(pair_count_ari(a, b)).epsilon(1e-14));
    CHECK(adjusted_rand(a, b) == doctest::Approx(adjusted_rand(b, a)).epsilon(1e-15));
    CHECK(adjusted_rand(relabelled, b) == doctest::Approx(adjusted_rand(a, b)).epsilon(1e-15));
    CHECK_THROWS_AS(adjusted_rand(a, std::vector<int>{0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(adjusted_rand(std::vector<int>{1}, std::vector<int>{1}), std::invalid_argument);
}

TEST_CASE("random partitions score near zero") {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> pick(0, 3);
    double total = 0.0;
    for (int r = 0; r < 50; ++r) {
        std::vector<int> a(400), b(400);
        for (auto& v : a) v = pick(rng);
        for (auto& v : b) v = pick(rng);
        total += adjusted_rand(a, b);
    }
    CHECK(std::abs(total / 50.0) < 0.005);
}

TEST_CASE("prostate cross tabulation") {
    const auto [clusters, stage] = labels_from_table(prostate_table());
    CHECK(clusters.size() == 475);
    const auto table = cross_tab(clusters, stage);
    CHECK(table.counts == prostate_table());
    CHECK(table.total() == 475);
    const double ari = adjusted_rand(table);
    CHECK(ari == doctest::Approx(pair_count_ari(clusters, stage)).epsilon(1e-12));
    CHECK(ari == doctest::Approx(0.5280538972801626).epsilon(1e-12));
}

TEST_CASE("cross tabulation shapes") {
    const auto same = cross_tab({1, 1, 2, 2}, {1, 1, 2, 2});
    CHECK(same.counts == Eigen::Matrix2i::Identity() * 2);
    CHECK(same.row_labels == std::vector<int>{1, 2});
    const auto spread = cross_tab({0, 1, 2, 3, 4}, {7, 7, 7, 7, 7});
    CHECK(spread.counts.rows() == 5);
    CHECK(spread.counts.cols() == 1);
    CHECK((spread.counts.array() == 1).all());
    CHECK(spread.counts.colwise().sum()(0) == 5);
    CHECK_THROWS_AS(cross_tab({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("fitting a large simulated sample recovers the generating values") {
    auto spec = testing::small_mixed_spec(10000, 31, 2.5);
    spec.params.pi << 0.35, 0.65;
    spec.params = enforce_identifiability(spec.params, spec.layout());
    const auto sim = simulate(spec);
    FitConfig config;
    config.model = CovModel::VII;
    config.clusters = 2;
    config.max_iters = 60;
    config.window = 20;
    config.average_window = 20;
    config.mc_samples = 1000;
    const auto result = fit(sim.data, config);
    const auto& est = result.params;
    const Eigen::Index first = est.mu(0, 0) < 0.0 ? 0 : 1;
    const Eigen::Index second = 1 - first;
    CHECK(est.pi[first] == doctest::Approx(0.35).epsilon(0.05));
    CHECK(est.pi[second] == doctest::Approx(0.65).epsilon(0.05));
    for (Eigen::Index c = 0; c < 2; ++c) {
        CHECK(est.mu(first, c) == doctest::Approx(spec.params.mu(0, c)).epsilon(0.05));
        CHECK(est.mu(second, c) == doctest::Approx(spec.params.mu(1, c)).epsilon(0.05));
    }
    CHECK(adjusted_rand(result.assignments, sim.labels) > 0.95);
}
