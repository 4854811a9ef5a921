#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "helpers.hpp"

#include "clustmd/latent_kernel.hpp"

using namespace clustmd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact category probabilities of a two-dimensional nominal block with
// independent components, by one-dimensional quadrature:
// P(1) = Phi(-m1/s1) Phi(-m2/s2), P(2) = int_0^inf phi1(x) Phi((x - m2)/s2) dx.
Eigen::Vector3d exact_three_level(double m1, double s1, double m2, double s2) {
    using boost::math::quadrature::gauss_kronrod;
    auto win = [](double ma, double sa, double mb, double sb) {
        auto f = [&](double x) {
            const double u = (x - ma) / sa;
            return std::exp(-0.5 * u * u) / (sa * std::sqrt(2.0 * M_PI)) * testing::phi_cdf((x - mb) / sb);
        };
        const double hi = std::max(0.0, ma) + 40.0 * sa;
        double total = 0.0;
        const double mid = std::max(0.0, ma);
        if (mid > 0.0) total += gauss_kronrod<double, 61>::integrate(f, 0.0, mid, 15, 1e-14);
        total += gauss_kronrod<double, 61>::integrate(f, mid, hi, 15, 1e-14);
        return total;
    };
    Eigen::Vector3d p;
    p[0] = testing::phi_cdf(-m1 / s1) * testing::phi_cdf(-m2 / s2);
    p[1] = win(m1, s1, m2, s2);
    p[2] = win(m2, s2, m1, s1);
    return p;
}

}  // namespace

TEST_CASE("latent layout dimensions") {
    Schema s{{"x1", ColumnKind::Continuous, 0}, {"x2", ColumnKind::Continuous, 0},
             {"x3", ColumnKind::Continuous, 0}, {"x4", ColumnKind::Continuous, 0},
             {"o1", ColumnKind::Ordinal, 2},    {"o2", ColumnKind::Ordinal, 4},
             {"o3", ColumnKind::Ordinal, 3},    {"n1", ColumnKind::Nominal, 3},
             {"n2", ColumnKind::Nominal, 3},    {"n3", ColumnKind::Nominal, 4}};
    const auto layout = build_layout(s);
    CHECK(layout.total == 14);
    CHECK(layout.observed_scale_dims() == 7);
    CHECK(layout.nominal_dims() == 7);
    REQUIRE(layout.nominal.size() == 3);
    CHECK(layout.nominal[1].first == 9);
    CHECK(layout.nominal[2].width == 3);

    CHECK(build_layout({{"a", ColumnKind::Continuous, 0}, {"b", ColumnKind::Continuous, 0},
                        {"c", ColumnKind::Ordinal, 2}, {"d", ColumnKind::Nominal, 3}})
              .total == 5);
    CHECK(build_layout({{"a", ColumnKind::Ordinal, 2}, {"b", ColumnKind::Ordinal, 5}}).total == 2);
}

TEST_CASE("interval probabilities") {
    CHECK(ordinal_interval_prob(0.0, 1.0, -kInf, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(ordinal_interval_prob(0.0, 1.0, -1.0, 1.0) == doctest::Approx(0.6826894921370859).epsilon(1e-14));
    CHECK(ordinal_interval_prob(1.0, 2.0, 1.0, kInf) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(ordinal_interval_prob(0.0, 1.0, 0.3, 0.3) == 0.0);
    CHECK_THROWS_AS(ordinal_interval_prob(0.0, 0.0, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ordinal_interval_prob(0.0, -1.0, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ordinal_interval_prob(0.0, 1.0, 1.0, -1.0), std::invalid_argument);

    // log form stays finite where the probability underflows
    const double lp = log_interval_prob(0.0, 1.0, 40.0, kInf);
    CHECK(std::isfinite(lp));
    CHECK(lp == doctest::Approx(-0.5 * 1600.0 - std::log(40.0) - 0.5 * std::log(2.0 * M_PI)).epsilon(1e-6));
    CHECK(log_interval_prob(0.0, 1.0, -1.0, 1.0) == doctest::Approx(std::log(0.6826894921370859)).epsilon(1e-13));
}

TEST_CASE("ordinal probabilities over a full threshold set sum to one") {
    const std::vector<double> gamma{-kInf, -1.2, -0.1, 0.4, 2.0, kInf};
    std::mt19937_64 rng(11);
    std::normal_distribution<double> mu(0.0, 3.0);
    std::uniform_real_distribution<double> sigma(0.05, 5.0);
    for (int r = 0; r < 200; ++r) {
        const double m = mu(rng);
        const double s = sigma(rng);
        double total = 0.0;
        for (std::size_t k = 1; k < gamma.size(); ++k) total += ordinal_interval_prob(m, s, gamma[k - 1], gamma[k]);
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("truncated moments match closed forms") {
    SUBCASE("half line") {
        const auto m = truncated_normal_moments(0.0, 1.0, 0.0, kInf);
        CHECK(m.mean == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(1e-14));
        CHECK(m.second == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("symmetric interval") {
        const auto m = truncated_normal_moments(0.0, 1.0, -1.0, 1.0);
        CHECK(std::abs(m.mean) < 1e-15);
        const double phi1 = std::exp(-0.5) / std::sqrt(2.0 * M_PI);
        CHECK(m.second == doctest::Approx(1.0 - 2.0 * phi1 / 0.6826894921370859).epsilon(1e-13));
    }
    SUBCASE("whole line") {
        const auto m = truncated_normal_moments(1.5, 2.0, -kInf, kInf);
        CHECK(m.mean == doctest::Approx(1.5).epsilon(1e-15));
        CHECK(m.second == doctest::Approx(1.5 * 1.5 + 4.0).epsilon(1e-15));
    }
    SUBCASE("far tail") {
        const auto m = truncated_normal_moments(0.0, 1.0, 30.0, kInf);
        CHECK(m.mean > 30.0);
        CHECK(m.mean == doctest::Approx(30.0 + 1.0 / 30.0).epsilon(1e-4));
        const auto l = truncated_normal_moments(0.0, 1.0, -kInf, -30.0);
        CHECK(l.mean == doctest::Approx(-m.mean).epsilon(1e-15));
    }
    CHECK_THROWS_AS(truncated_normal_moments(0.0, 1.0, 1.0, 1.0), DegenerateIntervalError);
    CHECK_THROWS_AS(truncated_normal_moments(0.0, -1.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("truncated moments agree with quadrature") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> mu(0.0, 2.0);
    std::uniform_real_distribution<double> sigma(0.1, 4.0);
    std::normal_distribution<double> edge(0.0, 2.5);
    std::bernoulli_distribution open(0.2);
    for (int r = 0; r < 300; ++r) {
        const double m = mu(rng);
        const double s = sigma(rng);
        double lo = edge(rng);
        double hi = edge(rng);
        if (lo > hi) std::swap(lo, hi);
        if (hi - lo < 1e-3) hi = lo + 0.5;
        if (open(rng)) lo = -kInf;
        if (open(rng)) hi = kInf;
        const auto got = truncated_normal_moments(m, s, lo, hi);
        const auto want = testing::quadrature_moments(m, s, lo, hi);
        const double scale = 1.0 + std::abs(want.mean);
        CHECK(std::abs(got.mean - want.mean) <= 1e-8 * scale);
        CHECK(std::abs(got.second - want.second) <= 1e-8 * scale * scale);
        CHECK(got.second >= got.mean * got.mean);
        if (!std::isinf(lo)) CHECK(got.mean >= lo);
        if (!std::isinf(hi)) CHECK(got.mean <= hi);
    }
}

TEST_CASE("interval moments recompose the untruncated moments") {
    const std::vector<double> gamma{-kInf, -0.7, 0.2, 1.1, kInf};
    const double mu = 0.4;
    const double sigma = 1.3;
    double first = 0.0;
    double second = 0.0;
    for (std::size_t k = 1; k < gamma.size(); ++k) {
        const double p = ordinal_interval_prob(mu, sigma, gamma[k - 1], gamma[k]);
        const auto m = truncated_normal_moments(mu, sigma, gamma[k - 1], gamma[k]);
        first += p * m.mean;
        second += p * m.second;
    }
    CHECK(first == doctest::Approx(mu).epsilon(1e-13));
    CHECK(second == doctest::Approx(mu * mu + sigma * sigma).epsilon(1e-13));
}

TEST_CASE("nominal category rule") {
    const double all_negative[] = {-0.1, -2.0};
    const double second_largest[] = {0.3, 0.9};
    const double first_largest[] = {1.5, -0.2};
    const double tie[] = {0.7, 0.7, -1.0};
    const double zero[] = {0.0, 0.0};
    CHECK(nominal_category(all_negative, 2) == 1);
    CHECK(nominal_category(second_largest, 2) == 3);
    CHECK(nominal_category(first_largest, 2) == 2);
    CHECK(nominal_category(tie, 3) == 2);
    CHECK(nominal_category(zero, 2) == 1);
}

TEST_CASE("Monte Carlo nominal cell bookkeeping") {
    const Eigen::Vector2d mu(0.3, -0.4);
    const Eigen::Vector2d var(1.2, 0.7);
    const auto cell = nominal_mc_cell(mu, var, 5000, 42);
    std::size_t total = 0;
    for (auto c : cell.counts) total += c;
    CHECK(total == 5000);
    CHECK(cell.probs.sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cell.mean.rows() == 3);
    CHECK(cell.mean.cols() == 2);
    // category 1 means no component above zero
    CHECK(cell.mean(0, 0) <= 0.0);
    CHECK(cell.mean(0, 1) <= 0.0);
    CHECK(cell.mean(1, 0) > 0.0);
    CHECK(cell.mean(2, 1) > 0.0);
    CHECK((cell.second.array() >= cell.mean.array().square() - 1e-12).all());

    const auto again = nominal_mc_cell(mu, var, 5000, 42);
    CHECK(again.counts == cell.counts);
    CHECK(again.mean == cell.mean);
    const auto other = nominal_mc_cell(mu, var, 5000, 43);
    CHECK(other.counts != cell.counts);
    CHECK_THROWS_AS(nominal_mc_cell(mu, var, 0, 1), std::invalid_argument);
}

TEST_CASE("symmetric three-level block") {
    const std::size_t S = 200000;
    const auto cell = nominal_mc_cell(Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones(), S, 7);
    const Eigen::Vector3d want(0.25, 0.375, 0.375);
    for (int k = 0; k < 3; ++k) {
        const double se = std::sqrt(want[k] * (1.0 - want[k]) / static_cast<double>(S));
        CHECK(std::abs(cell.probs[k] - want[k]) <= 4.0 * se);
    }
}

TEST_CASE("two-level block reduces to the ordinal probability") {
    const std::size_t S = 100000;
    Eigen::VectorXd mu(1);
    mu << 0.35;
    Eigen::VectorXd var(1);
    var << 2.0;
    const auto cell = nominal_mc_cell(mu, var, S, 9);
    const double p2 = ordinal_interval_prob(0.35, std::sqrt(2.0), 0.0, kInf);
    const double se = std::sqrt(p2 * (1.0 - p2) / static_cast<double>(S));
    CHECK(std::abs(cell.probs[1] - p2) <= 4.0 * se);
    const auto upper = truncated_normal_moments(0.35, std::sqrt(2.0), 0.0, kInf);
    CHECK(cell.mean(1, 0) == doctest::Approx(upper.mean).epsilon(0.02));
}

TEST_CASE("empty categories get the floor and untruncated moments") {
    const Eigen::Vector2d mu(-12.0, -12.0);
    const Eigen::Vector2d var(1.0, 1.0);
    const auto cell = nominal_mc_cell(mu, var, 1000, 3);
    CHECK(cell.counts[0] == 1000);
    CHECK(cell.counts[1] == 0);
    const double floor = 0.5 / 1000.0;
    CHECK(cell.probs[1] == doctest::Approx(floor / (1.0 + 2.0 * floor)).epsilon(1e-14));
    CHECK(cell.probs[1] > 0.0);
    CHECK(cell.mean(1, 0) == -12.0);
    CHECK(cell.second(2, 1) == doctest::Approx(145.0).epsilon(1e-15));
}

TEST_CASE("Monte Carlo error shrinks at the square-root rate") {
    const double m1 = 0.4, s1 = 1.1, m2 = -0.2, s2 = 0.8;
    const Eigen::Vector3d exact = exact_three_level(m1, s1, m2, s2);
    CHECK(exact.sum() == doctest::Approx(1.0).epsilon(1e-10));
    const Eigen::Vector2d mu(m1, m2);
    const Eigen::Vector2d var(s1 * s1, s2 * s2);
    auto rms = [&](std::size_t S) {
        double acc = 0.0;
        const int reps = 200;
        for (int r = 0; r < reps; ++r) {
            const auto cell = nominal_mc_cell(mu, var, S, mix_seed(S, static_cast<std::uint64_t>(r)));
            acc += (cell.probs - exact).squaredNorm();
        }
        return std::sqrt(acc / reps);
    };
    const double small = rms(1000);
    const double large = rms(4000);
    const double ratio = small / large;
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.5);
}

TEST_CASE("seed derivation separates streams") {
    CHECK(derive_seed(1, 2, 0, 0) == derive_seed(1, 2, 0, 0));
    CHECK(derive_seed(1, 2, 0, 0) != derive_seed(1, 2, 0, 1));
    CHECK(derive_seed(1, 2, 0, 0) != derive_seed(1, 2, 1, 0));
    CHECK(derive_seed(1, 2, 0, 0) != derive_seed(1, 3, 0, 0));
    CHECK(derive_seed(1, 2, 0, 0) != derive_seed(2, 2, 0, 0));
}
