#include "clustmd/latent_kernel.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "clustmd/normal.hpp"

namespace clustmd {

LatentLayout build_layout(const Schema& schema) {
    LatentLayout layout;
    for (const auto& c : schema) {
        switch (c.kind) {
            case ColumnKind::Continuous: ++layout.continuous; break;
            case ColumnKind::Ordinal: ++layout.ordinal; break;
            case ColumnKind::Nominal: break;
        }
    }
    std::size_t next = layout.continuous + layout.ordinal;
    for (const auto& c : schema) {
        if (c.kind == ColumnKind::Nominal) {
            NominalBlock block;
            block.first = next;
            block.width = static_cast<std::size_t>(c.levels - 1);
            block.levels = c.levels;
            next += block.width;
            layout.nominal.push_back(block);
        }
    }
    layout.total = next;
    return layout;
}

namespace {

// Standardized truncated normal summary on (a, b].
struct StandardTruncation {
    double mass = 0.0;
    double log_mass = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

[[noreturn]] void throw_degenerate(double a, double b) {
    std::ostringstream os;
    os << "interval (" << a << ", " << b << "] in standard units carries no probability mass";
    throw DegenerateIntervalError(os.str());
}

// a >= 0: everything is expressed relative to phi(a) through the scaled
// complementary error function, so nothing underflows in the far tail.
StandardTruncation right_tail(double a, double b) {
    const double ra = normal::upper_mills(a);
    double e = 0.0;
    double one_minus_e = 1.0;
    double rb = 0.0;
    double b_e = 0.0;
    if (!std::isinf(b)) {
        const double x = -0.5 * (b - a) * (b + a);
        e = std::exp(x);
        one_minus_e = -std::expm1(x);
        rb = normal::upper_mills(b);
        b_e = b * e;
    }
    const double d = ra - e * rb;  // mass / phi(a)
    if (!(d > 0.0) || !std::isfinite(d)) {
        throw_degenerate(a, b);
    }
    StandardTruncation t;
    t.log_mass = normal::log_pdf(a) + std::log(d);
    t.mass = std::exp(t.log_mass);
    t.mean = one_minus_e / d;
    const double second = 1.0 + (a - b_e) / d;
    t.variance = std::max(0.0, second - t.mean * t.mean);
    return t;
}

StandardTruncation standard_truncation(double a, double b) {
    if (!(b > a)) {
        throw_degenerate(a, b);
    }
    if (a >= 0.0) {
        return right_tail(a, b);
    }
    if (b <= 0.0) {
        auto t = right_tail(-b, -a);
        t.mean = -t.mean;
        return t;
    }
    const double pa = std::isinf(a) ? 0.0 : normal::pdf(a);
    const double pb = std::isinf(b) ? 0.0 : normal::pdf(b);
    const double apa = std::isinf(a) ? 0.0 : a * pa;
    const double bpb = std::isinf(b) ? 0.0 : b * pb;
    StandardTruncation t;
    t.mass = 1.0 - normal::cdf(a) - normal::ccdf(b);
    if (!(t.mass > 0.0)) {
        throw_degenerate(a, b);
    }
    t.log_mass = std::log(t.mass);
    t.mean = (pa - pb) / t.mass;
    const double second = 1.0 + (apa - bpb) / t.mass;
    t.variance = std::max(0.0, second - t.mean * t.mean);
    return t;
}

void check_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("standard deviation must be positive and finite");
    }
}

}  // namespace

double ordinal_interval_prob(double mu, double sigma, double lo, double hi) {
    check_sigma(sigma);
    if (hi < lo) {
        throw std::invalid_argument("interval bounds out of order");
    }
    if (hi == lo) {
        return 0.0;
    }
    const double a = (lo - mu) / sigma;
    const double b = (hi - mu) / sigma;
    if (a >= 0.0) {
        return normal::ccdf(a) - normal::ccdf(b);
    }
    if (b <= 0.0) {
        return normal::cdf(b) - normal::cdf(a);
    }
    return 1.0 - normal::cdf(a) - normal::ccdf(b);
}

double log_interval_prob(double mu, double sigma, double lo, double hi) {
    check_sigma(sigma);
    if (hi < lo) {
        throw std::invalid_argument("interval bounds out of order");
    }
    if (hi == lo) {
        return -std::numeric_limits<double>::infinity();
    }
    try {
        return standard_truncation((lo - mu) / sigma, (hi - mu) / sigma).log_mass;
    } catch (const DegenerateIntervalError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

TruncatedMoments truncated_normal_moments(double mu, double sigma, double lo, double hi) {
    check_sigma(sigma);
    const auto t = standard_truncation((lo - mu) / sigma, (hi - mu) / sigma);
    TruncatedMoments m;
    m.mean = mu + sigma * t.mean;
    if (!std::isinf(lo)) {
        m.mean = std::max(m.mean, lo);
    }
    if (!std::isinf(hi)) {
        m.mean = std::min(m.mean, hi);
    }
    m.second = m.mean * m.mean + sigma * sigma * t.variance;
    return m;
}

int nominal_category(const double* z, std::size_t width) {
    std::size_t best = 0;
    for (std::size_t d = 1; d < width; ++d) {
        if (z[d] > z[best]) {
            best = d;
        }
    }
    return z[best] > 0.0 ? static_cast<int>(best) + 2 : 1;
}

NominalCell nominal_mc_cell(const Eigen::VectorXd& mu, const Eigen::VectorXd& variance, std::size_t samples,
                            std::uint64_t seed) {
    if (samples == 0) {
        throw std::invalid_argument("Monte Carlo sample count must be positive");
    }
    const auto width = static_cast<std::size_t>(mu.size());
    const std::size_t levels = width + 1;
    NominalCell cell;
    cell.samples = samples;
    cell.seed = seed;
    cell.counts.assign(levels, 0);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(levels, width);
    Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(levels, width);
    const Eigen::VectorXd sd = variance.array().sqrt();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> standard(0.0, 1.0);
    std::vector<double> z(width);
    for (std::size_t s = 0; s < samples; ++s) {
        for (std::size_t d = 0; d < width; ++d) {
            z[d] = mu[d] + sd[d] * standard(rng);
        }
        const auto k = static_cast<std::size_t>(nominal_category(z.data(), width) - 1);
        ++cell.counts[k];
        for (std::size_t d = 0; d < width; ++d) {
            sum(k, d) += z[d];
            sum_sq(k, d) += z[d] * z[d];
        }
    }

    const double floor = 0.5 / static_cast<double>(samples);
    cell.probs.resize(levels);
    cell.mean.resize(levels, width);
    cell.second.resize(levels, width);
    for (std::size_t k = 0; k < levels; ++k) {
        const auto c = cell.counts[k];
        if (c == 0) {
            cell.probs[k] = floor;
            cell.mean.row(k) = mu.transpose();
            cell.second.row(k) = (mu.array().square() + variance.array()).matrix().transpose();
        } else {
            cell.probs[k] = static_cast<double>(c) / static_cast<double>(samples);
            cell.mean.row(k) = sum.row(k) / static_cast<double>(c);
            cell.second.row(k) = sum_sq.row(k) / static_cast<double>(c);
        }
    }
    cell.probs /= cell.probs.sum();
    return cell;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a combined word
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t iteration, std::uint64_t g, std::uint64_t j) {
    return mix_seed(mix_seed(mix_seed(master, iteration), g), j);
}

}  // namespace clustmd
