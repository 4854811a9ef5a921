#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "clustmd/dataset.hpp"

namespace clustmd {

/// Contiguous latent block of one nominal variable.
struct NominalBlock {
    std::size_t first = 0;  // first latent dimension
    std::size_t width = 0;  // K_j - 1
    int levels = 0;         // K_j
};

/// Observed variables -> latent dimensions. Continuous dims come first,
/// then one dim per ordinal variable, then K_j - 1 dims per nominal variable.
struct LatentLayout {
    std::size_t continuous = 0;
    std::size_t ordinal = 0;
    std::vector<NominalBlock> nominal;
    std::size_t total = 0;  // P

    /// C + O, the block governed by lambda_g and the |A_g| = 1 normalization.
    std::size_t observed_scale_dims() const { return continuous + ordinal; }
    std::size_t nominal_dims() const { return total - continuous - ordinal; }
    std::size_t categorical_dims() const { return total - continuous; }
    bool has_nominal() const { return !nominal.empty(); }
};

LatentLayout build_layout(const Schema& schema);

/// Raised when an interval carries no probability mass in floating point.
class DegenerateIntervalError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// P(lo < z <= hi) for z ~ N(mu, sigma^2).
double ordinal_interval_prob(double mu, double sigma, double lo, double hi);

/// log P(lo < z <= hi), finite far into the tails where the probability
/// itself underflows.
double log_interval_prob(double mu, double sigma, double lo, double hi);

struct TruncatedMoments {
    double mean = 0.0;    // E[z | lo < z <= hi]
    double second = 0.0;  // E[z^2 | lo < z <= hi]
};

TruncatedMoments truncated_normal_moments(double mu, double sigma, double lo, double hi);

/// Monte Carlo summary of one (cluster, nominal variable) latent block.
struct NominalCell {
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> counts;  // per category, sums to samples
    Eigen::VectorXd probs;            // floored and renormalized, length K
    Eigen::MatrixXd mean;             // K x (K - 1), E[z | category]
    Eigen::MatrixXd second;           // K x (K - 1), E[z_p^2 | category]
};

/// Category of a latent vector: 1 when every component is <= 0, otherwise
/// 2 + index of the largest component (lowest index wins ties).
int nominal_category(const double* z, std::size_t width);

NominalCell nominal_mc_cell(const Eigen::VectorXd& mu, const Eigen::VectorXd& variance, std::size_t samples,
                            std::uint64_t seed);

/// cells[g][j] for cluster g and nominal variable j.
struct NominalMCTable {
    std::vector<std::vector<NominalCell>> cells;

    bool empty() const { return cells.empty(); }
    const NominalCell& at(std::size_t g, std::size_t j) const { return cells[g][j]; }
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t iteration, std::uint64_t g, std::uint64_t j);

}  // namespace clustmd
