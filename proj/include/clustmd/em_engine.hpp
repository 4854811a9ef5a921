#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clustmd/dataset.hpp"
#include "clustmd/latent_kernel.hpp"
#include "clustmd/model_params.hpp"

namespace clustmd {

/// Monte Carlo tables for every (cluster, nominal variable) pair at the
/// given parameters. Cell seeds derive from (master_seed, iteration, g, j).
NominalMCTable build_mc_table(const ModelParams& params, const LatentLayout& layout, std::size_t samples,
                              std::uint64_t master_seed, std::uint64_t iteration);

/// Conditional expectations from one E-step.
struct EStepQuantities {
    Eigen::MatrixXd tau;             // N x G responsibilities
    std::vector<Eigen::MatrixXd> m;  // per cluster, N x (P - C) first moments
    std::vector<Eigen::MatrixXd> s;  // per cluster, N x (P - C) second moments
    Eigen::VectorXd row_loglik;      // log sum_g pi_g f_g(y_i)
    std::size_t degenerate_rows = 0; // rows with zero density under every cluster

    double loglik() const { return row_loglik.sum(); }
};

EStepQuantities e_step(const MixedDataset& data, const ThresholdSet& thresholds, const LatentLayout& layout,
                       const ModelParams& params, const NominalMCTable& mc_table);

/// Responsibility-weighted sufficient statistics.
struct MStepWorkspace {
    Eigen::VectorXd mass;    // sum_i tau_ig
    Eigen::MatrixXd first;   // sum_i z*_igp tau_ig
    Eigen::MatrixXd second;  // zeta_gp: sum_i z_ip^2 tau_ig (continuous) or sum_i s_igp tau_ig

    double total() const { return mass.sum(); }
};

MStepWorkspace accumulate(const MixedDataset& data, const EStepQuantities& quantities, const LatentLayout& layout);

class EmptyClusterError : public std::runtime_error {
public:
    EmptyClusterError(std::size_t cluster, double mass);
    std::size_t cluster() const { return cluster_; }
    double mass() const { return mass_; }

private:
    std::size_t cluster_;
    double mass_;
};

/// Maximizes the expected complete-data log-likelihood under the model's
/// sharing constraints and the nominal identifiability constraints.
ModelParams m_step(const MStepWorkspace& work, const LatentLayout& layout, CovModel model);
ModelParams m_step(const MixedDataset& data, const EStepQuantities& quantities, const LatentLayout& layout,
                   CovModel model);

/// Expected complete-data log-likelihood up to additive constants.
double expected_complete_loglik(const MStepWorkspace& work, const ModelParams& params, const LatentLayout& layout);

enum class InitMethod { KMeans, Hierarchical, Random };

const char* to_string(InitMethod method);
std::optional<InitMethod> parse_init_method(std::string_view name);

/// Hard partition (labels 0..G-1, every group nonempty). Categorical codes
/// enter as their integer levels; every column is standardized.
std::vector<int> initial_partition(const MixedDataset& data, InitMethod method, std::size_t G, std::uint64_t seed);

/// One M-step from indicator responsibilities. Categorical latent moments
/// come from the pooled standard model (thresholds as estimated, nominal
/// blocks N(0, I)) conditioned on each observed level.
ModelParams params_from_partition(const MixedDataset& data, const ThresholdSet& thresholds,
                                  const LatentLayout& layout, const std::vector<int>& labels, std::size_t G,
                                  CovModel model, std::size_t mc_samples, std::uint64_t seed);

ModelParams initialize(const MixedDataset& data, const ThresholdSet& thresholds, const LatentLayout& layout,
                       InitMethod method, std::size_t G, std::uint64_t seed, CovModel model,
                       std::size_t mc_samples);

struct FitConfig {
    CovModel model = CovModel::VVI;
    std::size_t clusters = 2;
    std::size_t max_iters = 500;
    std::size_t mc_samples = 2000;
    std::uint64_t seed = 1;
    std::size_t window = 100;
    double tolerance = 1e-3;
    /// Average the last `average_window` iterates for the final estimate
    /// (only when nominal variables are present).
    bool average_final = true;
    std::size_t average_window = 100;
    InitMethod init = InitMethod::KMeans;
    /// Monte Carlo sample multiplier for the final likelihood tables.
    std::size_t final_sample_factor = 1;
    std::size_t max_restarts = 3;
    /// Called after every M-step with the 1-based iteration number.
    std::function<void(std::size_t, const ModelParams&)> on_iteration;

    void validate() const;
};

struct FitResult {
    ModelParams params;
    std::vector<int> assignments;         // argmax_g tau_ig, 0-based
    Eigen::MatrixXd tau;
    std::vector<Eigen::VectorXd> trace;   // flattened parameters after each M-step
    std::vector<double> loglik_trace;     // observed log-likelihood at each E-step
    double approx_loglik = 0.0;
    double bic = 0.0;
    long free_parameters = 0;
    std::size_t iterations = 0;
    bool converged = false;
    std::size_t restarts = 0;
    std::vector<std::string> warnings;
    NominalMCTable final_table;
};

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// True when the running mean over the last `window` iterates moved by less
/// than `tolerance` (relative) from the preceding window for every scalar.
/// With `monte_carlo`, a change within three batch-means standard errors of
/// zero also counts as settled.
bool window_converged(const std::vector<Eigen::VectorXd>& trace, std::size_t window, double tolerance,
                      bool monte_carlo);

FitResult fit(const MixedDataset& data, const FitConfig& config);
FitResult fit(const MixedDataset& data, const FitConfig& config, const ModelParams& start);

}  // namespace clustmd
