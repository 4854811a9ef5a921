#pragma once

#include <optional>
#include <string>
#include <vector>

#include "clustmd/dataset.hpp"
#include "clustmd/em_engine.hpp"
#include "clustmd/latent_kernel.hpp"
#include "clustmd/model_params.hpp"

namespace clustmd {

/// Observed categorical response patterns with their probabilities.
struct PatternTable {
    struct Pattern {
        std::vector<int> codes;       // ordinal then nominal codes
        std::size_t count = 0;        // rows showing this pattern
        Eigen::VectorXd log_q_given;  // log q_gm per cluster
        double log_q = 0.0;           // log sum_g pi_g q_gm
    };
    std::vector<Pattern> patterns;

    std::size_t total() const;
};

PatternTable build_pattern_table(const MixedDataset& data, const ModelParams& params, const ThresholdSet& thresholds,
                                 const LatentLayout& layout, const NominalMCTable& mc_table);

/// Log of the approximated observed likelihood: the continuous block's
/// mixture density times the marginal categorical pattern probability,
/// treating the two blocks as independent.
double approx_loglik(const MixedDataset& data, const ModelParams& params, const ThresholdSet& thresholds,
                     const LatentLayout& layout, const NominalMCTable& mc_table);

/// 2 log L - nu log N.
double bic_hat(double loglik, long free_parameters, long N);

struct SelectionCell {
    CovModel model = CovModel::VVI;
    std::size_t clusters = 1;
    bool ok = false;
    std::string error;
    double bic = 0.0;
    double loglik = 0.0;
    long free_parameters = 0;
    bool converged = false;
    std::size_t iterations = 0;
    std::optional<FitResult> result;
};

struct SelectionReport {
    std::vector<SelectionCell> cells;
    std::optional<std::size_t> best;  // index into cells
    bool best_converged = false;

    const SelectionCell& winner() const { return cells.at(best.value()); }
};

class SelectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Picks the maximal BIC-hat among converged cells (ties: fewer parameters,
/// then smaller G). When no cell converged, falls back to all finished
/// cells and flags the report.
void choose_best(SelectionReport& report);

/// Fits every (model, G) cell on `jobs` worker threads. Each cell's seed
/// derives from the base configuration's seed, model and G.
SelectionReport grid_search(const MixedDataset& data, const std::vector<CovModel>& models,
                            const std::vector<std::size_t>& cluster_counts, const FitConfig& base,
                            std::size_t jobs = 0, bool keep_results = true);

/// Model x G table of BIC-hat values.
std::string format_bic_table(const SelectionReport& report);

}  // namespace clustmd
