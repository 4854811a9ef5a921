#include "clustmd/selection.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "clustmd/normal.hpp"

namespace clustmd {

std::size_t PatternTable::total() const {
    std::size_t n = 0;
    for (const auto& p : patterns) n += p.count;
    return n;
}

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
    const double top = v.maxCoeff();
    if (!std::isfinite(top)) {
        return top;
    }
    return top + std::log((v.array() - top).exp().sum());
}

}  // namespace

PatternTable build_pattern_table(const MixedDataset& data, const ModelParams& params, const ThresholdSet& thresholds,
                                 const LatentLayout& layout, const NominalMCTable& mc_table) {
    PatternTable table;
    if (layout.categorical_dims() == 0) {
        return table;
    }
    std::map<std::vector<int>, std::size_t> index;
    const auto width = static_cast<std::size_t>(data.codes().cols());
    for (std::size_t i = 0; i < data.rows(); ++i) {
        std::vector<int> codes(width);
        for (std::size_t k = 0; k < width; ++k) codes[k] = data.codes()(i, k);
        auto [it, inserted] = index.try_emplace(std::move(codes), table.patterns.size());
        if (inserted) {
            table.patterns.push_back({it->first, 0, {}, 0.0});
        }
        ++table.patterns[it->second].count;
    }

    const auto G = params.clusters();
    const Eigen::ArrayXd log_pi = params.pi.array().log();
    std::vector<Eigen::VectorXd> sd(G);
    for (std::size_t g = 0; g < G; ++g) sd[g] = sigma_diagonal(params, g, layout).array().sqrt();
    for (auto& pattern : table.patterns) {
        pattern.log_q_given.resize(static_cast<Eigen::Index>(G));
        for (std::size_t g = 0; g < G; ++g) {
            double lq = 0.0;
            for (std::size_t o = 0; o < layout.ordinal; ++o) {
                const auto p = layout.continuous + o;
                const auto k = static_cast<std::size_t>(pattern.codes[o]);
                lq += log_interval_prob(params.mu(g, p), sd[g][p], thresholds[o][k - 1], thresholds[o][k]);
            }
            for (std::size_t j = 0; j < layout.nominal.size(); ++j) {
                const auto k = pattern.codes[layout.ordinal + j] - 1;
                lq += std::log(mc_table.at(g, j).probs[k]);
            }
            pattern.log_q_given[static_cast<Eigen::Index>(g)] = lq;
        }
        pattern.log_q = log_sum_exp(pattern.log_q_given + log_pi.matrix());
        if (!(pattern.log_q <= 0.0 + 1e-12) || !std::isfinite(pattern.log_q)) {
            throw std::logic_error("pattern probability outside (0, 1]");
        }
    }
    return table;
}

double approx_loglik(const MixedDataset& data, const ModelParams& params, const ThresholdSet& thresholds,
                     const LatentLayout& layout, const NominalMCTable& mc_table) {
    double total = 0.0;
    const auto C = static_cast<Eigen::Index>(layout.continuous);
    const auto G = params.clusters();
    if (C > 0) {
        const auto N = static_cast<Eigen::Index>(data.rows());
        Eigen::MatrixXd log_weight(N, static_cast<Eigen::Index>(G));
        for (std::size_t g = 0; g < G; ++g) {
            const auto gi = static_cast<Eigen::Index>(g);
            const Eigen::ArrayXd sd = sigma_diagonal(params, g, layout).head(C).array().sqrt();
            const Eigen::ArrayXd mu = params.mu.row(gi).head(C).transpose().array();
            const double log_norm = std::log(params.pi[gi]) - static_cast<double>(C) * normal::kLogSqrt2Pi -
                                    sd.log().sum();
            const Eigen::MatrixXd z =
                ((data.continuous().array().rowwise() - mu.transpose()).rowwise() / sd.transpose()).matrix();
            log_weight.col(gi) = (log_norm - 0.5 * z.rowwise().squaredNorm().array()).matrix();
        }
        for (Eigen::Index i = 0; i < N; ++i) {
            total += log_sum_exp(log_weight.row(i).transpose());
        }
    }
    const auto patterns = build_pattern_table(data, params, thresholds, layout, mc_table);
    for (const auto& p : patterns.patterns) {
        total += static_cast<double>(p.count) * p.log_q;
    }
    return total;
}

double bic_hat(double loglik, long free_parameters, long N) {
    if (N < 1) {
        throw std::invalid_argument("bic_hat: N must be at least 1");
    }
    return 2.0 * loglik - static_cast<double>(free_parameters) * std::log(static_cast<double>(N));
}

void choose_best(SelectionReport& report) {
    report.best.reset();
    report.best_converged = false;
    auto better = [&](std::size_t a, std::size_t b) {
        const auto& x = report.cells[a];
        const auto& y = report.cells[b];
        if (x.bic != y.bic) return x.bic > y.bic;
        if (x.free_parameters != y.free_parameters) return x.free_parameters < y.free_parameters;
        return x.clusters < y.clusters;
    };
    for (bool require_converged : {true, false}) {
        for (std::size_t c = 0; c < report.cells.size(); ++c) {
            const auto& cell = report.cells[c];
            if (!cell.ok || !std::isfinite(cell.bic) || (require_converged && !cell.converged)) {
                continue;
            }
            if (!report.best || better(c, *report.best)) {
                report.best = c;
            }
        }
        if (report.best) {
            report.best_converged = require_converged;
            return;
        }
    }
}

SelectionReport grid_search(const MixedDataset& data, const std::vector<CovModel>& models,
                            const std::vector<std::size_t>& cluster_counts, const FitConfig& base, std::size_t jobs,
                            bool keep_results) {
    if (models.empty() || cluster_counts.empty()) {
        throw std::invalid_argument("grid_search: empty model or cluster grid");
    }
    SelectionReport report;
    for (auto model : models) {
        for (auto G : cluster_counts) {
            SelectionCell cell;
            cell.model = model;
            cell.clusters = G;
            report.cells.push_back(std::move(cell));
        }
    }
    if (jobs == 0) {
        jobs = std::max(1u, std::thread::hardware_concurrency());
    }
    jobs = std::min(jobs, report.cells.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t c = next++; c < report.cells.size(); c = next++) {
            auto& cell = report.cells[c];
            FitConfig config = base;
            config.model = cell.model;
            config.clusters = cell.clusters;
            config.seed = mix_seed(base.seed, static_cast<std::uint64_t>(cell.model) * 1000 + cell.clusters);
            config.on_iteration = nullptr;
            try {
                auto result = fit(data, config);
                cell.ok = true;
                cell.bic = result.bic;
                cell.loglik = result.approx_loglik;
                cell.free_parameters = result.free_parameters;
                cell.converged = result.converged;
                cell.iterations = result.iterations;
                if (keep_results) {
                    cell.result = std::move(result);
                }
            } catch (const std::exception& e) {
                cell.ok = false;
                cell.error = e.what();
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    choose_best(report);
    if (!report.best) {
        std::ostringstream os;
        os << "every grid cell failed:";
        for (const auto& cell : report.cells) {
            os << "\n  " << model_name(cell.model) << " G=" << cell.clusters << ": " << cell.error;
        }
        throw SelectionError(os.str());
    }
    return report;
}

std::string format_bic_table(const SelectionReport& report) {
    std::vector<std::size_t> gs;
    std::vector<CovModel> models;
    for (const auto& c : report.cells) {
        if (std::find(gs.begin(), gs.end(), c.clusters) == gs.end()) gs.push_back(c.clusters);
        if (std::find(models.begin(), models.end(), c.model) == models.end()) models.push_back(c.model);
    }
    std::sort(gs.begin(), gs.end());
    std::ostringstream os;
    os << std::setw(6) << "model";
    for (auto g : gs) os << std::setw(14) << ("G=" + std::to_string(g));
    os << '\n';
    for (auto m : models) {
        os << std::setw(6) << model_name(m);
        for (auto g : gs) {
            std::string text = "-";
            for (std::size_t c = 0; c < report.cells.size(); ++c) {
                const auto& cell = report.cells[c];
                if (cell.model != m || cell.clusters != g) continue;
                if (!cell.ok) {
                    text = "failed";
                } else {
                    std::ostringstream v;
                    v << std::fixed << std::setprecision(2) << cell.bic;
                    if (!cell.converged) v << '~';
                    if (report.best && *report.best == c) v << '*';
                    text = v.str();
                }
            }
            os << std::setw(14) << text;
        }
        os << '\n';
    }
    os << "(* selected, ~ not converged)\n";
    return os.str();
}

}  // namespace clustmd
