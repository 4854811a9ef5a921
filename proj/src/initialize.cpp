#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "clustmd/em_engine.hpp"

namespace clustmd {

const char* to_string(InitMethod method) {
    switch (method) {
        case InitMethod::KMeans: return "kmeans";
        case InitMethod::Hierarchical: return "hierarchical";
        case InitMethod::Random: return "random";
    }
    return "?";
}

std::optional<InitMethod> parse_init_method(std::string_view name) {
    if (name == "kmeans") return InitMethod::KMeans;
    if (name == "hierarchical") return InitMethod::Hierarchical;
    if (name == "random") return InitMethod::Random;
    return std::nullopt;
}

namespace {

constexpr int kMaxPartitionAttempts = 10;

// Continuous values and categorical codes side by side, each column scaled
// to zero mean and unit variance (constant columns become zero).
Eigen::MatrixXd standardized_coding(const MixedDataset& data) {
    const auto N = static_cast<Eigen::Index>(data.rows());
    const auto C = data.continuous().cols();
    Eigen::MatrixXd x(N, C + data.codes().cols());
    x.leftCols(C) = data.continuous();
    x.rightCols(data.codes().cols()) = data.codes().cast<double>();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double mean = x.col(c).mean();
        x.col(c).array() -= mean;
        const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(N));
        if (sd > 0.0) {
            x.col(c) /= sd;
        }
    }
    return x;
}

bool all_groups_used(const std::vector<int>& labels, std::size_t G) {
    std::vector<bool> used(G, false);
    for (int l : labels) used[static_cast<std::size_t>(l)] = true;
    return std::all_of(used.begin(), used.end(), [](bool b) { return b; });
}

std::vector<int> random_partition(std::size_t N, std::size_t G, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(G) - 1);
    std::vector<int> labels(N);
    for (auto& l : labels) l = pick(rng);
    return labels;
}

std::vector<int> kmeans_partition(const Eigen::MatrixXd& x, std::size_t G, std::mt19937_64& rng) {
    const auto N = x.rows();
    const auto k = static_cast<Eigen::Index>(G);
    Eigen::MatrixXd centres(k, x.cols());

    // k-means++ seeding
    std::uniform_int_distribution<Eigen::Index> first(0, N - 1);
    centres.row(0) = x.row(first(rng));
    Eigen::VectorXd nearest = (x.rowwise() - centres.row(0)).rowwise().squaredNorm();
    for (Eigen::Index c = 1; c < k; ++c) {
        const double total = nearest.sum();
        Eigen::Index chosen = first(rng);
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            for (Eigen::Index i = 0; i < N; ++i) {
                target -= nearest[i];
                if (target <= 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        centres.row(c) = x.row(chosen);
        nearest = nearest.cwiseMin((x.rowwise() - centres.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels(static_cast<std::size_t>(N), -1);
    for (int it = 0; it < 300; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < N; ++i) {
            Eigen::Index best;
            (centres.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
            if (labels[i] != static_cast<int>(best)) {
                labels[i] = static_cast<int>(best);
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        centres.setZero();
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (Eigen::Index i = 0; i < N; ++i) {
            centres.row(labels[i]) += x.row(i);
            counts[labels[i]] += 1.0;
        }
        for (Eigen::Index c = 0; c < k; ++c) {
            if (counts[c] > 0.0) centres.row(c) /= counts[c];
        }
    }
    return labels;
}

// Complete linkage by the nearest-neighbour chain algorithm; the merge list
// is then replayed in height order and stopped at G groups.
std::vector<int> hierarchical_partition(const Eigen::MatrixXd& x, std::size_t G) {
    const auto N = static_cast<std::size_t>(x.rows());
    std::vector<double> dist(N * N);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = i; j < N; ++j) {
            const double d = (x.row(i) - x.row(j)).norm();
            dist[i * N + j] = d;
            dist[j * N + i] = d;
        }
    }
    struct Merge {
        std::size_t a, b;
        double height;
    };
    std::vector<Merge> merges;
    std::vector<bool> active(N, true);
    std::vector<std::size_t> chain;
    std::size_t remaining = N;
    while (remaining > 1) {
        if (chain.empty()) {
            chain.push_back(static_cast<std::size_t>(std::find(active.begin(), active.end(), true) - active.begin()));
        }
        const auto top = chain.back();
        std::size_t best = N;
        double best_d = std::numeric_limits<double>::infinity();
        if (chain.size() > 1) {
            best = chain[chain.size() - 2];
            best_d = dist[top * N + best];
        }
        for (std::size_t k = 0; k < N; ++k) {
            if (active[k] && k != top && dist[top * N + k] < best_d) {
                best = k;
                best_d = dist[top * N + k];
            }
        }
        if (chain.size() > 1 && best == chain[chain.size() - 2]) {
            chain.pop_back();
            chain.pop_back();
            const auto keep = std::min(top, best);
            const auto drop = std::max(top, best);
            merges.push_back({keep, drop, best_d});
            for (std::size_t k = 0; k < N; ++k) {
                if (active[k] && k != keep && k != drop) {
                    const double d = std::max(dist[keep * N + k], dist[drop * N + k]);
                    dist[keep * N + k] = d;
                    dist[k * N + keep] = d;
                }
            }
            active[drop] = false;
            --remaining;
        } else {
            chain.push_back(best);
        }
    }
    std::stable_sort(merges.begin(), merges.end(), [](const Merge& l, const Merge& r) { return l.height < r.height; });

    std::vector<std::size_t> parent(N);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };
    for (std::size_t m = 0; m + G < N; ++m) {
        parent[find(merges[m].b)] = find(merges[m].a);
    }
    std::vector<int> labels(N);
    std::vector<long> code(N, -1);
    int next = 0;
    for (std::size_t i = 0; i < N; ++i) {
        const auto root = find(i);
        if (code[root] < 0) code[root] = next++;
        labels[i] = static_cast<int>(code[root]);
    }
    return labels;
}

}  // namespace

std::vector<int> initial_partition(const MixedDataset& data, InitMethod method, std::size_t G, std::uint64_t seed) {
    const auto N = data.rows();
    if (G < 1 || G > N) {
        throw std::invalid_argument("initial_partition: need 1 <= G <= N");
    }
    if (G == 1) {
        return std::vector<int>(N, 0);
    }
    const auto coding = method == InitMethod::Random ? Eigen::MatrixXd() : standardized_coding(data);
    if (method == InitMethod::Hierarchical) {
        auto labels = hierarchical_partition(coding, G);
        if (!all_groups_used(labels, G)) {
            throw std::runtime_error("hierarchical initialization produced an empty group");
        }
        return labels;
    }
    for (int attempt = 0; attempt < kMaxPartitionAttempts; ++attempt) {
        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
        auto labels = method == InitMethod::KMeans ? kmeans_partition(coding, G, rng) : random_partition(N, G, rng);
        if (all_groups_used(labels, G)) {
            return labels;
        }
    }
    throw std::runtime_error("initialization could not produce G nonempty groups");
}

ModelParams params_from_partition(const MixedDataset& data, const ThresholdSet& thresholds,
                                  const LatentLayout& layout, const std::vector<int>& labels, std::size_t G,
                                  CovModel model, std::size_t mc_samples, std::uint64_t seed) {
    const auto N = static_cast<Eigen::Index>(data.rows());
    const auto K = static_cast<Eigen::Index>(layout.categorical_dims());
    EStepQuantities q;
    q.tau = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(G));
    for (Eigen::Index i = 0; i < N; ++i) q.tau(i, labels[static_cast<std::size_t>(i)]) = 1.0;

    Eigen::MatrixXd m(N, K);
    Eigen::MatrixXd s(N, K);
    for (std::size_t o = 0; o < layout.ordinal; ++o) {
        const auto& gamma = thresholds[o];
        for (Eigen::Index i = 0; i < N; ++i) {
            const auto k = static_cast<std::size_t>(data.ordinal_code(i, o));
            const auto mom = truncated_normal_moments(0.0, 1.0, gamma[k - 1], gamma[k]);
            m(i, static_cast<Eigen::Index>(o)) = mom.mean;
            s(i, static_cast<Eigen::Index>(o)) = mom.second;
        }
    }
    for (std::size_t j = 0; j < layout.nominal.size(); ++j) {
        const auto& block = layout.nominal[j];
        const auto width = static_cast<Eigen::Index>(block.width);
        const auto cell = nominal_mc_cell(Eigen::VectorXd::Zero(width), Eigen::VectorXd::Ones(width), mc_samples,
                                          derive_seed(seed, 0, G, j));
        const auto col = static_cast<Eigen::Index>(block.first - layout.continuous);
        for (Eigen::Index i = 0; i < N; ++i) {
            const auto k = data.nominal_code(i, j) - 1;
            m.row(i).segment(col, width) = cell.mean.row(k);
            s.row(i).segment(col, width) = cell.second.row(k);
        }
    }
    q.m.assign(G, m);
    q.s.assign(G, s);
    return m_step(data, q, layout, model);
}

ModelParams initialize(const MixedDataset& data, const ThresholdSet& thresholds, const LatentLayout& layout,
                       InitMethod method, std::size_t G, std::uint64_t seed, CovModel model,
                       std::size_t mc_samples) {
    const auto labels = initial_partition(data, method, G, seed);
    return params_from_partition(data, thresholds, layout, labels, G, model, mc_samples, seed);
}

}  // namespace clustmd
