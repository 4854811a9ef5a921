#include "clustmd/em_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "clustmd/normal.hpp"
#include "clustmd/selection.hpp"

namespace clustmd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Smallest per-observation scatter allowed into a variance estimate.
constexpr double kVarianceFloor = 1e-10;
constexpr double kEmptyClusterShare = 1e-8;

}  // namespace

NominalMCTable build_mc_table(const ModelParams& params, const LatentLayout& layout, std::size_t samples,
                              std::uint64_t master_seed, std::uint64_t iteration) {
    NominalMCTable table;
    if (!layout.has_nominal()) {
        return table;
    }
    const auto G = params.clusters();
    table.cells.resize(G);
    for (std::size_t g = 0; g < G; ++g) {
        const Eigen::VectorXd variance = sigma_diagonal(params, g, layout);
        for (std::size_t j = 0; j < layout.nominal.size(); ++j) {
            const auto& block = layout.nominal[j];
            const auto first = static_cast<Eigen::Index>(block.first);
            const auto width = static_cast<Eigen::Index>(block.width);
            table.cells[g].push_back(nominal_mc_cell(params.mu.row(g).segment(first, width).transpose(),
                                                     variance.segment(first, width), samples,
                                                     derive_seed(master_seed, iteration, g, j)));
        }
    }
    return table;
}

EStepQuantities e_step(const MixedDataset& data, const ThresholdSet& thresholds, const LatentLayout& layout,
                       const ModelParams& params, const NominalMCTable& mc_table) {
    const auto N = static_cast<Eigen::Index>(data.rows());
    const auto G = params.clusters();
    const auto C = static_cast<Eigen::Index>(layout.continuous);
    const auto K = static_cast<Eigen::Index>(layout.categorical_dims());
    if (layout.has_nominal() && mc_table.cells.size() != G) {
        throw std::invalid_argument("e_step: Monte Carlo table does not match the cluster count");
    }

    EStepQuantities q;
    q.tau.resize(N, static_cast<Eigen::Index>(G));
    q.m.assign(G, Eigen::MatrixXd(N, K));
    q.s.assign(G, Eigen::MatrixXd(N, K));
    Eigen::MatrixXd log_weight(N, static_cast<Eigen::Index>(G));

    for (std::size_t g = 0; g < G; ++g) {
        const auto gi = static_cast<Eigen::Index>(g);
        const Eigen::VectorXd sd = sigma_diagonal(params, g, layout).array().sqrt();
        auto lw = log_weight.col(gi);
        lw.setConstant(std::log(params.pi[gi]));

        if (C > 0) {
            const Eigen::ArrayXd mu_c = params.mu.row(gi).head(C).transpose().array();
            const Eigen::ArrayXd sd_c = sd.head(C).array();
            const double log_norm = -static_cast<double>(C) * normal::kLogSqrt2Pi - sd_c.log().sum();
            const Eigen::MatrixXd standardized =
                ((data.continuous().array().rowwise() - mu_c.transpose()).rowwise() / sd_c.transpose()).matrix();
            lw.array() += log_norm - 0.5 * standardized.rowwise().squaredNorm().array();
        }

        for (std::size_t o = 0; o < layout.ordinal; ++o) {
            const auto p = static_cast<Eigen::Index>(layout.continuous + o);
            const double mu = params.mu(gi, p);
            const double sigma = sd[p];
            const auto& gamma = thresholds[o];
            const auto levels = gamma.size() - 1;
            std::vector<double> log_prob(levels), first(levels), second(levels);
            for (std::size_t k = 0; k < levels; ++k) {
                const double lo = gamma[k];
                const double hi = gamma[k + 1];
                log_prob[k] = log_interval_prob(mu, sigma, lo, hi);
                try {
                    const auto mom = truncated_normal_moments(mu, sigma, lo, hi);
                    first[k] = mom.mean;
                    second[k] = mom.second;
                } catch (const DegenerateIntervalError&) {
                    // Only reachable for a level with no mass under this
                    // cluster; its responsibility is zero.
                    first[k] = std::clamp(mu, std::isinf(lo) ? hi : lo, std::isinf(hi) ? lo : hi);
                    second[k] = first[k] * first[k];
                }
            }
            const auto col = static_cast<Eigen::Index>(o);
            for (Eigen::Index i = 0; i < N; ++i) {
                const auto k = static_cast<std::size_t>(data.ordinal_code(i, o) - 1);
                lw[i] += log_prob[k];
                q.m[g](i, col) = first[k];
                q.s[g](i, col) = second[k];
            }
        }

        for (std::size_t j = 0; j < layout.nominal.size(); ++j) {
            const auto& block = layout.nominal[j];
            const auto& cell = mc_table.at(g, j);
            const auto col = static_cast<Eigen::Index>(block.first - layout.continuous);
            const auto width = static_cast<Eigen::Index>(block.width);
            const Eigen::ArrayXd log_probs = cell.probs.array().log();
            for (Eigen::Index i = 0; i < N; ++i) {
                const auto k = static_cast<Eigen::Index>(data.nominal_code(i, j) - 1);
                lw[i] += log_probs[k];
                q.m[g].row(i).segment(col, width) = cell.mean.row(k);
                q.s[g].row(i).segment(col, width) = cell.second.row(k);
            }
        }
    }

    q.row_loglik.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        const double top = log_weight.row(i).maxCoeff();
        if (!std::isfinite(top)) {
            q.tau.row(i).setConstant(1.0 / static_cast<double>(G));
            q.row_loglik[i] = kNegInf;
            ++q.degenerate_rows;
            continue;
        }
        const Eigen::ArrayXd w = (log_weight.row(i).array() - top).exp();
        const double total = w.sum();
        q.tau.row(i) = (w / total).matrix().transpose();
        q.row_loglik[i] = top + std::log(total);
    }
    return q;
}

MStepWorkspace accumulate(const MixedDataset& data, const EStepQuantities& quantities, const LatentLayout& layout) {
    const auto G = quantities.tau.cols();
    const auto P = static_cast<Eigen::Index>(layout.total);
    const auto C = static_cast<Eigen::Index>(layout.continuous);
    MStepWorkspace work;
    work.mass = quantities.tau.colwise().sum().transpose();
    work.first.resize(G, P);
    work.second.resize(G, P);
    if (C > 0) {
        work.first.leftCols(C) = quantities.tau.transpose() * data.continuous();
        work.second.leftCols(C) = quantities.tau.transpose() * data.continuous().array().square().matrix();
    }
    for (Eigen::Index g = 0; g < G; ++g) {
        const auto g_index = static_cast<std::size_t>(g);
        if (P > C) {
            work.first.row(g).tail(P - C) = quantities.tau.col(g).transpose() * quantities.m[g_index];
            work.second.row(g).tail(P - C) = quantities.tau.col(g).transpose() * quantities.s[g_index];
        }
    }
    return work;
}

EmptyClusterError::EmptyClusterError(std::size_t cluster, double mass)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "cluster " << cluster + 1 << " is empty (responsibility mass " << mass << ")";
          return os.str();
      }()),
      cluster_(cluster),
      mass_(mass) {}

namespace {

// Maximizes sum_g -0.5 (c_g log x_g + w_g / x_g) subject to sum_g x_g = 1.
// Stationarity gives 2 eta x^2 + c x - w = 0; the root branch
// x = 2w / (c + sqrt(c^2 + 8 eta w)) is decreasing in eta and each term is
// locally concave on it, so the multiplier is found by bisection.
Eigen::VectorXd simplex_variances(const Eigen::VectorXd& c, Eigen::VectorXd w) {
    const auto G = c.size();
    if (G == 1) {
        return Eigen::VectorXd::Ones(1);
    }
    w = w.cwiseMax(c * kVarianceFloor);
    auto at = [&](double eta) {
        Eigen::VectorXd x(G);
        for (Eigen::Index g = 0; g < G; ++g) {
            const double disc = std::max(0.0, c[g] * c[g] + 8.0 * eta * w[g]);
            x[g] = 2.0 * w[g] / (c[g] + std::sqrt(disc));
        }
        return x;
    };
    double lo;
    double hi;
    const double free_sum = (w.array() / c.array()).sum();
    if (free_sum >= 1.0) {
        lo = 0.0;
        const double root = (w.array() * 0.5).sqrt().sum();
        hi = root * root;
    } else {
        lo = -std::numeric_limits<double>::infinity();
        for (Eigen::Index g = 0; g < G; ++g) {
            lo = std::max(lo, -c[g] * c[g] / (8.0 * w[g]));
        }
        hi = 0.0;
        if (at(lo).sum() < 1.0) {
            // No interior stationary point on the concave branch.
            Eigen::VectorXd x = w.array() / c.array();
            return x / x.sum();
        }
    }
    for (int it = 0; it < 400 && hi > lo; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) {
            break;
        }
        if (at(mid).sum() > 1.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Eigen::VectorXd x = at(0.5 * (lo + hi));
    return x / x.sum();
}

// Scatter about mu: zeta - 2 mu S1 + mu^2 n, floored.
Eigen::MatrixXd scatter(const MStepWorkspace& work, const Eigen::MatrixXd& mu, Eigen::Index first,
                        Eigen::Index count) {
    Eigen::MatrixXd W(mu.rows(), count);
    for (Eigen::Index g = 0; g < mu.rows(); ++g) {
        for (Eigen::Index p = 0; p < count; ++p) {
            const double m = mu(g, p);
            const double n = work.mass[g];
            const double w = work.second(g, first + p) - 2.0 * m * work.first(g, first + p) + m * m * n;
            W(g, p) = std::max(w, n * kVarianceFloor);
        }
    }
    return W;
}

// Continuous/ordinal block: volume and shape given the scatter W (G x d).
void update_observed_block(CovModel model, const Eigen::MatrixXd& W, const Eigen::VectorXd& n,
                           Eigen::VectorXd& lambda, Eigen::MatrixXd& shape) {
    const auto G = W.rows();
    const auto d = W.cols();
    const double N = n.sum();
    const double dd = static_cast<double>(d);
    shape.setOnes(G, d);
    lambda.resize(G);
    if (d == 0) {
        lambda.setOnes();
        return;
    }
    switch (model) {
        case CovModel::EII:
            lambda.setConstant(W.sum() / (dd * N));
            break;
        case CovModel::VII:
            for (Eigen::Index g = 0; g < G; ++g) lambda[g] = W.row(g).sum() / (dd * n[g]);
            break;
        case CovModel::EEI: {
            const Eigen::ArrayXd var = W.colwise().sum().transpose().array() / N;
            const double volume = std::exp(var.log().mean());
            lambda.setConstant(volume);
            for (Eigen::Index g = 0; g < G; ++g) shape.row(g) = (var / volume).matrix().transpose();
            break;
        }
        case CovModel::VEI: {
            Eigen::ArrayXd a = Eigen::ArrayXd::Ones(d);
            for (int it = 0; it < 2000; ++it) {
                for (Eigen::Index g = 0; g < G; ++g)
                    lambda[g] = (W.row(g).transpose().array() / a).sum() / (dd * n[g]);
                Eigen::ArrayXd t = Eigen::ArrayXd::Zero(d);
                for (Eigen::Index g = 0; g < G; ++g) t += W.row(g).transpose().array() / lambda[g];
                const Eigen::ArrayXd next = t / std::exp(t.log().mean());
                const double change = (next - a).abs().maxCoeff();
                a = next;
                if (change < 1e-14) {
                    break;
                }
            }
            for (Eigen::Index g = 0; g < G; ++g) {
                lambda[g] = (W.row(g).transpose().array() / a).sum() / (dd * n[g]);
                shape.row(g) = a.matrix().transpose();
            }
            break;
        }
        case CovModel::EVI: {
            double total = 0.0;
            for (Eigen::Index g = 0; g < G; ++g) {
                const Eigen::ArrayXd row = W.row(g).transpose().array();
                const double geo = std::exp(row.log().mean());
                shape.row(g) = (row / geo).matrix().transpose();
                total += geo;
            }
            lambda.setConstant(total / N);
            break;
        }
        case CovModel::VVI:
            for (Eigen::Index g = 0; g < G; ++g) {
                const Eigen::ArrayXd var = W.row(g).transpose().array() / n[g];
                lambda[g] = std::exp(var.log().mean());
                shape.row(g) = (var / lambda[g]).matrix().transpose();
            }
            break;
    }
}

// VVI nominal block: sum_g lambda~_g = 1 and sum_g a_gp = 1 for every p.
// For fixed lambda~ each shape column is an exact simplex problem, so the
// profile in lambda~ is maximized by Newton steps (envelope gradient,
// differenced Hessian) in the first G - 1 coordinates.
void vvi_nominal_variances(const Eigen::MatrixXd& W, const Eigen::VectorXd& n, Eigen::VectorXd& lambda_tilde,
                           Eigen::MatrixXd& shape) {
    const auto G = W.rows();
    const auto q = W.cols();
    shape.resize(G, q);
    auto shapes_for = [&](const Eigen::VectorXd& lt, Eigen::MatrixXd& a) {
        for (Eigen::Index p = 0; p < q; ++p)
            a.col(p) = simplex_variances(n, (W.col(p).array() / lt.array()).matrix());
    };
    auto value = [&](const Eigen::VectorXd& lt, const Eigen::MatrixXd& a) {
        const Eigen::ArrayXXd var = a.array().colwise() * lt.array();
        return -0.5 * ((var.log().colwise() * n.array()) + W.array() / var).sum();
    };
    if (G == 1) {
        lambda_tilde = Eigen::VectorXd::Ones(1);
        shape.setOnes();
        return;
    }
    if (lambda_tilde.size() != G || !(lambda_tilde.minCoeff() > 0.0)) {
        lambda_tilde = Eigen::VectorXd::Constant(G, 1.0 / static_cast<double>(G));
    }
    lambda_tilde /= lambda_tilde.sum();
    const auto k = G - 1;
    auto reduced_gradient = [&](const Eigen::VectorXd& lt) {
        Eigen::MatrixXd a(G, q);
        shapes_for(lt, a);
        Eigen::VectorXd full(G);
        for (Eigen::Index g = 0; g < G; ++g) {
            full[g] = -0.5 * (static_cast<double>(q) * n[g] / lt[g] - (W.row(g).array() / a.row(g).array()).sum() / (lt[g] * lt[g]));
        }
        return Eigen::VectorXd(full.head(k).array() - full[k]);
    };
    auto embed = [&](const Eigen::VectorXd& head) {
        Eigen::VectorXd lt(G);
        lt.head(k) = head;
        lt[k] = 1.0 - head.sum();
        return lt;
    };
    Eigen::MatrixXd a(G, q);
    shapes_for(lambda_tilde, a);
    double f = value(lambda_tilde, a);
    for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd g = reduced_gradient(lambda_tilde);
        const double h = 1e-6 * lambda_tilde.minCoeff();
        Eigen::MatrixXd H(k, k);
        for (Eigen::Index j = 0; j < k; ++j) {
            Eigen::VectorXd up = lambda_tilde.head(k);
            Eigen::VectorXd down = up;
            up[j] += h;
            down[j] -= h;
            H.col(j) = (reduced_gradient(embed(up)) - reduced_gradient(embed(down))) / (2.0 * h);
        }
        H = 0.5 * (H + H.transpose()).eval();
        Eigen::VectorXd step;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(-H);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
            step = ldlt.solve(g);
        } else {
            step = g / std::max(1.0, (-H).diagonal().cwiseAbs().maxCoeff());
        }
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            const Eigen::VectorXd trial = embed(lambda_tilde.head(k) + t * step);
            if (!(trial.minCoeff() > 0.0)) {
                continue;
            }
            Eigen::MatrixXd trial_a(G, q);
            shapes_for(trial, trial_a);
            const double ft = value(trial, trial_a);
            if (ft >= f + 1e-4 * t * g.dot(step)) {
                moved = ft > f || t * step.cwiseAbs().maxCoeff() > 1e-15;
                lambda_tilde = trial;
                a = trial_a;
                f = std::max(f, ft);
                break;
            }
        }
        if (!moved || t * step.cwiseAbs().maxCoeff() < 1e-14) {
            break;
        }
    }
    shape = a;
}

// Nominal block: lambda~ and nominal shape given scatter W (G x q), warm
// started from the incoming values.
void update_nominal_block(CovModel model, const Eigen::MatrixXd& W, const Eigen::VectorXd& n,
                          Eigen::VectorXd& lambda_tilde, Eigen::MatrixXd& shape) {
    const auto G = W.rows();
    const auto q = W.cols();
    const double qd = static_cast<double>(q);
    switch (model) {
        case CovModel::EII:
        case CovModel::EEI:
            lambda_tilde.setOnes(G);
            shape.setOnes(G, q);
            break;
        case CovModel::VII:
        case CovModel::VEI:
            lambda_tilde = simplex_variances(qd * n, W.rowwise().sum());
            shape.setOnes(G, q);
            break;
        case CovModel::EVI:
            lambda_tilde.setOnes(G);
            for (Eigen::Index p = 0; p < q; ++p) shape.col(p) = simplex_variances(n, W.col(p));
            break;
        case CovModel::VVI:
            vvi_nominal_variances(W, n, lambda_tilde, shape);
            break;
    }
}

// Nominal part of Q with the constrained means profiled out, for fixed
// variances: sum_g n_g log pi_g - 0.5 sum_p (pi . muhat_p)^2 / (sum_g pi_g^2 v_gp / n_g)
// plus terms free of pi. Maximized over the simplex by damped Newton steps
// in the first G - 1 coordinates.
struct WeightObjective {
    const Eigen::VectorXd& n;
    const Eigen::MatrixXd& mu_hat;
    const Eigen::MatrixXd& var;

    double value(const Eigen::VectorXd& pi) const {
        double f = (n.array() * pi.array().log()).sum();
        for (Eigen::Index p = 0; p < mu_hat.cols(); ++p) {
            const double c = pi.dot(mu_hat.col(p));
            const double d = (pi.array().square() * var.col(p).array() / n.array()).sum();
            f -= 0.5 * c * c / d;
        }
        return f;
    }

    void derivatives(const Eigen::VectorXd& pi, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) const {
        grad = n.array() / pi.array();
        hess = (-(n.array() / pi.array().square())).matrix().asDiagonal();
        for (Eigen::Index p = 0; p < mu_hat.cols(); ++p) {
            const Eigen::VectorXd a = mu_hat.col(p);
            const Eigen::VectorXd curv = 2.0 * var.col(p).array() / n.array();
            const Eigen::VectorXd b = pi.array() * curv.array();
            const double c = pi.dot(a);
            const double d = (pi.array().square() * var.col(p).array() / n.array()).sum();
            grad -= 0.5 * (2.0 * c / d * a - c * c / (d * d) * b);
            Eigen::MatrixXd h = 2.0 / d * a * a.transpose() - 2.0 * c / (d * d) * (a * b.transpose() + b * a.transpose()) +
                                2.0 * c * c / (d * d * d) * b * b.transpose();
            h.diagonal() -= c * c / (d * d) * curv;
            hess -= 0.5 * h;
        }
    }
};

Eigen::VectorXd best_weights(const WeightObjective& objective, Eigen::VectorXd pi) {
    const auto G = pi.size();
    if (G == 1) {
        return pi;
    }
    const auto k = G - 1;
    Eigen::MatrixXd J(G, k);
    J.topRows(k).setIdentity();
    J.row(k).setConstant(-1.0);
    double f = objective.value(pi);
    for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd grad;
        Eigen::MatrixXd hess;
        objective.derivatives(pi, grad, hess);
        const Eigen::VectorXd g = J.transpose() * grad;
        const Eigen::MatrixXd H = J.transpose() * hess * J;
        Eigen::VectorXd step;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(-H);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
            step = ldlt.solve(g);
        } else {
            step = g / std::max(1.0, (-H).diagonal().cwiseAbs().maxCoeff());
        }
        const Eigen::VectorXd direction = J * step;
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            const Eigen::VectorXd trial = pi + t * direction;
            if (!(trial.minCoeff() > 0.0)) {
                continue;
            }
            const double ft = objective.value(trial);
            if (ft >= f + 1e-4 * t * g.dot(step)) {
                pi = trial;
                f = ft;
                moved = true;
                break;
            }
        }
        if (!moved || t * direction.cwiseAbs().maxCoeff() < 1e-15) {
            break;
        }
    }
    return pi;
}

// Means minimizing the nominal scatter subject to sum_g pi_g mu_gp = 0.
Eigen::MatrixXd constrained_means(const Eigen::MatrixXd& mu_hat, const Eigen::VectorXd& pi, const Eigen::VectorXd& n,
                                  const Eigen::MatrixXd& var) {
    Eigen::MatrixXd mu = mu_hat;
    for (Eigen::Index p = 0; p < mu.cols(); ++p) {
        const double num = pi.dot(mu_hat.col(p));
        const double den = (pi.array().square() * var.col(p).array() / n.array()).sum();
        mu.col(p).array() -= num / den * pi.array() * var.col(p).array() / n.array();
    }
    return mu;
}

// Nominal terms of Q: weights, and Gaussian terms on the nominal dims.
double nominal_objective(const MStepWorkspace& work, Eigen::Index first, const Eigen::VectorXd& pi,
                         const Eigen::MatrixXd& mu, const Eigen::MatrixXd& var) {
    const Eigen::VectorXd& n = work.mass;
    double q = (n.array() * pi.array().log()).sum();
    for (Eigen::Index g = 0; g < mu.rows(); ++g) {
        for (Eigen::Index p = 0; p < mu.cols(); ++p) {
            const double m = mu(g, p);
            const double w = work.second(g, first + p) - 2.0 * m * work.first(g, first + p) + m * m * n[g];
            q -= 0.5 * (n[g] * std::log(var(g, p)) + w / var(g, p));
        }
    }
    return q;
}

}  // namespace

ModelParams m_step(const MStepWorkspace& work, const LatentLayout& layout, CovModel model) {
    const auto G = work.mass.size();
    const auto P = static_cast<Eigen::Index>(layout.total);
    const auto d = static_cast<Eigen::Index>(layout.observed_scale_dims());
    const auto q = static_cast<Eigen::Index>(layout.nominal_dims());
    const Eigen::VectorXd& n = work.mass;
    const double N = n.sum();
    for (Eigen::Index g = 0; g < G; ++g) {
        if (!(n[g] >= kEmptyClusterShare * N)) {
            throw EmptyClusterError(static_cast<std::size_t>(g), n[g]);
        }
    }

    ModelParams out;
    out.model = model;
    out.mu = work.first.array().colwise() / n.array();
    out.pi = n / N;
    out.lambda.resize(G);
    out.lambda_tilde = Eigen::VectorXd::Ones(G);
    out.shape = Eigen::MatrixXd::Ones(G, P);

    Eigen::MatrixXd observed_shape;
    update_observed_block(model, scatter(work, out.mu.leftCols(d), 0, d), n, out.lambda, observed_shape);
    out.shape.leftCols(d) = observed_shape;

    if (q > 0) {
        // Block ascent on Q over (pi, nominal mu, nominal variances) under
        // sum_g pi_g mu_gp = 0, starting from recentred means at pi = n / N.
        // Weights maximize Q with the means profiled out, the means are then
        // exact given weights and variances, and the variances exact given
        // the means; no step lowers Q.
        const Eigen::MatrixXd mu_hat = out.mu.middleCols(d, q);
        Eigen::VectorXd pi = out.pi;
        Eigen::MatrixXd mu = mu_hat;
        for (Eigen::Index p = 0; p < q; ++p) mu.col(p).array() -= pi.dot(mu_hat.col(p));
        Eigen::VectorXd lambda_tilde = Eigen::VectorXd::Ones(G);
        Eigen::MatrixXd shape = Eigen::MatrixXd::Ones(G, q);
        update_nominal_block(model, scatter(work, mu, d, q), n, lambda_tilde, shape);
        Eigen::MatrixXd var = shape.array().colwise() * lambda_tilde.array();
        double value = nominal_objective(work, d, pi, mu, var);
        for (int it = 0; it < 1000; ++it) {
            pi = best_weights(WeightObjective{n, mu_hat, var}, pi);
            pi /= pi.sum();
            mu = constrained_means(mu_hat, pi, n, var);
            update_nominal_block(model, scatter(work, mu, d, q), n, lambda_tilde, shape);
            var = shape.array().colwise() * lambda_tilde.array();
            const double next = nominal_objective(work, d, pi, mu, var);
            const bool done = next - value <= 1e-15 * std::max(1.0, std::fabs(value));
            value = std::max(value, next);
            if (done) {
                break;
            }
        }
        out.pi = pi;
        out.mu.middleCols(d, q) = mu;
        out.lambda_tilde = lambda_tilde;
        out.shape.middleCols(d, q) = shape;
    }
    normalize_shape(out, layout);
    return enforce_identifiability(std::move(out), layout);
}

ModelParams m_step(const MixedDataset& data, const EStepQuantities& quantities, const LatentLayout& layout,
                   CovModel model) {
    return m_step(accumulate(data, quantities, layout), layout, model);
}

double expected_complete_loglik(const MStepWorkspace& work, const ModelParams& params, const LatentLayout& layout) {
    double q = 0.0;
    for (Eigen::Index g = 0; g < work.mass.size(); ++g) {
        const double n = work.mass[g];
        q += n * std::log(params.pi[g]);
        const Eigen::VectorXd var = sigma_diagonal(params, static_cast<std::size_t>(g), layout);
        for (Eigen::Index p = 0; p < var.size(); ++p) {
            const double m = params.mu(g, p);
            const double w = work.second(g, p) - 2.0 * m * work.first(g, p) + m * m * n;
            q -= 0.5 * (n * std::log(var[p]) + w / var[p]);
        }
    }
    return q;
}

void FitConfig::validate() const {
    if (clusters < 1) throw std::invalid_argument("cluster count must be at least 1");
    if (mc_samples < 1) throw std::invalid_argument("Monte Carlo sample count must be at least 1");
    if (window < 1) throw std::invalid_argument("convergence window must be at least 1");
    if (max_iters < window) throw std::invalid_argument("max_iters must be at least the convergence window");
    if (!(tolerance > 0.0)) throw std::invalid_argument("convergence tolerance must be positive");
    if (average_window < 1) throw std::invalid_argument("averaging window must be at least 1");
    if (final_sample_factor < 1) throw std::invalid_argument("final sample factor must be at least 1");
}

bool window_converged(const std::vector<Eigen::VectorXd>& trace, std::size_t window, double tolerance,
                      bool monte_carlo) {
    const std::size_t t = trace.size();
    if (window == 0 || t < 2 * window) {
        return false;
    }
    const auto K = trace.back().size();
    const std::size_t batches = std::min<std::size_t>(10, window);
    const std::size_t batch_len = window / batches;
    const double W = static_cast<double>(window);

    Eigen::VectorXd recent = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd earlier = Eigen::VectorXd::Zero(K);
    for (std::size_t i = t - 2 * window; i < t - window; ++i) earlier += trace[i];
    for (std::size_t i = t - window; i < t; ++i) recent += trace[i];
    recent /= W;
    earlier /= W;

    // Batch-means variance of a window mean.
    auto window_mean_variance = [&](std::size_t start) {
        Eigen::MatrixXd means(batches, K);
        for (std::size_t b = 0; b < batches; ++b) {
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(K);
            for (std::size_t i = 0; i < batch_len; ++i) acc += trace[start + b * batch_len + i];
            means.row(b) = (acc / static_cast<double>(batch_len)).transpose();
        }
        const Eigen::RowVectorXd centre = means.colwise().mean();
        const Eigen::RowVectorXd var =
            (means.rowwise() - centre).array().square().colwise().sum() / static_cast<double>(batches - 1);
        return Eigen::VectorXd((var / static_cast<double>(batches)).transpose());
    };
    Eigen::VectorXd noise;
    if (monte_carlo && batches > 1) {
        noise = (window_mean_variance(t - 2 * window) + window_mean_variance(t - window)).cwiseSqrt();
    }

    for (Eigen::Index k = 0; k < K; ++k) {
        const double change = std::fabs(recent[k] - earlier[k]);
        if (change <= tolerance * std::max(std::fabs(earlier[k]), 1e-12)) {
            continue;
        }
        if (noise.size() > 0 && change <= 3.0 * noise[k]) {
            continue;
        }
        return false;
    }
    return true;
}

namespace {

FitResult run_em(const MixedDataset& data, const ThresholdSet& thresholds, const LatentLayout& layout,
                 const FitConfig& config, ModelParams params) {
    FitResult result;
    const bool monte_carlo = layout.has_nominal();
    for (std::size_t t = 1; t <= config.max_iters; ++t) {
        const auto table =
            monte_carlo ? build_mc_table(params, layout, config.mc_samples, config.seed, t) : NominalMCTable{};
        const auto q = e_step(data, thresholds, layout, params, table);
        result.loglik_trace.push_back(q.loglik());
        if (q.degenerate_rows > 0) {
            std::ostringstream os;
            os << "iteration " << t << ": " << q.degenerate_rows
               << " observation(s) had zero density under every cluster; responsibilities set uniform";
            result.warnings.push_back(os.str());
        }
        params = m_step(data, q, layout, config.model);
        result.trace.push_back(flatten(params));
        result.iterations = t;
        if (config.on_iteration) {
            config.on_iteration(t, params);
        }
        if (window_converged(result.trace, config.window, config.tolerance, monte_carlo)) {
            result.converged = true;
            break;
        }
    }

    if (monte_carlo && config.average_final) {
        const std::size_t span = std::min(config.average_window, result.trace.size());
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(result.trace.back().size());
        for (std::size_t i = result.trace.size() - span; i < result.trace.size(); ++i) mean += result.trace[i];
        mean /= static_cast<double>(span);
        params = unflatten(mean, config.model, params.clusters(), params.dims());
        params.pi /= params.pi.sum();
        normalize_shape(params, layout);
        params = enforce_identifiability(std::move(params), layout);
    }
    result.params = params;

    const std::uint64_t final_iteration = config.max_iters + 1;
    result.final_table = monte_carlo ? build_mc_table(params, layout, config.mc_samples * config.final_sample_factor,
                                                      config.seed, final_iteration)
                                     : NominalMCTable{};
    auto q = e_step(data, thresholds, layout, params, result.final_table);
    result.tau = std::move(q.tau);
    result.assignments.resize(data.rows());
    for (Eigen::Index i = 0; i < result.tau.rows(); ++i) {
        Eigen::Index best;
        result.tau.row(i).maxCoeff(&best);
        result.assignments[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    result.approx_loglik = approx_loglik(data, params, thresholds, layout, result.final_table);
    result.free_parameters =
        count_free_parameters(config.model, static_cast<long>(params.clusters()), layout);
    result.bic = bic_hat(result.approx_loglik, result.free_parameters, static_cast<long>(data.rows()));
    return result;
}

FitResult fit_with_restarts(const MixedDataset& data, const FitConfig& config, const ModelParams* start) {
    config.validate();
    if (config.clusters > data.rows()) {
        throw std::invalid_argument("more clusters than observations");
    }
    const auto thresholds = compute_thresholds(data);
    const auto layout = build_layout(data.schema());
    std::vector<std::string> notes;
    for (std::size_t attempt = 0; attempt <= config.max_restarts; ++attempt) {
        try {
            ModelParams params;
            if (attempt == 0 && start != nullptr) {
                params = *start;
            } else {
                const auto method = attempt == 0 ? config.init : InitMethod::Random;
                const auto seed = attempt == 0 ? config.seed : mix_seed(config.seed, 0x5eed0000ULL + attempt);
                params = initialize(data, thresholds, layout, method, config.clusters, seed, config.model,
                                    config.mc_samples);
            }
            auto result = run_em(data, thresholds, layout, config, std::move(params));
            result.restarts = attempt;
            result.warnings.insert(result.warnings.begin(), notes.begin(), notes.end());
            return result;
        } catch (const EmptyClusterError& e) {
            notes.push_back(std::string("attempt ") + std::to_string(attempt + 1) + ": " + e.what());
        }
    }
    std::ostringstream os;
    os << model_name(config.model) << " G=" << config.clusters << " failed after " << config.max_restarts
       << " restarts:";
    for (const auto& n : notes) os << "\n  " << n;
    throw FitError(os.str());
}

}  // namespace

FitResult fit(const MixedDataset& data, const FitConfig& config) {
    return fit_with_restarts(data, config, nullptr);
}

FitResult fit(const MixedDataset& data, const FitConfig& config, const ModelParams& start) {
    if (start.model != config.model || start.clusters() != config.clusters) {
        throw std::invalid_argument("starting parameters do not match the fit configuration");
    }
    return fit_with_restarts(data, config, &start);
}

}  // namespace clustmd
