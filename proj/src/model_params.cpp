#include "clustmd/model_params.hpp"

#include <cmath>
#include <limits>

namespace clustmd {

const char* model_name(CovModel model) {
    switch (model) {
        case CovModel::EII: return "EII";
        case CovModel::VII: return "VII";
        case CovModel::EEI: return "EEI";
        case CovModel::VEI: return "VEI";
        case CovModel::EVI: return "EVI";
        case CovModel::VVI: return "VVI";
    }
    return "?";
}

std::optional<CovModel> parse_model(std::string_view name) {
    for (auto m : kAllModels) {
        if (name == model_name(m)) {
            return m;
        }
    }
    return std::nullopt;
}

bool volume_varies(CovModel model) {
    return model == CovModel::VII || model == CovModel::VEI || model == CovModel::VVI;
}

ShapeKind shape_kind(CovModel model) {
    switch (model) {
        case CovModel::EII:
        case CovModel::VII: return ShapeKind::Identity;
        case CovModel::EEI:
        case CovModel::VEI: return ShapeKind::Shared;
        case CovModel::EVI:
        case CovModel::VVI: return ShapeKind::Varying;
    }
    return ShapeKind::Identity;
}

ModelParams ModelParams::unit(CovModel model, std::size_t G, const LatentLayout& layout) {
    ModelParams p;
    p.model = model;
    const auto g = static_cast<Eigen::Index>(G);
    const auto P = static_cast<Eigen::Index>(layout.total);
    p.pi = Eigen::VectorXd::Constant(g, 1.0 / static_cast<double>(G));
    p.mu = Eigen::MatrixXd::Zero(g, P);
    p.lambda = Eigen::VectorXd::Ones(g);
    p.lambda_tilde = Eigen::VectorXd::Ones(g);
    p.shape = Eigen::MatrixXd::Ones(g, P);
    return enforce_identifiability(std::move(p), layout);
}

Eigen::VectorXd sigma_diagonal(const ModelParams& params, std::size_t g, const LatentLayout& layout) {
    const auto d = layout.observed_scale_dims();
    Eigen::VectorXd out(layout.total);
    for (std::size_t p = 0; p < layout.total; ++p) {
        const double volume = p < d ? params.lambda[g] : params.lambda_tilde[g];
        out[p] = volume * params.shape(g, p);
    }
    return out;
}

void normalize_shape(ModelParams& params, const LatentLayout& layout) {
    const auto d = static_cast<Eigen::Index>(layout.observed_scale_dims());
    if (d == 0) {
        return;
    }
    for (Eigen::Index g = 0; g < params.shape.rows(); ++g) {
        const double log_xi = params.shape.row(g).head(d).array().log().mean();
        if (std::fabs(log_xi) > 8.0 * std::numeric_limits<double>::epsilon()) {
            params.shape.row(g).head(d) *= std::exp(-log_xi);
        }
    }
}

ModelParams enforce_identifiability(ModelParams params, const LatentLayout& layout) {
    const auto G = params.pi.size();
    constexpr double eps = std::numeric_limits<double>::epsilon();
    if (!layout.has_nominal()) {
        params.lambda_tilde.setOnes();
        return params;
    }
    const auto first = static_cast<Eigen::Index>(layout.observed_scale_dims());
    const auto q = static_cast<Eigen::Index>(layout.nominal_dims());

    // Corrections already at rounding level are skipped so that a second
    // application is an exact no-op.
    for (Eigen::Index p = first; p < first + q; ++p) {
        const auto col = params.mu.col(p);
        const double centre = params.pi.dot(col);
        const double scale = col.cwiseAbs().maxCoeff();
        if (std::fabs(centre) > 4.0 * eps * static_cast<double>(G + 1) * scale) {
            params.mu.col(p).array() -= centre;
        }
    }

    if (volume_varies(params.model)) {
        const double total = params.lambda_tilde.sum();
        if (std::fabs(total - 1.0) > 4.0 * eps * static_cast<double>(G)) {
            params.lambda_tilde /= total;
        }
    } else {
        params.lambda_tilde.setOnes();
    }

    if (shape_kind(params.model) == ShapeKind::Varying) {
        for (Eigen::Index p = first; p < first + q; ++p) {
            const double total = params.shape.col(p).sum();
            if (std::fabs(total - 1.0) > 4.0 * eps * static_cast<double>(G)) {
                params.shape.col(p) /= total;
            }
        }
    } else {
        params.shape.middleCols(first, q).setOnes();
    }
    return params;
}

long covariance_parameter_count(CovModel model, long G, const LatentLayout& layout) {
    const long P = static_cast<long>(layout.total);
    const long C = static_cast<long>(layout.continuous);
    const long O = static_cast<long>(layout.ordinal);
    if (!layout.has_nominal()) {
        switch (model) {
            case CovModel::EII: return 1;
            case CovModel::VII: return G;
            case CovModel::EEI: return 1 + P;
            case CovModel::VEI: return G + P;
            case CovModel::EVI: return 1 + G * P;
            case CovModel::VVI: return G * (1 + P);
        }
    } else {
        switch (model) {
            case CovModel::EII: return 1;
            case CovModel::VII: return 2 * G - 1;
            case CovModel::EEI: return C + O;
            case CovModel::VEI: return 2 * G + C + O - 2;
            case CovModel::EVI: return G * (P - 2) + C + O - P + 2;
            case CovModel::VVI: return P * (G - 1) + O;
        }
    }
    return 0;
}

long count_free_parameters(CovModel model, long G, const LatentLayout& layout) {
    const long d = static_cast<long>(layout.observed_scale_dims());
    const long q = static_cast<long>(layout.nominal_dims());
    return (G - 1) + G * d + (G - 1) * q + covariance_parameter_count(model, G, layout);
}

double invariant_violation(const ModelParams& params, const LatentLayout& layout) {
    double worst = 0.0;
    auto note = [&](double v) { worst = std::max(worst, std::isnan(v) ? std::numeric_limits<double>::infinity() : v); };
    note(std::fabs(params.pi.sum() - 1.0));
    note(params.pi.minCoeff() > 0.0 ? 0.0 : 1.0);
    note(params.lambda.minCoeff() > 0.0 ? 0.0 : 1.0);
    note(params.lambda_tilde.minCoeff() > 0.0 ? 0.0 : 1.0);
    note(params.shape.minCoeff() > 0.0 ? 0.0 : 1.0);
    const auto d = static_cast<Eigen::Index>(layout.observed_scale_dims());
    const auto q = static_cast<Eigen::Index>(layout.nominal_dims());
    const auto G = params.pi.size();
    if (d > 0) {
        for (Eigen::Index g = 0; g < G; ++g) {
            note(std::fabs(params.shape.row(g).head(d).array().log().sum()));
        }
    }
    if (!volume_varies(params.model)) {
        note(params.lambda.maxCoeff() - params.lambda.minCoeff());
    }
    if (shape_kind(params.model) == ShapeKind::Identity && d > 0) {
        note((params.shape.leftCols(d).array() - 1.0).abs().maxCoeff());
    }
    if (shape_kind(params.model) == ShapeKind::Shared && d > 0) {
        for (Eigen::Index g = 1; g < G; ++g) {
            note((params.shape.row(g).head(d) - params.shape.row(0).head(d)).cwiseAbs().maxCoeff());
        }
    }
    if (q > 0) {
        for (Eigen::Index p = d; p < d + q; ++p) {
            note(std::fabs(params.pi.dot(params.mu.col(p))));
            if (shape_kind(params.model) == ShapeKind::Varying) {
                note(std::fabs(params.shape.col(p).sum() - 1.0));
            } else {
                note((params.shape.col(p).array() - 1.0).abs().maxCoeff());
            }
        }
        if (volume_varies(params.model)) {
            note(std::fabs(params.lambda_tilde.sum() - 1.0));
        } else {
            note((params.lambda_tilde.array() - 1.0).abs().maxCoeff());
        }
    }
    return worst;
}

Eigen::VectorXd flatten(const ModelParams& params) {
    const auto G = params.pi.size();
    const auto P = params.mu.cols();
    Eigen::VectorXd flat(G * (3 + 2 * P));
    Eigen::Index k = 0;
    for (Eigen::Index g = 0; g < G; ++g) flat[k++] = params.pi[g];
    for (Eigen::Index g = 0; g < G; ++g)
        for (Eigen::Index p = 0; p < P; ++p) flat[k++] = params.mu(g, p);
    for (Eigen::Index g = 0; g < G; ++g) flat[k++] = params.lambda[g];
    for (Eigen::Index g = 0; g < G; ++g) flat[k++] = params.lambda_tilde[g];
    for (Eigen::Index g = 0; g < G; ++g)
        for (Eigen::Index p = 0; p < P; ++p) flat[k++] = params.shape(g, p);
    return flat;
}

ModelParams unflatten(const Eigen::VectorXd& flat, CovModel model, std::size_t G_, std::size_t P_) {
    const auto G = static_cast<Eigen::Index>(G_);
    const auto P = static_cast<Eigen::Index>(P_);
    ModelParams params;
    params.model = model;
    params.pi.resize(G);
    params.mu.resize(G, P);
    params.lambda.resize(G);
    params.lambda_tilde.resize(G);
    params.shape.resize(G, P);
    Eigen::Index k = 0;
    for (Eigen::Index g = 0; g < G; ++g) params.pi[g] = flat[k++];
    for (Eigen::Index g = 0; g < G; ++g)
        for (Eigen::Index p = 0; p < P; ++p) params.mu(g, p) = flat[k++];
    for (Eigen::Index g = 0; g < G; ++g) params.lambda[g] = flat[k++];
    for (Eigen::Index g = 0; g < G; ++g) params.lambda_tilde[g] = flat[k++];
    for (Eigen::Index g = 0; g < G; ++g)
        for (Eigen::Index p = 0; p < P; ++p) params.shape(g, p) = flat[k++];
    return params;
}

std::vector<std::string> flat_names(std::size_t G, std::size_t P) {
    std::vector<std::string> names;
    auto idx = [](std::size_t g) { return std::to_string(g + 1); };
    for (std::size_t g = 0; g < G; ++g) names.push_back("pi[" + idx(g) + "]");
    for (std::size_t g = 0; g < G; ++g)
        for (std::size_t p = 0; p < P; ++p) names.push_back("mu[" + idx(g) + "," + idx(p) + "]");
    for (std::size_t g = 0; g < G; ++g) names.push_back("lambda[" + idx(g) + "]");
    for (std::size_t g = 0; g < G; ++g) names.push_back("lambda_tilde[" + idx(g) + "]");
    for (std::size_t g = 0; g < G; ++g)
        for (std::size_t p = 0; p < P; ++p) names.push_back("a[" + idx(g) + "," + idx(p) + "]");
    return names;
}

}  // namespace clustmd
