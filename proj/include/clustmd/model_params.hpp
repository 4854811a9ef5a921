#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "clustmd/latent_kernel.hpp"

namespace clustmd {

/// Diagonal parsimonious covariance structures Sigma_g = lambda_g A_g.
/// First letter: volume equal (E) or varying (V) across clusters; second:
/// shape equal (E), varying (V) or identity (I). Orientation is always I.
enum class CovModel { EII, VII, EEI, VEI, EVI, VVI };

inline constexpr std::array<CovModel, 6> kAllModels = {CovModel::EII, CovModel::VII, CovModel::EEI,
                                                       CovModel::VEI, CovModel::EVI, CovModel::VVI};

enum class ShapeKind { Identity, Shared, Varying };

const char* model_name(CovModel model);
std::optional<CovModel> parse_model(std::string_view name);
bool volume_varies(CovModel model);
ShapeKind shape_kind(CovModel model);

/// Mixture parameters. Shared quantities are stored replicated per cluster
/// (rows identical) so every accessor is indexed by g.
struct ModelParams {
    CovModel model = CovModel::VVI;
    Eigen::VectorXd pi;            // G
    Eigen::MatrixXd mu;            // G x P
    Eigen::VectorXd lambda;        // G, volume on continuous/ordinal dims
    Eigen::VectorXd lambda_tilde;  // G, volume on nominal dims (1 when absent)
    Eigen::MatrixXd shape;         // G x P, a_gp

    std::size_t clusters() const { return static_cast<std::size_t>(pi.size()); }
    std::size_t dims() const { return static_cast<std::size_t>(mu.cols()); }

    /// Identity-covariance, equal-weight starting point.
    static ModelParams unit(CovModel model, std::size_t G, const LatentLayout& layout);
};

/// Diagonal of Sigma_g: lambda_g a_gp on continuous/ordinal dims,
/// lambda~_g a_gp on nominal dims.
Eigen::VectorXd sigma_diagonal(const ModelParams& params, std::size_t g, const LatentLayout& layout);

/// Rescales a_gp over the continuous/ordinal block so the product is 1.
void normalize_shape(ModelParams& params, const LatentLayout& layout);

/// Applies the nominal-dimension constraints: recentres nominal means so
/// sum_g pi_g mu_gp = 0; renormalizes or pins lambda~; renormalizes or pins
/// nominal a_gp.
ModelParams enforce_identifiability(ModelParams params, const LatentLayout& layout);

/// Covariance parameter count for the model (columns of the parsimony table).
long covariance_parameter_count(CovModel model, long G, const LatentLayout& layout);

/// Total free parameters: mixing weights, means (one constraint per nominal
/// dim when G > 1) and covariance parameters.
long count_free_parameters(CovModel model, long G, const LatentLayout& layout);

/// Largest violation of the ModelParams invariants (0 when all hold).
double invariant_violation(const ModelParams& params, const LatentLayout& layout);

/// Flattened parameter vector: pi, mu (cluster-major), lambda, lambda~,
/// shape (cluster-major).
Eigen::VectorXd flatten(const ModelParams& params);
ModelParams unflatten(const Eigen::VectorXd& flat, CovModel model, std::size_t G, std::size_t P);
std::vector<std::string> flat_names(std::size_t G, std::size_t P);

}  // namespace clustmd
