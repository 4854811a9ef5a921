#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "clustmd/dataset.hpp"
#include "clustmd/latent_kernel.hpp"
#include "clustmd/model_params.hpp"

namespace clustmd {

/// Generating values for synthetic mixed data. `thresholds` holds the
/// interior cut points of each ordinal column (K_j - 1 increasing values).
struct GeneratorSpec {
    Schema schema;  // canonical order
    ModelParams params;
    std::vector<std::vector<double>> thresholds;
    std::size_t rows = 800;
    std::uint64_t seed = 1;
    /// Equicorrelation of the latent vector within a cluster. Zero gives the
    /// diagonal model; nonzero values break the model's assumptions on purpose.
    double latent_correlation = 0.0;

    LatentLayout layout() const { return build_layout(schema); }
};

class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Throws SpecError describing the first violated requirement.
void validate(const GeneratorSpec& spec);

struct SimulatedData {
    MixedDataset data;
    std::vector<int> labels;  // 0-based generating cluster
};

SimulatedData simulate(const GeneratorSpec& spec);

}  // namespace clustmd
