#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "clustmd/em_engine.hpp"
#include "clustmd/metrics.hpp"
#include "clustmd/selection.hpp"
#include "clustmd/simulate.hpp"

namespace clustmd {

using Json = nlohmann::ordered_json;

Json to_json(const ModelParams& params, const LatentLayout& layout);
ModelParams params_from_json(const Json& doc);

/// Cluster labels are written 1-based.
Json to_json(const FitResult& result, const LatentLayout& layout, bool include_tau = false);
Json to_json(const SelectionReport& report, const LatentLayout& layout);
Json to_json(const NominalMCTable& table);
Json to_json(const ContingencyTable& table, double ari);

Json to_json(const GeneratorSpec& spec);
/// Schema may list columns in any order as long as the parameter columns
/// follow the canonical latent layout.
GeneratorSpec generator_from_json(const Json& doc);
GeneratorSpec load_generator(const std::filesystem::path& path);

/// One row per M-step: iteration, observed log-likelihood, flattened params.
void write_trace_csv(std::ostream& out, const FitResult& result);
void write_bic_csv(std::ostream& out, const SelectionReport& report);

/// Single-column CSV with header "label".
void write_labels_csv(std::ostream& out, const std::vector<int>& labels, int offset = 1);
/// First column of a CSV; a non-integer first row is taken as a header.
std::vector<int> read_labels_csv(std::istream& in);

}  // namespace clustmd
