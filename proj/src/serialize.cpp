#include "clustmd/serialize.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace clustmd {

namespace {

Json vec(const Eigen::VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
    return a;
}

Json rows(const Eigen::MatrixXd& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec(m.row(r).transpose()));
    return a;
}

Eigen::VectorXd read_vec(const Json& j, const char* what) {
    if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
    return v;
}

Eigen::MatrixXd read_rows(const Json& j, const char* what) {
    if (!j.is_array() || j.empty()) throw std::invalid_argument(std::string(what) + " must be a nonempty array");
    const auto cols = j[0].size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (j[r].size() != cols) throw std::invalid_argument(std::string(what) + " rows differ in length");
        m.row(static_cast<Eigen::Index>(r)) = read_vec(j[r], what).transpose();
    }
    return m;
}

std::string number(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::vector<int> shifted(const std::vector<int>& labels, int offset) {
    std::vector<int> out(labels);
    for (auto& l : out) l += offset;
    return out;
}

}  // namespace

Json to_json(const ModelParams& params, const LatentLayout& layout) {
    Json doc;
    doc["model"] = model_name(params.model);
    doc["clusters"] = params.clusters();
    doc["pi"] = vec(params.pi);
    doc["mu"] = rows(params.mu);
    doc["lambda"] = vec(params.lambda);
    doc["lambda_tilde"] = vec(params.lambda_tilde);
    doc["shape"] = rows(params.shape);
    Json sigma = Json::array();
    for (std::size_t g = 0; g < params.clusters(); ++g) sigma.push_back(vec(sigma_diagonal(params, g, layout)));
    doc["sigma_diagonal"] = std::move(sigma);
    return doc;
}

ModelParams params_from_json(const Json& doc) {
    ModelParams p;
    const auto model = parse_model(doc.at("model").get<std::string>());
    if (!model) throw std::invalid_argument("unknown covariance model " + doc.at("model").dump());
    p.model = *model;
    p.pi = read_vec(doc.at("pi"), "pi");
    p.mu = read_rows(doc.at("mu"), "mu");
    const auto G = p.pi.size();
    if (p.mu.rows() != G) throw std::invalid_argument("mu needs one row per cluster");
    p.lambda = read_vec(doc.at("lambda"), "lambda");
    if (doc.contains("lambda_tilde")) {
        p.lambda_tilde = read_vec(doc["lambda_tilde"], "lambda_tilde");
    } else {
        p.lambda_tilde = Eigen::VectorXd::Constant(G, volume_varies(p.model) ? 1.0 / static_cast<double>(G) : 1.0);
    }
    if (doc.contains("shape")) {
        p.shape = read_rows(doc["shape"], "shape");
    } else {
        p.shape = Eigen::MatrixXd::Ones(G, p.mu.cols());
    }
    if (p.lambda.size() != G || p.lambda_tilde.size() != G) {
        throw std::invalid_argument("lambda and lambda_tilde need one entry per cluster");
    }
    return p;
}

Json to_json(const FitResult& result, const LatentLayout& layout, bool include_tau) {
    Json doc;
    doc["model"] = model_name(result.params.model);
    doc["clusters"] = result.params.clusters();
    doc["converged"] = result.converged;
    doc["iterations"] = result.iterations;
    doc["restarts"] = result.restarts;
    doc["approx_loglik"] = result.approx_loglik;
    doc["bic_hat"] = result.bic;
    doc["free_parameters"] = result.free_parameters;
    doc["warnings"] = result.warnings;
    doc["params"] = to_json(result.params, layout);
    Eigen::VectorXd sizes = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(result.params.clusters()));
    for (int a : result.assignments) sizes[a] += 1.0;
    doc["cluster_sizes"] = vec(sizes);
    doc["labels"] = shifted(result.assignments, 1);
    if (include_tau) doc["tau"] = rows(result.tau);
    return doc;
}

Json to_json(const SelectionReport& report, const LatentLayout& layout) {
    Json doc;
    Json cells = Json::array();
    for (const auto& c : report.cells) {
        Json cell;
        cell["model"] = model_name(c.model);
        cell["clusters"] = c.clusters;
        cell["ok"] = c.ok;
        if (c.ok) {
            cell["bic_hat"] = c.bic;
            cell["approx_loglik"] = c.loglik;
            cell["free_parameters"] = c.free_parameters;
            cell["converged"] = c.converged;
            cell["iterations"] = c.iterations;
        } else {
            cell["error"] = c.error;
        }
        cells.push_back(std::move(cell));
    }
    doc["cells"] = std::move(cells);
    if (report.best) {
        const auto& w = report.winner();
        Json best;
        best["model"] = model_name(w.model);
        best["clusters"] = w.clusters;
        best["bic_hat"] = w.bic;
        best["among_converged"] = report.best_converged;
        if (w.result) best["fit"] = to_json(*w.result, layout);
        doc["best"] = std::move(best);
    }
    return doc;
}

Json to_json(const NominalMCTable& table) {
    Json doc = Json::array();
    for (std::size_t g = 0; g < table.cells.size(); ++g) {
        for (std::size_t j = 0; j < table.cells[g].size(); ++j) {
            const auto& c = table.cells[g][j];
            Json cell;
            cell["cluster"] = g + 1;
            cell["variable"] = j + 1;
            cell["samples"] = c.samples;
            cell["seed"] = c.seed;
            cell["counts"] = c.counts;
            cell["probs"] = vec(c.probs);
            cell["mean"] = rows(c.mean);
            cell["second"] = rows(c.second);
            doc.push_back(std::move(cell));
        }
    }
    return doc;
}

Json to_json(const ContingencyTable& table, double ari) {
    Json doc;
    doc["adjusted_rand"] = ari;
    doc["row_labels"] = table.row_labels;
    doc["col_labels"] = table.col_labels;
    Json counts = Json::array();
    for (Eigen::Index r = 0; r < table.counts.rows(); ++r) {
        std::vector<int> row(table.counts.cols());
        for (Eigen::Index c = 0; c < table.counts.cols(); ++c) row[c] = table.counts(r, c);
        counts.push_back(row);
    }
    doc["counts"] = std::move(counts);
    doc["total"] = table.total();
    return doc;
}

Json to_json(const GeneratorSpec& spec) {
    Json doc;
    doc["schema"] = Json::parse(schema_to_json(spec.schema));
    Json p;
    p["model"] = model_name(spec.params.model);
    p["pi"] = vec(spec.params.pi);
    p["mu"] = rows(spec.params.mu);
    p["lambda"] = vec(spec.params.lambda);
    p["lambda_tilde"] = vec(spec.params.lambda_tilde);
    p["shape"] = rows(spec.params.shape);
    doc["params"] = std::move(p);
    doc["thresholds"] = spec.thresholds;
    doc["rows"] = spec.rows;
    doc["seed"] = spec.seed;
    doc["latent_correlation"] = spec.latent_correlation;
    return doc;
}

GeneratorSpec generator_from_json(const Json& doc) {
    GeneratorSpec spec;
    try {
        const auto schema = parse_schema(doc.at("schema").dump());
        for (auto k : canonical_order(schema)) spec.schema.push_back(schema[k]);
        spec.params = params_from_json(doc.at("params"));
        const auto layout = spec.layout();
        if (!doc.at("params").contains("shape") && shape_kind(spec.params.model) == ShapeKind::Varying &&
            static_cast<std::size_t>(spec.params.shape.cols()) == layout.total) {
            // nominal shape columns sum to one across clusters
            spec.params.shape.rightCols(static_cast<Eigen::Index>(layout.nominal_dims()))
                .setConstant(1.0 / static_cast<double>(spec.params.clusters()));
        }
        spec.thresholds = doc.at("thresholds").get<std::vector<std::vector<double>>>();
        spec.rows = doc.value("rows", std::size_t{800});
        spec.seed = doc.value("seed", std::uint64_t{1});
        spec.latent_correlation = doc.value("latent_correlation", 0.0);
    } catch (const Json::exception& e) {
        throw SpecError(std::string("generator spec: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw SpecError(std::string("generator spec: ") + e.what());
    } catch (const DataError& e) {
        throw SpecError(std::string("generator spec: ") + e.what());
    }
    validate(spec);
    return spec;
}

GeneratorSpec load_generator(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open " + path.string());
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw SpecError(path.string() + ": " + e.what());
    }
    return generator_from_json(doc);
}

void write_trace_csv(std::ostream& out, const FitResult& result) {
    const auto G = result.params.clusters();
    const auto P = result.params.dims();
    out << "iteration,loglik";
    for (const auto& name : flat_names(G, P)) out << ',' << name;
    out << '\n';
    for (std::size_t t = 0; t < result.trace.size(); ++t) {
        out << t + 1 << ',';
        if (t < result.loglik_trace.size()) out << number(result.loglik_trace[t]);
        const auto& row = result.trace[t];
        for (Eigen::Index k = 0; k < row.size(); ++k) out << ',' << number(row[k]);
        out << '\n';
    }
}

void write_bic_csv(std::ostream& out, const SelectionReport& report) {
    out << "model,G,bic_hat,loglik,free_parameters,converged,selected\n";
    for (std::size_t c = 0; c < report.cells.size(); ++c) {
        const auto& cell = report.cells[c];
        out << model_name(cell.model) << ',' << cell.clusters << ',';
        if (cell.ok) {
            out << number(cell.bic) << ',' << number(cell.loglik) << ',' << cell.free_parameters << ','
                << (cell.converged ? 1 : 0);
        } else {
            out << ",,,";
        }
        out << ',' << (report.best && *report.best == c ? 1 : 0) << '\n';
    }
}

void write_labels_csv(std::ostream& out, const std::vector<int>& labels, int offset) {
    out << "label\n";
    for (int l : labels) out << l + offset << '\n';
}

std::vector<int> read_labels_csv(std::istream& in) {
    std::vector<int> labels;
    const auto records = parse_csv(in);
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (records[r].empty() || (records[r].size() == 1 && records[r][0].empty())) continue;
        const auto& cell = records[r][0];
        int v = 0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || ptr != cell.data() + cell.size()) {
            if (r == 0) continue;
            throw DataError(DataError::Kind::NonNumeric, "label '" + cell + "' is not an integer", r + 1);
        }
        labels.push_back(v);
    }
    return labels;
}

}  // namespace clustmd
