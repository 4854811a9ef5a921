#include "clustmd/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "clustmd/serialize.hpp"

namespace clustmd {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path.string());
    return out;
}

void write_json(const fs::path& path, const Json& doc) {
    auto out = open_out(path);
    out << doc.dump(2) << '\n';
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create directory " + dir.string() + ": " + ec.message());
}

struct Manifest {
    Json doc;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit Manifest(const std::string& command) {
        doc["command"] = command;
        doc["version"] = kVersion;
        doc["config"] = Json::object();
        doc["inputs"] = Json::object();
    }
    void input(const std::string& key, const fs::path& path) {
        doc["inputs"][key] = {{"path", path.string()}, {"fnv1a64", fnv1a_file(path)}};
    }
    void write(const fs::path& path) {
        doc["wall_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_json(path, doc);
    }
};

fs::path labels_sidecar(const fs::path& data) {
    auto p = data;
    p.replace_extension();
    p += ".labels.csv";
    return p;
}

std::vector<int> read_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path.string());
    return read_labels_csv(in);
}

struct FitFlags {
    std::string data, schema;
    std::size_t iters = 500, mc_samples = 2000, window = 100, final_factor = 1, average = 100;
    std::uint64_t seed = 1;
    std::string init = "kmeans";
    double tol = 1e-3;
    bool no_average = false;

    void add(CLI::App* cmd) {
        cmd->add_option("--data", data, "CSV data file")->required();
        cmd->add_option("--schema", schema, "JSON schema file")->required();
        cmd->add_option("--iters", iters, "Maximum MCEM iterations")->capture_default_str();
        cmd->add_option("--mc-samples", mc_samples, "Monte Carlo samples per nominal cell")->capture_default_str();
        cmd->add_option("--seed", seed, "Master seed")->capture_default_str();
        cmd->add_option("--init", init, "kmeans, hierarchical or random")->capture_default_str();
        cmd->add_option("--window", window, "Convergence window width")->capture_default_str();
        cmd->add_option("--tol", tol, "Relative convergence tolerance")->capture_default_str();
        cmd->add_option("--average", average, "Iterates averaged for the final estimate")->capture_default_str();
        cmd->add_flag("--no-average", no_average, "Report the last iterate instead");
        cmd->add_option("--final-sample-factor", final_factor,
                        "Monte Carlo multiplier for the final likelihood tables")
            ->capture_default_str();
    }

    FitConfig config() const {
        FitConfig c;
        c.max_iters = iters;
        c.mc_samples = mc_samples;
        c.seed = seed;
        c.window = window;
        c.tolerance = tol;
        c.average_final = !no_average;
        c.average_window = average;
        c.final_sample_factor = final_factor;
        const auto method = parse_init_method(init);
        if (!method) throw UsageError("unknown --init '" + init + "'");
        c.init = *method;
        return c;
    }

    void echo(Json& j) const {
        j["data"] = data;
        j["schema"] = schema;
        j["iters"] = iters;
        j["mc_samples"] = mc_samples;
        j["seed"] = seed;
        j["init"] = init;
        j["window"] = window;
        j["tol"] = tol;
        j["average"] = no_average ? 0 : average;
        j["final_sample_factor"] = final_factor;
    }
};

CovModel model_flag(const std::string& name) {
    const auto m = parse_model(name);
    if (!m) throw UsageError("unknown covariance model '" + name + "'");
    return *m;
}

int cmd_fit(const FitFlags& flags, const std::string& model, std::size_t G, const fs::path& out_dir,
            const std::string& truth, bool dump_mc, bool tau) {
    Manifest manifest("fit");
    flags.echo(manifest.doc["config"]);
    manifest.doc["config"]["model"] = model;
    manifest.doc["config"]["G"] = G;
    manifest.doc["seed"] = flags.seed;

    auto config = flags.config();
    config.model = model_flag(model);
    config.clusters = G;
    config.validate();
    const auto data = load_dataset(flags.data, flags.schema);
    manifest.input("data", flags.data);
    manifest.input("schema", flags.schema);
    ensure_dir(out_dir);

    const auto result = fit(data, config);
    const auto layout = build_layout(data.schema());
    auto doc = to_json(result, layout, tau);

    fs::path truth_path = truth.empty() ? labels_sidecar(flags.data) : fs::path(truth);
    if (!truth.empty() || fs::exists(truth_path)) {
        const auto labels = read_labels(truth_path);
        manifest.input("truth", truth_path);
        const auto table = cross_tab(labels, result.assignments);
        const double ari = adjusted_rand(table);
        doc["truth"] = to_json(table, ari);
        std::cout << "ARI vs " << truth_path.string() << ": " << std::fixed << std::setprecision(4) << ari << '\n';
    }
    write_json(out_dir / "fit.json", doc);
    {
        auto out = open_out(out_dir / "trace.csv");
        write_trace_csv(out, result);
    }
    {
        auto out = open_out(out_dir / "labels.csv");
        write_labels_csv(out, result.assignments);
    }
    if (dump_mc && !result.final_table.empty()) {
        write_json(out_dir / "mc_tables.json", to_json(result.final_table));
    }
    manifest.write(out_dir / "manifest.json");

    std::cout << model_name(result.params.model) << " G=" << G << (result.converged ? " converged" : " not converged")
              << " after " << result.iterations << " iterations; BIC-hat " << std::setprecision(3) << result.bic
              << '\n';
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    return 0;
}

std::vector<CovModel> models_flag(const std::string& list) {
    std::vector<CovModel> models;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) models.push_back(model_flag(item));
    }
    if (models.empty()) throw UsageError("--models lists no model");
    return models;
}

int cmd_select(const FitFlags& flags, const std::string& models_list, std::size_t gmin, std::size_t gmax,
               std::size_t jobs, const fs::path& out_dir) {
    Manifest manifest("select");
    flags.echo(manifest.doc["config"]);
    manifest.doc["config"]["models"] = models_list;
    manifest.doc["config"]["gmin"] = gmin;
    manifest.doc["config"]["gmax"] = gmax;
    manifest.doc["config"]["jobs"] = jobs;
    manifest.doc["seed"] = flags.seed;

    if (gmin < 1 || gmax < gmin) throw UsageError("need 1 <= --gmin <= --gmax");
    const auto models = models_flag(models_list);
    auto config = flags.config();
    config.validate();
    std::vector<std::size_t> gs;
    for (auto g = gmin; g <= gmax; ++g) gs.push_back(g);
    const auto data = load_dataset(flags.data, flags.schema);
    manifest.input("data", flags.data);
    manifest.input("schema", flags.schema);
    ensure_dir(out_dir);

    const auto report = grid_search(data, models, gs, config, jobs);
    const auto layout = build_layout(data.schema());
    write_json(out_dir / "selection.json", to_json(report, layout));
    const auto table = format_bic_table(report);
    {
        auto out = open_out(out_dir / "bic_table.txt");
        out << table;
    }
    {
        auto out = open_out(out_dir / "bic.csv");
        write_bic_csv(out, report);
    }
    const auto& w = report.winner();
    if (w.result) {
        auto out = open_out(out_dir / "labels.csv");
        write_labels_csv(out, w.result->assignments);
    }
    manifest.write(out_dir / "manifest.json");
    std::cout << table << "selected: " << model_name(w.model) << " G=" << w.clusters
              << (report.best_converged ? "" : " (no cell converged)") << '\n';
    return 0;
}

int cmd_simulate(const std::string& spec_path, std::size_t replicates, std::optional<std::uint64_t> seed,
                 std::optional<std::size_t> rows, const fs::path& out_dir, const std::string& prefix) {
    Manifest manifest("simulate");
    manifest.doc["config"]["spec"] = spec_path;
    manifest.doc["config"]["replicates"] = replicates;
    if (rows) manifest.doc["config"]["rows"] = *rows;
    auto spec = load_generator(spec_path);
    manifest.input("spec", spec_path);
    if (rows) spec.rows = *rows;
    const std::uint64_t master = seed.value_or(spec.seed);
    manifest.doc["seed"] = master;
    if (replicates < 1) throw UsageError("--n-replicates must be positive");
    ensure_dir(out_dir);

    const auto schema_text = schema_to_json(spec.schema);
    Json files = Json::array();
    for (std::size_t r = 0; r < replicates; ++r) {
        spec.seed = replicates == 1 ? master : mix_seed(master, r);
        const auto sim = simulate(spec);
        char stem[64];
        std::snprintf(stem, sizeof stem, "%s%03zu", prefix.c_str(), r + 1);
        const auto base = out_dir / stem;
        {
            auto out = open_out(fs::path(base.string() + ".csv"));
            write_dataset_csv(out, sim.data);
        }
        {
            auto out = open_out(fs::path(base.string() + ".schema.json"));
            out << schema_text << '\n';
        }
        {
            auto out = open_out(fs::path(base.string() + ".labels.csv"));
            write_labels_csv(out, sim.labels);
        }
        files.push_back({{"stem", stem}, {"seed", spec.seed}});
    }
    manifest.doc["replicates"] = std::move(files);
    manifest.write(out_dir / (prefix + "manifest.json"));
    std::cout << "wrote " << replicates << " replicate(s) to " << out_dir.string() << '\n';
    return 0;
}

int cmd_score(const std::string& a_path, const std::string& b_path, const std::string& out) {
    Manifest manifest("score");
    const auto a = read_labels(a_path);
    const auto b = read_labels(b_path);
    manifest.input("labels_a", a_path);
    manifest.input("labels_b", b_path);
    if (a.size() != b.size()) {
        throw UsageError("label files differ in length (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
    }
    if (a.size() < 2) throw UsageError("need at least two labels");
    const auto table = cross_tab(a, b);
    const double ari = adjusted_rand(table);
    std::cout << "ARI " << std::fixed << std::setprecision(4) << ari << '\n';
    std::cout << std::setw(8) << "";
    for (int c : table.col_labels) std::cout << std::setw(8) << c;
    std::cout << '\n';
    for (Eigen::Index r = 0; r < table.counts.rows(); ++r) {
        std::cout << std::setw(8) << table.row_labels[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < table.counts.cols(); ++c) std::cout << std::setw(8) << table.counts(r, c);
        std::cout << '\n';
    }
    if (!out.empty()) {
        const fs::path path(out);
        if (path.has_parent_path()) ensure_dir(path.parent_path());
        write_json(path, to_json(table, ari));
        auto mpath = path;
        mpath.replace_extension(".manifest.json");
        manifest.write(mpath);
    }
    return 0;
}

int cmd_describe(const std::string& data_path, const std::string& schema_path) {
    const auto data = load_dataset(data_path, schema_path);
    std::cout << describe_json(data, compute_thresholds(data)) << '\n';
    return 0;
}

}  // namespace

std::string fnv1a_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize k = 0; k < in.gcount(); ++k) {
            h ^= static_cast<unsigned char>(buf[k]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Model-based clustering of mixed continuous, ordinal and nominal data"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    FitFlags fit_flags;
    std::string fit_model;
    std::size_t fit_G = 0;
    std::string fit_out = ".";
    std::string fit_truth;
    bool dump_mc = false, dump_tau = false;
    auto* fit_cmd = app.add_subcommand("fit", "Fit one covariance model with G clusters");
    fit_flags.add(fit_cmd);
    fit_cmd->add_option("--model", fit_model, "EII, VII, EEI, VEI, EVI or VVI")->required();
    fit_cmd->add_option("--G", fit_G, "Number of clusters")->required();
    fit_cmd->add_option("--out", fit_out, "Output directory")->capture_default_str();
    fit_cmd->add_option("--truth", fit_truth, "Reference labels (default: <data>.labels.csv when present)");
    fit_cmd->add_flag("--dump-mc", dump_mc, "Write the final Monte Carlo tables");
    fit_cmd->add_flag("--tau", dump_tau, "Include responsibilities in fit.json");

    FitFlags sel_flags;
    std::string sel_models = "EII,VII,EEI,VEI,EVI,VVI";
    std::size_t gmin = 1, gmax = 4, jobs = 0;
    std::string sel_out = ".";
    auto* sel_cmd = app.add_subcommand("select", "Fit a model x G grid and choose by BIC-hat");
    sel_flags.add(sel_cmd);
    sel_cmd->add_option("--models", sel_models, "Comma-separated covariance models")->capture_default_str();
    sel_cmd->add_option("--gmin", gmin, "Smallest G")->capture_default_str();
    sel_cmd->add_option("--gmax", gmax, "Largest G")->capture_default_str();
    sel_cmd->add_option("--jobs", jobs, "Worker threads (0: all cores)")->capture_default_str();
    sel_cmd->add_option("--out", sel_out, "Output directory")->capture_default_str();

    std::string spec_path, sim_out = ".", sim_prefix = "rep_";
    std::size_t replicates = 1;
    std::optional<std::uint64_t> sim_seed;
    std::optional<std::size_t> sim_rows;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate datasets from a generator spec");
    sim_cmd->add_option("--spec", spec_path, "Generator spec JSON")->required();
    sim_cmd->add_option("--n-replicates", replicates, "Number of datasets")->capture_default_str();
    sim_cmd->add_option("--seed", sim_seed, "Master seed (default: from the generator file)");
    sim_cmd->add_option("--rows", sim_rows, "Rows per dataset (default: from the generator file)");
    sim_cmd->add_option("--out-dir", sim_out, "Output directory")->capture_default_str();
    sim_cmd->add_option("--prefix", sim_prefix, "File name prefix")->capture_default_str();

    std::string score_a, score_b, score_out;
    auto* score_cmd = app.add_subcommand("score", "Adjusted Rand index and cross-tabulation of two labelings");
    score_cmd->add_option("labels_a", score_a, "First label CSV")->required();
    score_cmd->add_option("labels_b", score_b, "Second label CSV")->required();
    score_cmd->add_option("--out", score_out, "JSON output file");

    std::string desc_data, desc_schema;
    auto* desc_cmd = app.add_subcommand("describe", "Report the normalized dataset and thresholds");
    desc_cmd->add_option("--data", desc_data, "CSV data file")->required();
    desc_cmd->add_option("--schema", desc_schema, "JSON schema file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*fit_cmd) return cmd_fit(fit_flags, fit_model, fit_G, fit_out, fit_truth, dump_mc, dump_tau);
        if (*sel_cmd) return cmd_select(sel_flags, sel_models, gmin, gmax, jobs, sel_out);
        if (*sim_cmd) return cmd_simulate(spec_path, replicates, sim_seed, sim_rows, sim_out, sim_prefix);
        if (*score_cmd) return cmd_score(score_a, score_b, score_out);
        if (*desc_cmd) return cmd_describe(desc_data, desc_schema);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const SpecError& e) {
        std::cerr << "invalid spec: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace clustmd
