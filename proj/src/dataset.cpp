#include "clustmd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "clustmd/normal.hpp"
#include "json.hpp"

namespace clustmd {

using json = nlohmann::ordered_json;

const char* to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::Continuous: return "continuous";
        case ColumnKind::Ordinal: return "ordinal";
        case ColumnKind::Nominal: return "nominal";
    }
    return "unknown";
}

DataError::DataError(Kind kind, std::string message, std::size_t row, std::string column)
    : std::runtime_error(std::move(message)), kind_(kind), row_(row), column_(std::move(column)) {}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

std::string cell_label(std::size_t row, const std::string& column) {
    std::ostringstream os;
    os << "row " << row << ", column '" << column << "'";
    return os.str();
}

}  // namespace

Schema parse_schema(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw DataError(DataError::Kind::BadSchema, std::string("schema is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("columns") || !doc["columns"].is_array()) {
        throw DataError(DataError::Kind::BadSchema, "schema must be an object with a 'columns' array");
    }
    Schema schema;
    std::set<std::string> names;
    for (const auto& col : doc["columns"]) {
        if (!col.is_object() || !col.contains("name") || !col["name"].is_string() ||
            !col.contains("kind") || !col["kind"].is_string()) {
            throw DataError(DataError::Kind::BadSchema, "every schema column needs a string 'name' and 'kind'");
        }
        ColumnSpec spec;
        spec.name = col["name"].get<std::string>();
        const auto kind = col["kind"].get<std::string>();
        if (!names.insert(spec.name).second) {
            throw DataError(DataError::Kind::BadSchema, "duplicate column name '" + spec.name + "'", 0, spec.name);
        }
        if (kind == "continuous") {
            spec.kind = ColumnKind::Continuous;
        } else if (kind == "ordinal" || kind == "binary") {
            spec.kind = ColumnKind::Ordinal;
        } else if (kind == "nominal") {
            spec.kind = ColumnKind::Nominal;
        } else {
            throw DataError(DataError::Kind::BadSchema, "column '" + spec.name + "' has unknown kind '" + kind + "'",
                            0, spec.name);
        }
        if (spec.kind != ColumnKind::Continuous) {
            if (!col.contains("levels") || !col["levels"].is_number_integer()) {
                throw DataError(DataError::Kind::BadSchema,
                                "categorical column '" + spec.name + "' needs an integer 'levels'", 0, spec.name);
            }
            spec.levels = col["levels"].get<int>();
            if (spec.levels < 2) {
                throw DataError(DataError::Kind::BadSchema,
                                "categorical column '" + spec.name + "' needs at least 2 levels", 0, spec.name);
            }
            // A two-level nominal variable is the binary ordinal model.
            if (spec.levels == 2) {
                spec.kind = ColumnKind::Ordinal;
            }
        }
        schema.push_back(std::move(spec));
    }
    if (schema.empty()) {
        throw DataError(DataError::Kind::BadSchema, "schema declares no columns");
    }
    return schema;
}

Schema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(DataError::Kind::Io, "cannot open schema file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_schema(buffer.str());
}

std::string schema_to_json(const Schema& schema) {
    json cols = json::array();
    for (const auto& c : schema) {
        json entry;
        entry["name"] = c.name;
        entry["kind"] = to_string(c.kind);
        if (c.categorical()) {
            entry["levels"] = c.levels;
        }
        cols.push_back(std::move(entry));
    }
    json doc;
    doc["columns"] = std::move(cols);
    return doc.dump(2);
}

std::vector<std::size_t> canonical_order(const Schema& schema) {
    std::vector<std::size_t> order(schema.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return static_cast<int>(schema[a].kind) < static_cast<int>(schema[b].kind);
    });
    return order;
}

MixedDataset::MixedDataset(Schema schema, Eigen::MatrixXd continuous, Eigen::MatrixXi codes,
                           std::vector<std::size_t> source_order)
    : schema_(std::move(schema)),
      continuous_(std::move(continuous)),
      codes_(std::move(codes)),
      source_order_(std::move(source_order)) {
    int previous = 0;
    for (const auto& c : schema_) {
        const int rank = static_cast<int>(c.kind);
        if (rank < previous) {
            throw DataError(DataError::Kind::BadSchema, "schema is not in continuous/ordinal/nominal block order");
        }
        previous = rank;
        switch (c.kind) {
            case ColumnKind::Continuous: ++n_continuous_; break;
            case ColumnKind::Ordinal: ++n_ordinal_; break;
            case ColumnKind::Nominal: ++n_nominal_; break;
        }
    }
    if (source_order_.empty()) {
        source_order_.resize(schema_.size());
        for (std::size_t i = 0; i < source_order_.size(); ++i) {
            source_order_[i] = i;
        }
    }
    if (continuous_.cols() == 0 && codes_.rows() > 0) {
        continuous_.resize(codes_.rows(), 0);
    }
    if (codes_.cols() == 0 && continuous_.rows() > 0) {
        codes_.resize(continuous_.rows(), 0);
    }
    if (static_cast<std::size_t>(continuous_.cols()) != n_continuous_ ||
        static_cast<std::size_t>(codes_.cols()) != n_ordinal_ + n_nominal_ ||
        continuous_.rows() != codes_.rows()) {
        throw DataError(DataError::Kind::BadSchema, "data matrix shape does not match the schema");
    }
    for (Eigen::Index i = 0; i < continuous_.rows(); ++i) {
        for (Eigen::Index c = 0; c < continuous_.cols(); ++c) {
            if (!std::isfinite(continuous_(i, c))) {
                throw DataError(DataError::Kind::NonNumeric,
                                "non-finite continuous value at " + cell_label(i + 1, schema_[c].name), i + 1,
                                schema_[c].name);
            }
        }
        for (Eigen::Index k = 0; k < codes_.cols(); ++k) {
            const auto& spec = schema_[n_continuous_ + k];
            const int code = codes_(i, k);
            if (code < 1 || code > spec.levels) {
                std::ostringstream os;
                os << "categorical code " << code << " outside 1.." << spec.levels << " at "
                   << cell_label(i + 1, spec.name);
                throw DataError(DataError::Kind::OutOfRange, os.str(), i + 1, spec.name);
            }
        }
    }
}

MixedDataset MixedDataset::select_rows(const std::vector<std::size_t>& rows) const {
    Eigen::MatrixXd cont(rows.size(), continuous_.cols());
    Eigen::MatrixXi cat(rows.size(), codes_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        cont.row(r) = continuous_.row(rows[r]);
        cat.row(r) = codes_.row(rows[r]);
    }
    return MixedDataset(schema_, std::move(cont), std::move(cat), source_order_);
}

bool MixedDataset::operator==(const MixedDataset& other) const {
    return schema_ == other.schema_ && continuous_.rows() == other.continuous_.rows() &&
           continuous_ == other.continuous_ && codes_ == other.codes_;
}

std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    char ch;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        // Skip blank lines.
        if (!(record.size() == 1 && record[0].empty())) {
            records.push_back(std::move(record));
        }
        record.clear();
    };
    while (in.get(ch)) {
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (!field_started) {
                    in_quotes = true;
                    field_started = true;
                } else {
                    field.push_back(ch);
                }
                break;
            case ',': end_field(); break;
            case '\r':
                if (in.peek() == '\n') {
                    in.get(ch);
                }
                end_record();
                break;
            case '\n': end_record(); break;
            default:
                field.push_back(ch);
                field_started = true;
                break;
        }
    }
    if (field_started || !field.empty() || !record.empty()) {
        end_record();
    }
    return records;
}

MixedDataset read_dataset(std::istream& csv, const Schema& schema) {
    const auto records = parse_csv(csv);
    if (records.empty()) {
        throw DataError(DataError::Kind::Io, "CSV input is empty (a header row is required)");
    }
    const auto& header = records.front();
    std::map<std::string, std::size_t> schema_index;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        schema_index[schema[i].name] = i;
    }
    // schema column -> csv column
    std::vector<std::size_t> csv_column(schema.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto name = trim(header[c]);
        auto it = schema_index.find(name);
        if (it == schema_index.end()) {
            throw DataError(DataError::Kind::UnknownColumn, "CSV column '" + name + "' is not declared in the schema",
                            0, name);
        }
        csv_column[it->second] = c;
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (csv_column[i] == std::numeric_limits<std::size_t>::max()) {
            throw DataError(DataError::Kind::MissingColumn,
                            "schema column '" + schema[i].name + "' is absent from the CSV header", 0, schema[i].name);
        }
    }

    const auto order = canonical_order(schema);
    Schema canonical;
    for (auto idx : order) {
        canonical.push_back(schema[idx]);
    }
    std::size_t n_cont = 0;
    for (const auto& c : canonical) {
        n_cont += c.kind == ColumnKind::Continuous ? 1 : 0;
    }
    const std::size_t n = records.size() - 1;
    Eigen::MatrixXd cont(n, n_cont);
    Eigen::MatrixXi codes(n, canonical.size() - n_cont);

    for (std::size_t r = 0; r < n; ++r) {
        const auto& rec = records[r + 1];
        const std::size_t row = r + 1;
        if (rec.size() != header.size()) {
            std::ostringstream os;
            os << "row " << row << " has " << rec.size() << " fields, header has " << header.size();
            throw DataError(DataError::Kind::RaggedRow, os.str(), row);
        }
        for (std::size_t k = 0; k < canonical.size(); ++k) {
            const auto& spec = canonical[k];
            const auto text = trim(rec[csv_column[order[k]]]);
            if (is_missing_token(text)) {
                throw DataError(DataError::Kind::MissingCell, "missing value at " + cell_label(row, spec.name), row,
                                spec.name);
            }
            if (spec.kind == ColumnKind::Continuous) {
                double v = 0.0;
                const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
                if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
                    throw DataError(DataError::Kind::NonNumeric,
                                    "non-numeric continuous value '" + text + "' at " + cell_label(row, spec.name),
                                    row, spec.name);
                }
                cont(r, k) = v;
            } else {
                long v = 0;
                const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
                if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
                    throw DataError(DataError::Kind::NonNumeric,
                                    "categorical value '" + text + "' is not an integer code at " +
                                        cell_label(row, spec.name),
                                    row, spec.name);
                }
                if (v < 1 || v > spec.levels) {
                    std::ostringstream os;
                    os << "categorical code " << v << " outside 1.." << spec.levels << " at "
                       << cell_label(row, spec.name);
                    throw DataError(DataError::Kind::OutOfRange, os.str(), row, spec.name);
                }
                codes(r, k - n_cont) = static_cast<int>(v);
            }
        }
    }
    return MixedDataset(std::move(canonical), std::move(cont), std::move(codes), order);
}

MixedDataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& schema_path) {
    const auto schema = load_schema(schema_path);
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) {
        throw DataError(DataError::Kind::Io, "cannot open data file " + csv_path.string());
    }
    return read_dataset(in, schema);
}

namespace {

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out.push_back('"');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace

void write_dataset_csv(std::ostream& out, const MixedDataset& data) {
    const auto& schema = data.schema();
    for (std::size_t k = 0; k < schema.size(); ++k) {
        out << (k ? "," : "") << quote_csv(schema[k].name);
    }
    out << '\n';
    const auto n_cont = data.continuous_count();
    char buf[64];
    for (std::size_t i = 0; i < data.rows(); ++i) {
        for (std::size_t k = 0; k < schema.size(); ++k) {
            if (k) {
                out << ',';
            }
            if (k < n_cont) {
                const auto res = std::to_chars(buf, buf + sizeof buf, data.continuous()(i, k));
                out.write(buf, res.ptr - buf);
            } else {
                out << data.codes()(i, k - n_cont);
            }
        }
        out << '\n';
    }
}

ThresholdSet compute_thresholds(const MixedDataset& data) {
    ThresholdSet set;
    const double n = static_cast<double>(data.rows());
    for (std::size_t o = 0; o < data.ordinal_count(); ++o) {
        const auto& spec = data.ordinal_spec(o);
        std::vector<std::size_t> counts(spec.levels, 0);
        for (std::size_t i = 0; i < data.rows(); ++i) {
            ++counts[data.ordinal_code(i, o) - 1];
        }
        std::vector<double> gamma(spec.levels + 1);
        gamma.front() = -std::numeric_limits<double>::infinity();
        gamma.back() = std::numeric_limits<double>::infinity();
        std::size_t cumulative = 0;
        for (int k = 1; k < spec.levels; ++k) {
            cumulative += counts[k - 1];
            if (cumulative == 0 || cumulative == data.rows()) {
                std::ostringstream os;
                os << "ordinal column '" << spec.name << "': cumulative share at level " << k << " is "
                   << (cumulative == 0 ? 0 : 1)
                   << ", giving an infinite threshold; merge sparse levels before fitting";
                throw DataError(DataError::Kind::DegenerateLevel, os.str(), 0, spec.name);
            }
            gamma[k] = normal::quantile(static_cast<double>(cumulative) / n);
        }
        set.gamma.push_back(std::move(gamma));
    }
    return set;
}

std::string describe_json(const MixedDataset& data, const ThresholdSet& thresholds) {
    json doc;
    doc["rows"] = data.rows();
    doc["columns"] = data.columns();
    doc["continuous"] = data.continuous_count();
    doc["ordinal"] = data.ordinal_count();
    doc["nominal"] = data.nominal_count();
    json cols = json::array();
    const auto n_cont = data.continuous_count();
    for (std::size_t k = 0; k < data.columns(); ++k) {
        const auto& spec = data.schema()[k];
        json c;
        c["name"] = spec.name;
        c["kind"] = to_string(spec.kind);
        c["source_index"] = data.source_order()[k];
        if (spec.categorical()) {
            c["levels"] = spec.levels;
            std::vector<std::size_t> counts(spec.levels, 0);
            for (std::size_t i = 0; i < data.rows(); ++i) {
                ++counts[data.codes()(i, k - n_cont) - 1];
            }
            c["counts"] = counts;
            if (spec.kind == ColumnKind::Ordinal) {
                const auto& g = thresholds[k - n_cont];
                c["thresholds"] = std::vector<double>(g.begin() + 1, g.end() - 1);
            }
        } else {
            const auto col = data.continuous().col(k);
            const double mean = col.mean();
            c["mean"] = mean;
            c["variance"] = (col.array() - mean).square().mean();
        }
        cols.push_back(std::move(c));
    }
    doc["schema"] = std::move(cols);
    return doc.dump(2);
}

}  // namespace clustmd
