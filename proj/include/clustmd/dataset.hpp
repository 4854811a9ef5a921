#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace clustmd {

enum class ColumnKind { Continuous, Ordinal, Nominal };

const char* to_string(ColumnKind kind);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Continuous;
    int levels = 0;  // K_j for categorical columns, 0 for continuous

    bool categorical() const { return kind != ColumnKind::Continuous; }
    bool operator==(const ColumnSpec&) const = default;
};

using Schema = std::vector<ColumnSpec>;

/// Ingestion and validation failure. Row and column are 1-based data row
/// and column name where applicable.
class DataError : public std::runtime_error {
public:
    enum class Kind {
        BadSchema,
        UnknownColumn,
        MissingColumn,
        MissingCell,
        NonNumeric,
        OutOfRange,
        RaggedRow,
        DegenerateLevel,
        Io,
    };

    DataError(Kind kind, std::string message, std::size_t row = 0, std::string column = {});

    Kind kind() const { return kind_; }
    std::size_t row() const { return row_; }
    const std::string& column() const { return column_; }

private:
    Kind kind_;
    std::size_t row_;
    std::string column_;
};

/// Parses a schema document `{"columns":[{"name":..,"kind":..,"levels":K}]}`.
/// A two-level categorical column is classified ordinal whatever its
/// declared kind.
Schema parse_schema(const std::string& json_text);
Schema load_schema(const std::filesystem::path& path);
std::string schema_to_json(const Schema& schema);

/// Stable reordering of a schema into continuous, ordinal, nominal blocks.
/// Returns, for every canonical position, the index in the input schema.
std::vector<std::size_t> canonical_order(const Schema& schema);

/// N x J mixed table in canonical block order. Continuous cells live in
/// `continuous` (N x C); categorical codes 1..K_j in `codes` (N x (J - C)),
/// ordinal columns first.
class MixedDataset {
public:
    MixedDataset() = default;

    /// `schema` must already be in canonical order. Validates every cell.
    MixedDataset(Schema schema, Eigen::MatrixXd continuous, Eigen::MatrixXi codes,
                 std::vector<std::size_t> source_order = {});

    const Schema& schema() const { return schema_; }
    std::size_t rows() const { return static_cast<std::size_t>(continuous_.rows()); }
    std::size_t columns() const { return schema_.size(); }
    std::size_t continuous_count() const { return n_continuous_; }
    std::size_t ordinal_count() const { return n_ordinal_; }
    std::size_t nominal_count() const { return n_nominal_; }

    const Eigen::MatrixXd& continuous() const { return continuous_; }
    const Eigen::MatrixXi& codes() const { return codes_; }

    /// Ordinal column o (0-based within the ordinal block).
    int ordinal_code(std::size_t row, std::size_t o) const {
        return codes_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(o));
    }
    /// Nominal column j (0-based within the nominal block).
    int nominal_code(std::size_t row, std::size_t j) const {
        return codes_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(n_ordinal_ + j));
    }
    const ColumnSpec& ordinal_spec(std::size_t o) const { return schema_[n_continuous_ + o]; }
    const ColumnSpec& nominal_spec(std::size_t j) const {
        return schema_[n_continuous_ + n_ordinal_ + j];
    }

    /// Canonical position -> column index in the source file.
    const std::vector<std::size_t>& source_order() const { return source_order_; }

    /// Subset of rows, in the given order.
    MixedDataset select_rows(const std::vector<std::size_t>& rows) const;

    bool operator==(const MixedDataset& other) const;

private:
    Schema schema_;
    Eigen::MatrixXd continuous_;
    Eigen::MatrixXi codes_;
    std::vector<std::size_t> source_order_;
    std::size_t n_continuous_ = 0;
    std::size_t n_ordinal_ = 0;
    std::size_t n_nominal_ = 0;
};

/// Splits RFC-4180 CSV text into records.
std::vector<std::vector<std::string>> parse_csv(std::istream& in);

MixedDataset read_dataset(std::istream& csv, const Schema& schema);
MixedDataset load_dataset(const std::filesystem::path& csv_path,
                          const std::filesystem::path& schema_path);

/// Writes the dataset in canonical column order with a header row.
void write_dataset_csv(std::ostream& out, const MixedDataset& data);

/// Per ordinal column: gamma_0 = -inf, gamma_K = +inf, interior
/// gamma_k = Phi^{-1}(share of observations at level <= k).
struct ThresholdSet {
    std::vector<std::vector<double>> gamma;

    std::size_t size() const { return gamma.size(); }
    const std::vector<double>& operator[](std::size_t o) const { return gamma[o]; }
};

ThresholdSet compute_thresholds(const MixedDataset& data);

/// JSON report of the normalized dataset: schema, permutation, level
/// frequencies and thresholds.
std::string describe_json(const MixedDataset& data, const ThresholdSet& thresholds);

}  // namespace clustmd
