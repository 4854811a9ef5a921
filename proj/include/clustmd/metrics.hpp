#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace clustmd {

/// Counts of label pairs. Rows follow the sorted distinct values of the
/// first labeling, columns those of the second.
struct ContingencyTable {
    std::vector<int> row_labels;
    std::vector<int> col_labels;
    Eigen::MatrixXi counts;

    long total() const { return counts.cast<long>().sum(); }
};

ContingencyTable cross_tab(const std::vector<int>& a, const std::vector<int>& b);

/// Hubert-Arabie adjusted Rand index. Two partitions whose expected and
/// maximal index coincide (both trivial) score 1.
double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b);
double adjusted_rand(const ContingencyTable& table);

/// Expands a contingency table back into a pair of label vectors.
std::pair<std::vector<int>, std::vector<int>> labels_from_table(const Eigen::MatrixXi& counts);

}  // namespace clustmd
