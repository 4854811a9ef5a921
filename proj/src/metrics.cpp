#include "clustmd/metrics.hpp"

#include <algorithm>
#include <string>

namespace clustmd {

namespace {

std::vector<int> distinct(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

double pairs(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

ContingencyTable cross_tab(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cross_tab: label vectors differ in length (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    }
    ContingencyTable t;
    t.row_labels = distinct(a);
    t.col_labels = distinct(b);
    t.counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(t.row_labels.size()),
                                     static_cast<Eigen::Index>(t.col_labels.size()));
    auto index = [](const std::vector<int>& levels, int v) {
        return static_cast<Eigen::Index>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin());
    };
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++t.counts(index(t.row_labels, a[i]), index(t.col_labels, b[i]));
    }
    return t;
}

double adjusted_rand(const ContingencyTable& table) {
    const Eigen::MatrixXd n = table.counts.cast<double>();
    const double total = n.sum();
    if (total < 2.0) {
        throw std::invalid_argument("adjusted_rand: need at least two observations");
    }
    const double index = n.unaryExpr([](double x) { return pairs(x); }).sum();
    const double rows = n.rowwise().sum().unaryExpr([](double x) { return pairs(x); }).sum();
    const double cols = n.colwise().sum().unaryExpr([](double x) { return pairs(x); }).sum();
    const double expected = rows * cols / pairs(total);
    const double maximum = 0.5 * (rows + cols);
    if (maximum == expected) {
        return 1.0;
    }
    return (index - expected) / (maximum - expected);
}

double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("adjusted_rand: label vectors differ in length (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    }
    return adjusted_rand(cross_tab(a, b));
}

std::pair<std::vector<int>, std::vector<int>> labels_from_table(const Eigen::MatrixXi& counts) {
    std::pair<std::vector<int>, std::vector<int>> out;
    for (Eigen::Index r = 0; r < counts.rows(); ++r) {
        for (Eigen::Index c = 0; c < counts.cols(); ++c) {
            if (counts(r, c) < 0) {
                throw std::invalid_argument("labels_from_table: negative count");
            }
            for (int k = 0; k < counts(r, c); ++k) {
                out.first.push_back(static_cast<int>(r));
                out.second.push_back(static_cast<int>(c));
            }
        }
    }
    return out;
}

}  // namespace clustmd
