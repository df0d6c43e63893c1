#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedpall/matrix.hpp"

namespace fedpall {

// Fraction of rows whose argmax matches the label. Ties resolve to the
// lowest index. Works on probabilities or logits alike.
double top1_accuracy(const DenseMatrix& scores, std::span<const int> labels);

struct MetricsRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string method;
    std::size_t round = 0;
    std::string phase;
    int client_id = 0;
    std::string split;
    double top1 = 0.0;
    double loss_ce = 0.0;
    double loss_kl = 0.0;
    double loss_nce = 0.0;

    bool operator==(const MetricsRow&) const = default;
};

// Append-only run log with a fixed CSV rendering: stable header, %.6f
// floats, \n line endings. Equal logs serialize to identical bytes.
class MetricsLog {
public:
    void add(MetricsRow row);
    const std::vector<MetricsRow>& rows() const { return rows_; }
    std::string to_csv() const;
    void write_csv(const std::string& path) const;

    bool operator==(const MetricsLog&) const = default;

private:
    std::vector<MetricsRow> rows_;
};

}  // namespace fedpall
