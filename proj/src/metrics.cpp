#include "fedpall/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "fedpall/errors.hpp"

namespace fedpall {

double top1_accuracy(const DenseMatrix& scores, std::span<const int> labels) {
    if (labels.size() != scores.rows) {
        throw DimensionError("top1_accuracy: labels length does not match batch size");
    }
    if (scores.rows == 0) {
        throw DomainError("top1_accuracy: empty batch");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < scores.rows; ++i) {
        const double* row = scores.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < scores.cols; ++j) {
            if (row[j] > row[best]) {
                best = j;
            }
        }
        if (static_cast<std::size_t>(labels[i]) == best) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(scores.rows);
}

void MetricsLog::add(MetricsRow row) { rows_.push_back(std::move(row)); }

std::string MetricsLog::to_csv() const {
    std::string out = "run_id,seed,method,round,phase,client_id,split,top1,loss_ce,loss_kl,loss_nce\n";
    char buf[128];
    for (const MetricsRow& r : rows_) {
        out += r.run_id;
        std::snprintf(buf, sizeof(buf), ",%llu,", static_cast<unsigned long long>(r.seed));
        out += buf;
        out += r.method;
        std::snprintf(buf, sizeof(buf), ",%zu,", r.round);
        out += buf;
        out += r.phase;
        std::snprintf(buf, sizeof(buf), ",%d,", r.client_id);
        out += buf;
        out += r.split;
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%.6f\n", r.top1, r.loss_ce, r.loss_kl,
                      r.loss_nce);
        out += buf;
    }
    return out;
}

void MetricsLog::write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw UsageError("cannot open metrics file for writing: " + path);
    }
    const std::string csv = to_csv();
    f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
    if (!f) {
        throw UsageError("failed writing metrics file: " + path);
    }
}

}  // namespace fedpall
