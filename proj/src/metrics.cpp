#include "pdfuse/metrics.hpp"

#include <stdexcept>

namespace pdfuse::eval {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto& row : counts) {
        for (std::uint64_t c : row) t += c;
    }
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (int i = 0; i < kNumClasses; ++i) t += counts[i][i];
    return t;
}

ConfusionMatrix confusion(const std::vector<ClassLabel>& truth,
                          const std::vector<ClassLabel>& predicted) {
    if (truth.size() != predicted.size()) {
        throw std::runtime_error("true and predicted label counts differ");
    }
    if (truth.empty()) {
        throw std::runtime_error("cannot build a confusion matrix from zero labels");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = static_cast<int>(truth[i]);
        const int p = static_cast<int>(predicted[i]);
        if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses) {
            throw std::runtime_error("label code out of range");
        }
        cm.counts[t][p]++;
    }
    return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) {
        throw std::runtime_error("confusion matrix is empty");
    }
    MetricsReport r;
    r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    for (int c = 0; c < kNumClasses; ++c) {
        const std::uint64_t tp = cm.counts[c][c];
        std::uint64_t fp = 0;
        std::uint64_t fn = 0;
        for (int o = 0; o < kNumClasses; ++o) {
            if (o == c) continue;
            fp += cm.counts[o][c];
            fn += cm.counts[c][o];
        }
        const double precision =
            (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall =
            (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        const double f1 =
            (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        r.precision += precision / kNumClasses;
        r.recall += recall / kNumClasses;
        r.f1 += f1 / kNumClasses;
    }
    return r;
}

} // namespace pdfuse::eval
