#pragma once

#include "pdfuse/dataset.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace pdfuse::eval {

// rows = true class, cols = predicted class
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};

    std::uint64_t total() const;
    std::uint64_t trace() const;
};

ConfusionMatrix confusion(const std::vector<ClassLabel>& truth,
                          const std::vector<ClassLabel>& predicted);

// Macro-averaged precision/recall/F1; per-class values with zero denominators
// count as 0. F1 is the per-class harmonic mean averaged over classes.
struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

MetricsReport metrics(const ConfusionMatrix& cm);

} // namespace pdfuse::eval
