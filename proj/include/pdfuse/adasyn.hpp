#pragma once

#include "pdfuse/dataset.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace pdfuse::adasyn {

struct AdasynConfig {
    int k = 5;
    double beta = 1.0;
    std::uint64_t seed = 0;
};

// Row-major feature matrix with one class label per row.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;
    std::vector<ClassLabel> labels;

    std::span<const float> row(std::size_t r) const {
        return {values.data() + r * cols, cols};
    }
    void append_row(std::span<const float> v, ClassLabel label);
    std::array<std::size_t, kNumClasses> class_counts() const;
    void validate() const;
};

struct AdasynPlan {
    ClassLabel minority = ClassLabel::HC;
    std::vector<std::size_t> minority_rows; // row indices, ascending
    std::vector<double> ratio;              // r_i, majority dominance per neighborhood
    std::vector<double> ratio_norm;         // r_i normalized (uniform fallback when all zero)
    std::vector<std::size_t> counts;        // G_i, sums to total exactly
    std::size_t total = 0;                  // G
    int k_effective = 0;                    // k after clamping to rows-1
    bool k_clamped = false;
};

// Indices of the k nearest rows by Euclidean distance, excluding the query
// row; ties broken by ascending row index.
std::vector<std::size_t> knn_indices(const FeatureMatrix& x, std::size_t query_row, int k);

// Largest-remainder apportionment of total across the given shares (shares
// non-negative, summing to ~1); ties broken by lower index. Sums to total
// exactly.
std::vector<std::size_t> largest_remainder_apportion(const std::vector<double>& shares,
                                                     std::size_t total);

AdasynPlan adasyn_plan(const FeatureMatrix& x, ClassLabel minority, std::size_t majority_count,
                       const AdasynConfig& cfg);

// One row on the segment [a, b]: a + (b - a) * lambda.
std::vector<float> interpolate_row(std::span<const float> a, std::span<const float> b,
                                   double lambda);

struct SyntheticRows {
    FeatureMatrix rows;
    // source row and interpolation partner per synthetic row
    std::vector<std::pair<std::size_t, std::size_t>> parents;
    // minority samples that had no same-class partner anywhere and were
    // duplicated verbatim (parent pair degenerates to (i, i))
    std::size_t lone_duplicates = 0;
};

// Generates plan.counts[i] synthetic rows per minority sample. Each row picks
// a same-class partner uniformly from the sample's k-neighborhood (falling
// back to the nearest minority row) and a lambda uniform in [0,1). One random
// stream per minority sample (stream id = seed xor row index), so generation
// order never changes the output.
SyntheticRows adasyn_generate(const FeatureMatrix& x, const AdasynPlan& plan,
                              const AdasynConfig& cfg);

struct BalanceResult {
    FeatureMatrix balanced;          // original rows followed by synthetic rows
    std::size_t synthesized = 0;
    std::size_t lone_duplicates = 0;
    bool k_clamped = false;
};

// Oversamples every non-largest class toward the largest class count.
BalanceResult balance_multiclass(const FeatureMatrix& x, const AdasynConfig& cfg);

// Volume <-> feature-row conversion used by the dataset-level balancing.
FeatureMatrix dataset_features(const Dataset& dataset, Modality modality);
Volume row_as_volume(std::span<const float> row, std::uint32_t depth, std::uint32_t height,
                     std::uint32_t width);

} // namespace pdfuse::adasyn
