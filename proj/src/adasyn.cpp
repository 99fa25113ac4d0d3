#include "pdfuse/adasyn.hpp"

#include "pdfuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pdfuse::adasyn {

void FeatureMatrix::append_row(std::span<const float> v, ClassLabel label) {
    if (rows == 0 && cols == 0) {
        cols = v.size();
    }
    if (v.size() != cols) {
        throw std::runtime_error("feature row length does not match matrix width");
    }
    values.insert(values.end(), v.begin(), v.end());
    labels.push_back(label);
    rows++;
}

std::array<std::size_t, kNumClasses> FeatureMatrix::class_counts() const {
    std::array<std::size_t, kNumClasses> counts{};
    for (ClassLabel l : labels) counts[static_cast<int>(l)]++;
    return counts;
}

void FeatureMatrix::validate() const {
    if (labels.size() != rows || values.size() != rows * cols) {
        throw std::runtime_error("feature matrix shape is inconsistent");
    }
    for (float f : values) {
        if (!std::isfinite(f)) {
            throw std::runtime_error("feature matrix contains a non-finite value");
        }
    }
}

namespace {

double sq_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

} // namespace

std::vector<std::size_t> knn_indices(const FeatureMatrix& x, std::size_t query_row, int k) {
    if (k < 1) {
        throw std::runtime_error("k must be at least 1");
    }
    if (static_cast<std::size_t>(k) >= x.rows) {
        throw std::runtime_error("k must be smaller than the number of rows");
    }
    const auto q = x.row(query_row);
    std::vector<std::pair<double, std::size_t>> dists;
    dists.reserve(x.rows - 1);
    for (std::size_t i = 0; i < x.rows; ++i) {
        if (i == query_row) continue;
        dists.emplace_back(sq_distance(q, x.row(i)), i);
    }
    std::sort(dists.begin(), dists.end());
    std::vector<std::size_t> out(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = dists[static_cast<std::size_t>(i)].second;
    return out;
}

std::vector<std::size_t> largest_remainder_apportion(const std::vector<double>& shares,
                                                     std::size_t total) {
    const std::size_t n = shares.size();
    std::vector<std::size_t> counts(n, 0);
    std::vector<std::pair<double, std::size_t>> fracs;
    fracs.reserve(n);
    std::size_t base_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = shares[i] * static_cast<double>(total);
        const double base = std::floor(exact);
        counts[i] = static_cast<std::size_t>(base);
        base_sum += counts[i];
        fracs.emplace_back(exact - base, i);
    }
    std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::size_t remainder = (total > base_sum) ? total - base_sum : 0;
    for (const auto& [frac, idx] : fracs) {
        if (remainder == 0) break;
        counts[idx]++;
        remainder--;
    }
    // floating shares can overshoot; trim from the smallest fractions
    std::size_t sum = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    for (auto it = fracs.rbegin(); sum > total && it != fracs.rend(); ++it) {
        if (counts[it->second] > 0) {
            counts[it->second]--;
            sum--;
        }
    }
    return counts;
}

AdasynPlan adasyn_plan(const FeatureMatrix& x, ClassLabel minority, std::size_t majority_count,
                       const AdasynConfig& cfg) {
    x.validate();
    if (!(cfg.beta > 0.0 && cfg.beta <= 1.0)) {
        throw std::runtime_error("beta must be in (0, 1]");
    }
    AdasynPlan plan;
    plan.minority = minority;
    for (std::size_t i = 0; i < x.rows; ++i) {
        if (x.labels[i] == minority) plan.minority_rows.push_back(i);
    }
    const std::size_t m_min = plan.minority_rows.size();
    if (m_min == 0) {
        throw std::runtime_error("minority class has no samples");
    }
    if (m_min > majority_count) {
        throw std::runtime_error("minority class is larger than the majority count");
    }

    plan.k_effective = cfg.k;
    if (static_cast<std::size_t>(cfg.k) >= x.rows) {
        plan.k_effective = static_cast<int>(x.rows) - 1;
        plan.k_clamped = true;
    }
    if (plan.k_effective < 1) {
        throw std::runtime_error("not enough rows for any neighborhood");
    }

    plan.total = static_cast<std::size_t>(
        std::llround(static_cast<double>(majority_count - m_min) * cfg.beta));

    plan.ratio.resize(m_min);
    double ratio_sum = 0.0;
    for (std::size_t p = 0; p < m_min; ++p) {
        const auto neighbors = knn_indices(x, plan.minority_rows[p], plan.k_effective);
        std::size_t foreign = 0;
        for (std::size_t n : neighbors) {
            if (x.labels[n] != minority) foreign++;
        }
        plan.ratio[p] = static_cast<double>(foreign) / static_cast<double>(plan.k_effective);
        ratio_sum += plan.ratio[p];
    }

    plan.ratio_norm.resize(m_min);
    if (ratio_sum > 0.0) {
        for (std::size_t p = 0; p < m_min; ++p) plan.ratio_norm[p] = plan.ratio[p] / ratio_sum;
    } else {
        std::fill(plan.ratio_norm.begin(), plan.ratio_norm.end(), 1.0 / static_cast<double>(m_min));
    }

    plan.counts = largest_remainder_apportion(plan.ratio_norm, plan.total);
    return plan;
}

std::vector<float> interpolate_row(std::span<const float> a, std::span<const float> b,
                                   double lambda) {
    std::vector<float> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ai = a[i];
        out[i] = static_cast<float>(ai + (static_cast<double>(b[i]) - ai) * lambda);
    }
    return out;
}

SyntheticRows adasyn_generate(const FeatureMatrix& x, const AdasynPlan& plan,
                              const AdasynConfig& cfg) {
    SyntheticRows result;
    result.rows.cols = x.cols;

    for (std::size_t p = 0; p < plan.minority_rows.size(); ++p) {
        const std::size_t count = plan.counts[p];
        if (count == 0) continue;
        const std::size_t i = plan.minority_rows[p];

        // same-class partners within the neighborhood, else nearest minority
        std::vector<std::size_t> partners;
        for (std::size_t n : knn_indices(x, i, plan.k_effective)) {
            if (x.labels[n] == plan.minority) partners.push_back(n);
        }
        if (partners.empty()) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_idx = i;
            for (std::size_t j : plan.minority_rows) {
                if (j == i) continue;
                const double d = sq_distance(x.row(i), x.row(j));
                if (d < best) {
                    best = d;
                    best_idx = j;
                }
            }
            if (best_idx != i) partners.push_back(best_idx);
        }

        Rng rng(cfg.seed ^ static_cast<std::uint64_t>(i));
        for (std::size_t j = 0; j < count; ++j) {
            if (partners.empty()) {
                // size-1 minority: nothing to interpolate with
                result.rows.append_row(x.row(i), plan.minority);
                result.parents.emplace_back(i, i);
                result.lone_duplicates++;
                continue;
            }
            const std::size_t z = partners[rng.next_below(partners.size())];
            const double lambda = rng.next_double();
            const auto s = interpolate_row(x.row(i), x.row(z), lambda);
            result.rows.append_row(s, plan.minority);
            result.parents.emplace_back(i, z);
        }
    }
    return result;
}

BalanceResult balance_multiclass(const FeatureMatrix& x, const AdasynConfig& cfg) {
    x.validate();
    const auto counts = x.class_counts();
    int present = 0;
    std::size_t majority = 0;
    for (std::size_t c : counts) {
        if (c > 0) present++;
        majority = std::max(majority, c);
    }
    if (present < 2) {
        throw std::runtime_error("balancing needs at least 2 classes present");
    }

    BalanceResult result;
    result.balanced = x;
    for (ClassLabel label : all_class_labels()) {
        const std::size_t n = counts[static_cast<int>(label)];
        if (n == 0 || n == majority) continue;
        const AdasynPlan plan = adasyn_plan(x, label, majority, cfg);
        result.k_clamped = result.k_clamped || plan.k_clamped;
        const SyntheticRows synth = adasyn_generate(x, plan, cfg);
        result.lone_duplicates += synth.lone_duplicates;
        result.synthesized += synth.rows.rows;
        for (std::size_t r = 0; r < synth.rows.rows; ++r) {
            result.balanced.append_row(synth.rows.row(r), label);
        }
    }
    return result;
}

FeatureMatrix dataset_features(const Dataset& dataset, Modality modality) {
    FeatureMatrix x;
    for (const Subject& s : dataset.subjects) {
        auto it = s.volumes.find(modality);
        if (it == s.volumes.end()) {
            throw std::runtime_error("subject " + s.subject_id + " is missing modality " +
                                     to_string(modality));
        }
        x.append_row(it->second.voxels, s.label);
    }
    return x;
}

Volume row_as_volume(std::span<const float> row, std::uint32_t depth, std::uint32_t height,
                     std::uint32_t width) {
    if (row.size() != static_cast<std::size_t>(depth) * height * width) {
        throw std::runtime_error("feature row length does not match volume dimensions");
    }
    Volume v;
    v.depth = depth;
    v.height = height;
    v.width = width;
    v.voxels.assign(row.begin(), row.end());
    return v;
}

} // namespace pdfuse::adasyn
