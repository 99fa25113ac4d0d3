#pragma once

#include "pdfuse/dataset.hpp"
#include "pdfuse/metrics.hpp"
#include "pdfuse/prob.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace pdfuse::fusion {

// Non-negative weights over N models, normalized to sum 1.
struct FusionWeights {
    std::vector<double> w;

    static FusionWeights normalized(std::vector<double> raw);
    std::size_t size() const { return w.size(); }
};

// Per-model, per-subject probability rows. All models cover the same
// subjects in the same order; accuracies are per-model validation accuracy.
struct EnsembleOutputs {
    std::vector<std::string> model_names;
    std::vector<std::string> subject_ids;
    std::vector<std::vector<ProbVector>> probs; // [model][subject]
    std::vector<double> accuracies;             // may stay empty until computed

    std::size_t model_count() const { return probs.size(); }
    std::size_t subject_count() const { return subject_ids.size(); }
    void validate() const;
    std::vector<ProbVector> subject_probs(std::size_t subject) const;
    EnsembleOutputs subset(const std::vector<std::size_t>& model_indices) const;
};

struct GridSearchConfig {
    double radius = 0.05;
    double step = 0.01;
};

// PF_j = sum_i w_i * p_ij, renormalized.
ProbVector fuse(const FusionWeights& w, const std::vector<ProbVector>& probs);
ClassLabel fused_label(const FusionWeights& w, const std::vector<ProbVector>& probs);

// Plurality of per-model argmax votes; vote ties broken by the larger summed
// probability of the tied classes across models, then by lowest class code.
ClassLabel majority_vote(const std::vector<ProbVector>& probs);

// w_i = a_i / sum(a); errors when all accuracies are zero.
FusionWeights accuracy_weights(const std::vector<double>& accuracies);
ProbVector model_average(const std::vector<ProbVector>& probs,
                         const std::vector<double>& accuracies);

// Modulated rank averaging. Models are sorted by accuracy descending (stable,
// lower input index first) and ranked N..1. The best model's numerator is
// R_max = N; every other sorted position p >= 2 contributes
// f_p = R_p + (a_{p-1} - a_p). Weights are the numerators over
// sum(f_p) + R_max, reported in input order.
FusionWeights mra_weights(const std::vector<double>& accuracies);

double fused_accuracy(const FusionWeights& w, const EnsembleOutputs& ensemble,
                      const std::vector<ClassLabel>& labels);

struct OwafResult {
    FusionWeights weights;
    double accuracy = 0.0;        // fused accuracy of the winner on the ensemble
    std::size_t candidates = 0;   // grid points enumerated
    std::vector<double> offsets;  // winning offset tuple
};

// Exhaustive grid over per-weight offsets {-radius..+radius} in steps of
// `step`; candidates are clamped at 0 and renormalized, scored by fused
// accuracy. Ties go to the smallest Euclidean distance from the initial
// weights, then the lexicographically smallest offset tuple.
OwafResult owaf_search(const FusionWeights& initial, const EnsembleOutputs& validation,
                       const std::vector<ClassLabel>& labels, const GridSearchConfig& cfg);

struct FusionReport {
    struct Row {
        std::string name;
        std::vector<ClassLabel> predictions;
        eval::MetricsReport metrics;
    };
    std::vector<Row> rows; // vote, avg, mra, owaf
};

// Applies all four strategies to the same test outputs. The model-average and
// MRA weights derive from ensemble.accuracies; the OWAF weights are supplied
// by the caller (tuned elsewhere, never on test data).
FusionReport fusion_report(const EnsembleOutputs& test, const std::vector<ClassLabel>& labels,
                           const FusionWeights& mra, const FusionWeights& owaf);

// Interchange CSV: subject_id,model,p_hc,p_pd,p_swedd with six-decimal
// probabilities. Models and subjects keep first-appearance order.
EnsembleOutputs read_ensemble_csv(const std::filesystem::path& path);
void write_ensemble_csv(const EnsembleOutputs& ensemble, const std::filesystem::path& path);

// Labels CSV: subject_id,label. Returned aligned to subject_ids; errors on a
// missing subject.
std::vector<ClassLabel> read_labels_csv(const std::filesystem::path& path,
                                        const std::vector<std::string>& subject_ids);
void write_labels_csv(const std::vector<std::string>& subject_ids,
                      const std::vector<ClassLabel>& labels, const std::filesystem::path& path);

} // namespace pdfuse::fusion
