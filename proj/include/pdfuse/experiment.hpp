#pragma once

#include "pdfuse/adasyn.hpp"
#include "pdfuse/cnn.hpp"
#include "pdfuse/dataset.hpp"
#include "pdfuse/fusion.hpp"
#include "pdfuse/metrics.hpp"
#include "pdfuse/synth.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdfuse::eval {

// malformed or inconsistent configuration (CLI exit code 1)
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// a pipeline stage failed (CLI exit code 2)
struct StageError : std::runtime_error {
    StageError(std::string stage_name, const std::string& message)
        : std::runtime_error("stage " + stage_name + ": " + message), stage(std::move(stage_name)) {}
    std::string stage;
};

struct ExperimentConfig {
    // [dataset]
    bool use_synth = true;
    std::filesystem::path manifest; // when use_synth is false
    SynthConfig synth;
    // [split]
    SplitSpec split{0.8, 1337};
    double val_fraction = 0.2; // carved from the training side, stratified
    // [adasyn]
    adasyn::AdasynConfig adasyn{5, 1.0, 1337};
    // [cnn]
    std::filesystem::path spec_path; // empty = desk-scale default sized to the data
    cnn::TrainConfig train;
    // [owaf]
    fusion::GridSearchConfig grid;
    // [output]
    std::filesystem::path out_dir = "out";
};

// Text config: key=value lines grouped under [section] headers; # comments.
ExperimentConfig parse_experiment_config(const std::filesystem::path& path);

struct TableRow {
    std::string name;
    MetricsReport m;
};

struct ExperimentResult {
    std::vector<TableRow> modality_rows; // WM, GM, MD, FA, WM+GM, FA+MD, ALL (owaf)
    std::vector<TableRow> strategy_rows; // majority_vote, model_average, mra, owaf
    fusion::FusionWeights mra_weights;
    fusion::FusionWeights owaf_weights;
    std::string report_body; // deterministic; exactly what report.txt contains
    std::filesystem::path report_txt;
    std::filesystem::path report_csv;
};

// Full pipeline: split, ADASYN on the fit portion, four CNNs, per-subject
// probabilities on validation and test, MRA weights from validation
// accuracies, OWAF grid search on validation, all four strategies on test.
// Emits report.txt, report.csv, weight CSVs, ensemble CSVs and checkpoints
// into cfg.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// MRA + OWAF restricted to a model subset (single-model subsets degenerate to
// that model), tuned on validation, evaluated on test.
MetricsReport modality_subset_fusion(const fusion::EnsembleOutputs& validation,
                                     const std::vector<ClassLabel>& val_labels,
                                     const fusion::EnsembleOutputs& test,
                                     const std::vector<ClassLabel>& test_labels,
                                     const std::vector<std::size_t>& model_indices,
                                     const fusion::GridSearchConfig& grid);

} // namespace pdfuse::eval
