#include "pdfuse/fusion.hpp"

#include "pdfuse/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pdfuse::fusion {

FusionWeights FusionWeights::normalized(std::vector<double> raw) {
    if (raw.empty()) {
        throw std::runtime_error("fusion weights must not be empty");
    }
    double sum = 0.0;
    for (double v : raw) {
        if (!std::isfinite(v) || v < 0.0) {
            throw std::runtime_error("fusion weights must be finite and non-negative");
        }
        sum += v;
    }
    if (sum <= 0.0) {
        throw std::runtime_error("fusion weights must not all be zero");
    }
    for (double& v : raw) v /= sum;
    return FusionWeights{std::move(raw)};
}

void EnsembleOutputs::validate() const {
    if (probs.empty()) {
        throw std::runtime_error("ensemble has no models");
    }
    if (model_names.size() != probs.size()) {
        throw std::runtime_error("ensemble model name count does not match probability rows");
    }
    for (const auto& rows : probs) {
        if (rows.size() != subject_ids.size()) {
            throw std::runtime_error("ensemble models do not cover the same subjects");
        }
    }
    if (!accuracies.empty() && accuracies.size() != probs.size()) {
        throw std::runtime_error("ensemble accuracy count does not match model count");
    }
}

std::vector<ProbVector> EnsembleOutputs::subject_probs(std::size_t subject) const {
    std::vector<ProbVector> out;
    out.reserve(probs.size());
    for (const auto& rows : probs) out.push_back(rows[subject]);
    return out;
}

EnsembleOutputs EnsembleOutputs::subset(const std::vector<std::size_t>& model_indices) const {
    if (model_indices.empty()) {
        throw std::runtime_error("model subset must not be empty");
    }
    EnsembleOutputs out;
    out.subject_ids = subject_ids;
    for (std::size_t i : model_indices) {
        out.model_names.push_back(model_names.at(i));
        out.probs.push_back(probs.at(i));
        if (!accuracies.empty()) out.accuracies.push_back(accuracies.at(i));
    }
    return out;
}

ProbVector fuse(const FusionWeights& w, const std::vector<ProbVector>& probs) {
    if (w.size() != probs.size()) {
        throw std::runtime_error("weight count does not match model count");
    }
    std::array<double, 3> pf{};
    for (std::size_t i = 0; i < probs.size(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) pf[j] += w.w[i] * probs[i][j];
    }
    return {pf[0], pf[1], pf[2]};
}

ClassLabel fused_label(const FusionWeights& w, const std::vector<ProbVector>& probs) {
    return fuse(w, probs).argmax();
}

ClassLabel majority_vote(const std::vector<ProbVector>& probs) {
    if (probs.empty()) {
        throw std::runtime_error("majority vote needs at least one model");
    }
    std::array<int, 3> votes{};
    for (const ProbVector& p : probs) votes[static_cast<int>(p.argmax())]++;
    const int top = *std::max_element(votes.begin(), votes.end());

    std::array<double, 3> summed{};
    for (const ProbVector& p : probs) {
        for (std::size_t j = 0; j < 3; ++j) summed[j] += p[j];
    }

    int winner = -1;
    for (int c = 0; c < 3; ++c) {
        if (votes[c] != top) continue;
        if (winner < 0 || summed[c] > summed[winner]) winner = c;
    }
    return static_cast<ClassLabel>(winner);
}

FusionWeights accuracy_weights(const std::vector<double>& accuracies) {
    return FusionWeights::normalized(accuracies);
}

ProbVector model_average(const std::vector<ProbVector>& probs,
                         const std::vector<double>& accuracies) {
    return fuse(accuracy_weights(accuracies), probs);
}

FusionWeights mra_weights(const std::vector<double>& accuracies) {
    const std::size_t n = accuracies.size();
    if (n < 2) {
        throw std::runtime_error("modulated rank averaging needs at least 2 models");
    }
    for (double a : accuracies) {
        if (!std::isfinite(a) || a < 0.0 || a > 1.0) {
            throw std::runtime_error("model accuracies must lie in [0, 1]");
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&accuracies](std::size_t a, std::size_t b) {
        return accuracies[a] > accuracies[b];
    });

    // numerators: R_max for the best model, rank + accuracy gap below it
    std::vector<double> numerator(n, 0.0);
    numerator[order[0]] = static_cast<double>(n);
    double denom = static_cast<double>(n);
    for (std::size_t p = 1; p < n; ++p) {
        const double rank = static_cast<double>(n - p);
        const double gap = accuracies[order[p - 1]] - accuracies[order[p]];
        numerator[order[p]] = rank + gap;
        denom += rank + gap;
    }
    for (double& v : numerator) v /= denom;
    return FusionWeights{std::move(numerator)};
}

double fused_accuracy(const FusionWeights& w, const EnsembleOutputs& ensemble,
                      const std::vector<ClassLabel>& labels) {
    ensemble.validate();
    if (labels.size() != ensemble.subject_count()) {
        throw std::runtime_error("label count does not match ensemble subjects");
    }
    if (labels.empty()) {
        throw std::runtime_error("cannot score an empty subject set");
    }
    std::size_t correct = 0;
    for (std::size_t s = 0; s < labels.size(); ++s) {
        if (fused_label(w, ensemble.subject_probs(s)) == labels[s]) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

OwafResult owaf_search(const FusionWeights& initial, const EnsembleOutputs& validation,
                       const std::vector<ClassLabel>& labels, const GridSearchConfig& cfg) {
    validation.validate();
    if (labels.size() != validation.subject_count() || labels.empty()) {
        throw std::runtime_error("grid search needs a nonempty labeled validation set");
    }
    if (!(cfg.step > 0.0 && cfg.step <= cfg.radius)) {
        throw std::runtime_error("grid step must satisfy 0 < step <= radius");
    }
    const std::size_t n_models = initial.size();
    if (n_models != validation.model_count()) {
        throw std::runtime_error("initial weight count does not match model count");
    }

    const int half = static_cast<int>(std::llround(cfg.radius / cfg.step));
    const int per_weight = 2 * half + 1;

    // cache each subject's per-model probability rows
    std::vector<std::vector<ProbVector>> rows(validation.subject_count());
    for (std::size_t s = 0; s < rows.size(); ++s) rows[s] = validation.subject_probs(s);

    OwafResult best;
    bool have_best = false;
    double best_dist2 = 0.0;

    std::vector<int> odo(n_models, 0); // 0..per_weight-1, lexicographic
    std::vector<double> offsets(n_models, 0.0);
    std::vector<double> cand(n_models, 0.0);
    std::size_t enumerated = 0;

    while (true) {
        enumerated++;
        double sum = 0.0;
        for (std::size_t i = 0; i < n_models; ++i) {
            offsets[i] = static_cast<double>(odo[i] - half) * cfg.step;
            cand[i] = std::max(0.0, initial.w[i] + offsets[i]);
            sum += cand[i];
        }
        if (sum > 0.0) {
            FusionWeights w = FusionWeights::normalized(cand);
            std::size_t correct = 0;
            for (std::size_t s = 0; s < rows.size(); ++s) {
                if (fused_label(w, rows[s]) == labels[s]) correct++;
            }
            const double acc = static_cast<double>(correct) / static_cast<double>(rows.size());
            double dist2 = 0.0;
            for (std::size_t i = 0; i < n_models; ++i) {
                const double d = w.w[i] - initial.w[i];
                dist2 += d * d;
            }
            const bool better = !have_best || acc > best.accuracy ||
                                (acc == best.accuracy && dist2 < best_dist2);
            if (better) {
                have_best = true;
                best.weights = std::move(w);
                best.accuracy = acc;
                best.offsets = offsets;
                best_dist2 = dist2;
            }
        }
        // advance odometer, most significant digit first for lexicographic order
        std::size_t d = n_models;
        while (d > 0) {
            if (++odo[d - 1] < per_weight) break;
            odo[d - 1] = 0;
            --d;
        }
        if (d == 0) break;
    }

    best.candidates = enumerated;
    if (!have_best) {
        throw std::runtime_error("grid search found no scoreable candidate");
    }
    const double initial_acc = fused_accuracy(initial, validation, labels);
    if (best.accuracy < initial_acc) {
        throw std::logic_error("grid search returned worse accuracy than its starting point");
    }
    return best;
}

FusionReport fusion_report(const EnsembleOutputs& test, const std::vector<ClassLabel>& labels,
                           const FusionWeights& mra, const FusionWeights& owaf) {
    test.validate();
    if (labels.size() != test.subject_count()) {
        throw std::runtime_error("label count does not match ensemble subjects");
    }

    const FusionWeights avg = accuracy_weights(test.accuracies);
    FusionReport report;
    report.rows.resize(4);
    report.rows[0].name = "majority_vote";
    report.rows[1].name = "model_average";
    report.rows[2].name = "mra";
    report.rows[3].name = "owaf";
    for (std::size_t s = 0; s < test.subject_count(); ++s) {
        const auto rows = test.subject_probs(s);
        report.rows[0].predictions.push_back(majority_vote(rows));
        report.rows[1].predictions.push_back(fused_label(avg, rows));
        report.rows[2].predictions.push_back(fused_label(mra, rows));
        report.rows[3].predictions.push_back(fused_label(owaf, rows));
    }
    for (auto& row : report.rows) {
        row.metrics = eval::metrics(eval::confusion(labels, row.predictions));
    }
    return report;
}

EnsembleOutputs read_ensemble_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open ensemble file: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) ||
        split_csv_line(line) !=
            std::vector<std::string>{"subject_id", "model", "p_hc", "p_pd", "p_swedd"}) {
        throw std::runtime_error("ensemble header must be subject_id,model,p_hc,p_pd,p_swedd");
    }

    EnsembleOutputs out;
    std::map<std::string, std::size_t> model_index;
    std::map<std::string, std::size_t> subject_index;
    struct Cell {
        bool filled = false;
        ProbVector p;
    };
    std::vector<std::vector<Cell>> cells; // [model][subject]

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 5) {
            throw std::runtime_error("ensemble line " + std::to_string(line_no) +
                                     ": expected 5 fields");
        }
        const auto [sit, snew] = subject_index.try_emplace(fields[0], out.subject_ids.size());
        if (snew) {
            out.subject_ids.push_back(fields[0]);
            for (auto& row : cells) row.emplace_back();
        }
        const auto [mit, mnew] = model_index.try_emplace(fields[1], out.model_names.size());
        if (mnew) {
            out.model_names.push_back(fields[1]);
            cells.emplace_back(out.subject_ids.size());
        }
        Cell& cell = cells[mit->second][sit->second];
        if (cell.filled) {
            throw std::runtime_error("duplicate ensemble row for (" + fields[0] + ", " +
                                     fields[1] + ")");
        }
        cell.filled = true;
        cell.p = ProbVector(std::stod(fields[2]), std::stod(fields[3]), std::stod(fields[4]));
    }

    out.probs.resize(cells.size());
    for (std::size_t m = 0; m < cells.size(); ++m) {
        out.probs[m].reserve(out.subject_ids.size());
        for (std::size_t s = 0; s < out.subject_ids.size(); ++s) {
            if (!cells[m][s].filled) {
                throw std::runtime_error("ensemble is missing a row for (" + out.subject_ids[s] +
                                         ", " + out.model_names[m] + ")");
            }
            out.probs[m].push_back(cells[m][s].p);
        }
    }
    out.validate();
    return out;
}

void write_ensemble_csv(const EnsembleOutputs& ensemble, const std::filesystem::path& path) {
    ensemble.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open ensemble file for writing: " + path.string());
    }
    out << "subject_id,model,p_hc,p_pd,p_swedd\n";
    out << std::fixed << std::setprecision(6);
    for (std::size_t m = 0; m < ensemble.model_count(); ++m) {
        for (std::size_t s = 0; s < ensemble.subject_count(); ++s) {
            const ProbVector& p = ensemble.probs[m][s];
            out << ensemble.subject_ids[s] << ',' << ensemble.model_names[m] << ',' << p[0] << ','
                << p[1] << ',' << p[2] << '\n';
        }
    }
    if (!out) {
        throw std::runtime_error("write failed for ensemble file: " + path.string());
    }
}

std::vector<ClassLabel> read_labels_csv(const std::filesystem::path& path,
                                        const std::vector<std::string>& subject_ids) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open labels file: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) ||
        split_csv_line(line) != std::vector<std::string>{"subject_id", "label"}) {
        throw std::runtime_error("labels header must be subject_id,label");
    }
    std::map<std::string, ClassLabel> by_id;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) {
            throw std::runtime_error("labels row must have 2 fields");
        }
        if (!by_id.emplace(fields[0], class_label_from_string(fields[1])).second) {
            throw std::runtime_error("duplicate label row for subject " + fields[0]);
        }
    }
    std::vector<ClassLabel> labels;
    labels.reserve(subject_ids.size());
    for (const std::string& id : subject_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw std::runtime_error("no label for subject " + id);
        }
        labels.push_back(it->second);
    }
    return labels;
}

void write_labels_csv(const std::vector<std::string>& subject_ids,
                      const std::vector<ClassLabel>& labels, const std::filesystem::path& path) {
    if (subject_ids.size() != labels.size()) {
        throw std::runtime_error("subject and label counts differ");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open labels file for writing: " + path.string());
    }
    out << "subject_id,label\n";
    for (std::size_t i = 0; i < subject_ids.size(); ++i) {
        out << subject_ids[i] << ',' << to_string(labels[i]) << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed for labels file: " + path.string());
    }
}

} // namespace pdfuse::fusion
