#include "pdfuse/experiment.hpp"

#include "pdfuse/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace pdfuse::eval {

namespace {

template <class F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

int to_int(const std::string& v, const std::string& key) {
    try {
        return std::stoi(v);
    } catch (...) {
        throw ConfigError("config key " + key + " expects an integer, got \"" + v + "\"");
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        return std::stod(v);
    } catch (...) {
        throw ConfigError("config key " + key + " expects a number, got \"" + v + "\"");
    }
}

std::uint64_t to_u64(const std::string& v, const std::string& key) {
    try {
        return std::stoull(v);
    } catch (...) {
        throw ConfigError("config key " + key + " expects an unsigned integer, got \"" + v + "\"");
    }
}

} // namespace

ExperimentConfig parse_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open experiment config: " + path.string());
    }
    ExperimentConfig cfg;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + " is not key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;

        if (section == "dataset") {
            if (key == "source") {
                if (value == "synth") {
                    cfg.use_synth = true;
                } else if (value == "manifest") {
                    cfg.use_synth = false;
                } else {
                    throw ConfigError("dataset.source must be synth or manifest");
                }
            } else if (key == "manifest") {
                cfg.manifest = value;
            } else if (key == "per_class") {
                cfg.synth.per_class = to_int(value, qual);
            } else if (key == "dims") {
                std::uint32_t d[3];
                std::istringstream ss(value);
                std::string tok;
                int got = 0;
                while (std::getline(ss, tok, ',') && got < 3) {
                    d[got++] = static_cast<std::uint32_t>(to_int(trim(tok), qual));
                }
                if (got != 3) {
                    throw ConfigError("dataset.dims expects D,H,W");
                }
                cfg.synth.depth = d[0];
                cfg.synth.height = d[1];
                cfg.synth.width = d[2];
            } else if (key == "noise") {
                cfg.synth.noise_scale = to_double(value, qual);
            } else if (key == "amplitude") {
                cfg.synth.template_amplitude = to_double(value, qual);
            } else if (key == "seed") {
                cfg.synth.seed = to_u64(value, qual);
            } else {
                throw ConfigError("unknown config key: " + qual);
            }
        } else if (section == "split") {
            if (key == "train_fraction") {
                cfg.split.train_fraction = to_double(value, qual);
            } else if (key == "seed") {
                cfg.split.seed = to_u64(value, qual);
            } else if (key == "val_fraction") {
                cfg.val_fraction = to_double(value, qual);
            } else {
                throw ConfigError("unknown config key: " + qual);
            }
        } else if (section == "adasyn") {
            if (key == "k") {
                cfg.adasyn.k = to_int(value, qual);
            } else if (key == "beta") {
                cfg.adasyn.beta = to_double(value, qual);
            } else if (key == "seed") {
                cfg.adasyn.seed = to_u64(value, qual);
            } else {
                throw ConfigError("unknown config key: " + qual);
            }
        } else if (section == "cnn") {
            if (key == "spec") {
                cfg.spec_path = value;
            } else if (key == "epochs") {
                cfg.train.epochs = to_int(value, qual);
            } else if (key == "batch") {
                cfg.train.batch_size = to_int(value, qual);
            } else if (key == "lr") {
                cfg.train.learning_rate = to_double(value, qual);
            } else if (key == "seed") {
                cfg.train.seed = to_u64(value, qual);
            } else {
                throw ConfigError("unknown config key: " + qual);
            }
        } else if (section == "owaf") {
            if (key == "radius") {
                cfg.grid.radius = to_double(value, qual);
            } else if (key == "step") {
                cfg.grid.step = to_double(value, qual);
            } else {
                throw ConfigError("unknown config key: " + qual);
            }
        } else if (section == "output") {
            if (key == "dir") {
                cfg.out_dir = value;
            } else {
                throw ConfigError("unknown config key: " + qual);
            }
        } else {
            throw ConfigError("unknown config section: [" + section + "]");
        }
    }

    if (!cfg.use_synth && cfg.manifest.empty()) {
        throw ConfigError("dataset.source=manifest requires dataset.manifest");
    }
    if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) {
        throw ConfigError("split.val_fraction must lie strictly between 0 and 1");
    }
    if (cfg.out_dir.empty()) {
        throw ConfigError("output.dir must not be empty");
    }
    return cfg;
}

MetricsReport modality_subset_fusion(const fusion::EnsembleOutputs& validation,
                                     const std::vector<ClassLabel>& val_labels,
                                     const fusion::EnsembleOutputs& test,
                                     const std::vector<ClassLabel>& test_labels,
                                     const std::vector<std::size_t>& model_indices,
                                     const fusion::GridSearchConfig& grid) {
    const auto val_sub = validation.subset(model_indices);
    const auto test_sub = test.subset(model_indices);
    fusion::FusionWeights w = fusion::FusionWeights::normalized(
        std::vector<double>(model_indices.size(), 1.0 / model_indices.size()));
    if (model_indices.size() > 1) {
        const auto mra = fusion::mra_weights(val_sub.accuracies);
        w = fusion::owaf_search(mra, val_sub, val_labels, grid).weights;
    }
    std::vector<ClassLabel> predictions;
    predictions.reserve(test_labels.size());
    for (std::size_t s = 0; s < test_labels.size(); ++s) {
        predictions.push_back(fusion::fused_label(w, test_sub.subject_probs(s)));
    }
    return metrics(confusion(test_labels, predictions));
}

namespace {

struct ModalityData {
    std::vector<cnn::LabeledSlice> slices;
    std::size_t synthesized = 0;
};

fusion::EnsembleOutputs make_ensemble(const Dataset& subjects, const cnn::NetworkSpec& spec,
                                      const std::array<cnn::Parameters, kNumModalities>& params) {
    fusion::EnsembleOutputs ens;
    for (Modality m : all_modalities()) ens.model_names.push_back(to_string(m));
    for (const Subject& s : subjects.subjects) ens.subject_ids.push_back(s.subject_id);
    ens.probs.resize(kNumModalities);
    for (Modality m : all_modalities()) {
        const int mi = static_cast<int>(m);
        ens.probs[mi].reserve(subjects.subjects.size());
        for (const Subject& s : subjects.subjects) {
            ens.probs[mi].push_back(cnn::predict_subject(spec, params[mi], s.volumes.at(m)));
        }
    }
    return ens;
}

std::vector<ClassLabel> dataset_labels(const Dataset& d) {
    std::vector<ClassLabel> labels;
    labels.reserve(d.subjects.size());
    for (const Subject& s : d.subjects) labels.push_back(s.label);
    return labels;
}

void append_metrics_line(std::ostringstream& out, const std::string& name,
                         const MetricsReport& m) {
    out << "  " << std::left << std::setw(16) << name << std::right << std::fixed
        << std::setprecision(6) << std::setw(10) << m.accuracy << std::setw(11) << m.precision
        << std::setw(10) << m.recall << std::setw(10) << m.f1 << '\n';
}

void write_weights_csv(const fusion::FusionWeights& w,
                       const std::vector<std::string>& model_names,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open weights file for writing: " + path.string());
    }
    out << "model,weight\n" << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < w.size(); ++i) {
        out << model_names[i] << ',' << w.w[i] << '\n';
    }
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) {
        throw ConfigError("cannot create output directory: " + cfg.out_dir.string());
    }

    try {
        // dataset
        Dataset dataset = stage("dataset", [&] {
            return cfg.use_synth ? synth_generate(cfg.synth) : load_dataset(cfg.manifest);
        });

        // split: train/test, then validation carved out of train
        auto [train_set, test_set] = stage("split", [&] {
            return split_train_test(dataset, cfg.split);
        });
        auto [fit_set, val_set] = stage("split", [&] {
            return split_train_test(train_set,
                                    SplitSpec{1.0 - cfg.val_fraction, mix_seed(cfg.split.seed, 0x5a11)});
        });

        if (fit_set.subjects.empty() || fit_set.subjects.front().volumes.empty()) {
            throw StageError("split", "no training subjects left after carving validation");
        }
        const Volume& probe = fit_set.subjects.front().volumes.begin()->second;
        cnn::NetworkSpec spec = stage("config", [&] {
            cnn::NetworkSpec s = cfg.spec_path.empty()
                                     ? cnn::desk_spec(static_cast<int>(probe.height),
                                                      static_cast<int>(probe.width))
                                     : cnn::load_spec(cfg.spec_path);
            s.validate();
            return s;
        });

        // adasyn per modality, same seed so the streams stay subject-aligned
        std::array<ModalityData, kNumModalities> streams;
        stage("adasyn", [&] {
            for (Modality m : all_modalities()) {
                const auto features = adasyn::dataset_features(fit_set, m);
                const auto balanced = adasyn::balance_multiclass(features, cfg.adasyn);
                auto& md = streams[static_cast<int>(m)];
                md.synthesized = balanced.synthesized;
                const std::size_t plane = static_cast<std::size_t>(probe.height) * probe.width;
                const std::size_t slices_per_row = probe.depth;
                md.slices.reserve(balanced.balanced.rows * slices_per_row);
                for (std::size_t r = 0; r < balanced.balanced.rows; ++r) {
                    const auto row = balanced.balanced.row(r);
                    for (std::size_t z = 0; z < slices_per_row; ++z) {
                        cnn::LabeledSlice s;
                        s.label = balanced.balanced.labels[r];
                        s.pixels.assign(row.begin() + z * plane, row.begin() + (z + 1) * plane);
                        md.slices.push_back(std::move(s));
                    }
                }
            }
            return 0;
        });

        // train the four models; independent tasks on a small pool
        std::array<cnn::TrainResult, kNumModalities> trained;
        stage("train", [&] {
            std::atomic<std::size_t> next{0};
            std::array<std::exception_ptr, kNumModalities> errors{};
            auto worker = [&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= kNumModalities) break;
                    try {
                        cnn::TrainConfig tc = cfg.train;
                        tc.seed = mix_seed(cfg.train.seed, i);
                        trained[i] = cnn::train(spec, streams[i].slices, tc);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            };
            const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
            const std::size_t n_workers = std::min<std::size_t>(kNumModalities, hw);
            std::vector<std::thread> pool;
            for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
            for (const auto& e : errors) {
                if (e) std::rethrow_exception(e);
            }
            return 0;
        });

        std::array<cnn::Parameters, kNumModalities> params;
        for (int i = 0; i < kNumModalities; ++i) params[i] = trained[i].params;

        // per-subject probabilities on validation and test
        const std::vector<ClassLabel> val_labels = dataset_labels(val_set);
        const std::vector<ClassLabel> test_labels = dataset_labels(test_set);
        fusion::EnsembleOutputs val_ens, test_ens;
        stage("evaluate", [&] {
            val_ens = make_ensemble(val_set, spec, params);
            test_ens = make_ensemble(test_set, spec, params);
            for (Modality m : all_modalities()) {
                const int mi = static_cast<int>(m);
                std::size_t correct = 0;
                for (std::size_t s = 0; s < val_labels.size(); ++s) {
                    if (val_ens.probs[mi][s].argmax() == val_labels[s]) correct++;
                }
                const double acc = static_cast<double>(correct) /
                                   static_cast<double>(val_labels.size());
                val_ens.accuracies.push_back(acc);
                test_ens.accuracies.push_back(acc);
            }
            return 0;
        });

        ExperimentResult result;
        stage("fusion", [&] {
            result.mra_weights = fusion::mra_weights(val_ens.accuracies);
            const auto owaf = fusion::owaf_search(result.mra_weights, val_ens, val_labels, cfg.grid);
            result.owaf_weights = owaf.weights;

            const auto report = fusion::fusion_report(test_ens, test_labels, result.mra_weights,
                                                      result.owaf_weights);
            for (const auto& row : report.rows) {
                result.strategy_rows.push_back({row.name, row.metrics});
            }
            return 0;
        });

        stage("tables", [&] {
            // single modalities in the WM, GM, MD, FA presentation order
            const std::array<Modality, kNumModalities> order = {Modality::WM, Modality::GM,
                                                                Modality::MD, Modality::FA};
            for (Modality m : order) {
                const int mi = static_cast<int>(m);
                std::vector<ClassLabel> preds;
                preds.reserve(test_labels.size());
                for (const ProbVector& p : test_ens.probs[mi]) preds.push_back(p.argmax());
                result.modality_rows.push_back(
                    {to_string(m), metrics(confusion(test_labels, preds))});
            }
            result.modality_rows.push_back(
                {"WM+GM", modality_subset_fusion(val_ens, val_labels, test_ens, test_labels,
                                                 {static_cast<std::size_t>(Modality::GM),
                                                  static_cast<std::size_t>(Modality::WM)},
                                                 cfg.grid)});
            result.modality_rows.push_back(
                {"FA+MD", modality_subset_fusion(val_ens, val_labels, test_ens, test_labels,
                                                 {static_cast<std::size_t>(Modality::FA),
                                                  static_cast<std::size_t>(Modality::MD)},
                                                 cfg.grid)});
            // all four; must reproduce the strategy table's owaf row
            result.modality_rows.push_back(
                {"ALL (owaf)", modality_subset_fusion(val_ens, val_labels, test_ens, test_labels,
                                                      {0, 1, 2, 3}, cfg.grid)});
            return 0;
        });

        stage("report", [&] {
            std::ostringstream body;
            body << "pdfuse experiment report\n";
            body << "========================\n\n";
            body << "config:\n";
            if (cfg.use_synth) {
                body << "  dataset.source = synth\n";
                body << "  dataset.per_class = " << cfg.synth.per_class << '\n';
                body << "  dataset.dims = " << cfg.synth.depth << ',' << cfg.synth.height << ','
                     << cfg.synth.width << '\n';
                body << "  dataset.amplitude = " << cfg.synth.template_amplitude << '\n';
                body << "  dataset.noise = " << cfg.synth.noise_scale << '\n';
                body << "  dataset.seed = " << cfg.synth.seed << '\n';
            } else {
                body << "  dataset.source = manifest\n";
                body << "  dataset.manifest = " << cfg.manifest.string() << '\n';
            }
            body << "  split.train_fraction = " << cfg.split.train_fraction << '\n';
            body << "  split.val_fraction = " << cfg.val_fraction << '\n';
            body << "  split.seed = " << cfg.split.seed << '\n';
            body << "  adasyn.k = " << cfg.adasyn.k << '\n';
            body << "  adasyn.beta = " << cfg.adasyn.beta << '\n';
            body << "  adasyn.seed = " << cfg.adasyn.seed << '\n';
            body << "  cnn.spec = " << (cfg.spec_path.empty() ? "desk" : cfg.spec_path.string())
                 << '\n';
            body << "  cnn.epochs = " << cfg.train.epochs << '\n';
            body << "  cnn.batch = " << cfg.train.batch_size << '\n';
            body << "  cnn.lr = " << cfg.train.learning_rate << '\n';
            body << "  cnn.seed = " << cfg.train.seed << '\n';
            body << "  owaf.radius = " << cfg.grid.radius << '\n';
            body << "  owaf.step = " << cfg.grid.step << '\n';
            body << "\ncounts:\n";
            body << "  subjects = " << dataset.subjects.size() << '\n';
            body << "  train = " << train_set.subjects.size() << " (fit " << fit_set.subjects.size()
                 << ", val " << val_set.subjects.size() << ")\n";
            body << "  test = " << test_set.subjects.size() << '\n';
            body << "  adasyn_synthesized = " << streams[0].synthesized << ','
                 << streams[1].synthesized << ',' << streams[2].synthesized << ','
                 << streams[3].synthesized << '\n';
            body << "\nvalidation accuracy per model:\n" << std::fixed << std::setprecision(6);
            for (Modality m : all_modalities()) {
                body << "  " << to_string(m) << " = "
                     << val_ens.accuracies[static_cast<int>(m)] << '\n';
            }

            std::ostringstream table;
            table << "\nmodalities (test split):\n";
            table << "  data              accuracy  precision    recall        f1\n";
            for (const TableRow& row : result.modality_rows) {
                append_metrics_line(table, row.name, row.m);
            }
            table << "\nfusion strategies (test split):\n";
            table << "  strategy          accuracy  precision    recall        f1\n";
            for (const TableRow& row : result.strategy_rows) {
                append_metrics_line(table, row.name, row.m);
            }
            body << table.str();
            result.report_body = body.str();

            result.report_txt = cfg.out_dir / "report.txt";
            std::ofstream txt(result.report_txt, std::ios::trunc);
            txt << result.report_body;
            if (!txt) throw std::runtime_error("cannot write report.txt");

            result.report_csv = cfg.out_dir / "report.csv";
            std::ofstream csv(result.report_csv, std::ios::trunc);
            csv << "section,name,accuracy,precision,recall,f1\n"
                << std::fixed << std::setprecision(6);
            for (const TableRow& row : result.modality_rows) {
                csv << "modalities," << row.name << ',' << row.m.accuracy << ',' << row.m.precision
                    << ',' << row.m.recall << ',' << row.m.f1 << '\n';
            }
            for (const TableRow& row : result.strategy_rows) {
                csv << "strategies," << row.name << ',' << row.m.accuracy << ',' << row.m.precision
                    << ',' << row.m.recall << ',' << row.m.f1 << '\n';
            }
            if (!csv) throw std::runtime_error("cannot write report.csv");

            write_weights_csv(result.mra_weights, val_ens.model_names,
                              cfg.out_dir / "weights_mra.csv");
            write_weights_csv(result.owaf_weights, val_ens.model_names,
                              cfg.out_dir / "weights_owaf.csv");

            fusion::write_ensemble_csv(val_ens, cfg.out_dir / "ensemble_val.csv");
            fusion::write_ensemble_csv(test_ens, cfg.out_dir / "ensemble_test.csv");
            fusion::write_labels_csv(val_ens.subject_ids, val_labels,
                                     cfg.out_dir / "labels_val.csv");
            fusion::write_labels_csv(test_ens.subject_ids, test_labels,
                                     cfg.out_dir / "labels_test.csv");

            for (Modality m : all_modalities()) {
                cnn::save_checkpoint(params[static_cast<int>(m)], spec,
                                     cfg.out_dir / (std::string("model_") + to_string(m) + ".cnn1"));
            }
            return 0;
        });

        return result;
    } catch (const StageError& e) {
        std::ofstream out(cfg.out_dir / "report.txt", std::ios::trunc);
        out << "pdfuse experiment report\n========================\n\nerror: " << e.what() << '\n';
        throw;
    }
}

} // namespace pdfuse::eval
