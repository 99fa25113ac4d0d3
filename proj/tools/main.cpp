#include "pdfuse/adasyn.hpp"
#include "pdfuse/cnn.hpp"
#include "pdfuse/dataset.hpp"
#include "pdfuse/dti.hpp"
#include "pdfuse/experiment.hpp"
#include "pdfuse/fusion.hpp"
#include "pdfuse/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace {

using namespace pdfuse;

int cmd_synth(const std::string& out_dir, int per_class, const std::string& dims,
              std::uint64_t seed, double noise, double amplitude) {
    eval::SynthConfig cfg;
    cfg.per_class = per_class;
    cfg.seed = seed;
    cfg.noise_scale = noise;
    cfg.template_amplitude = amplitude;
    if (std::sscanf(dims.c_str(), "%u,%u,%u", &cfg.depth, &cfg.height, &cfg.width) != 3) {
        std::cerr << "error: --dims expects D,H,W\n";
        return 1;
    }
    const Dataset dataset = eval::synth_generate(cfg);
    const auto manifest = save_dataset(dataset, out_dir);
    std::cout << "wrote " << dataset.subjects.size() << " subjects to " << manifest.string()
              << "\n";
    return 0;
}

int cmd_adasyn(const std::string& manifest, const std::string& modality_name, double beta, int k,
               std::uint64_t seed, const std::string& out_dir) {
    const Modality modality = modality_from_string(modality_name);
    const Dataset dataset = load_dataset(manifest);
    if (dataset.subjects.empty()) {
        std::cerr << "error: manifest has no subjects\n";
        return 1;
    }
    const Volume& probe = dataset.subjects.front().volumes.begin()->second;

    adasyn::AdasynConfig cfg;
    cfg.beta = beta;
    cfg.k = k;
    cfg.seed = seed;
    const auto features = adasyn::dataset_features(dataset, modality);
    const auto balanced = adasyn::balance_multiclass(features, cfg);

    std::filesystem::create_directories(std::filesystem::path(out_dir) / "volumes");
    const std::filesystem::path manifest_out = std::filesystem::path(out_dir) / "manifest.csv";
    std::ofstream out(manifest_out, std::ios::trunc);
    if (!out) {
        std::cerr << "error: cannot write " << manifest_out.string() << "\n";
        return 1;
    }
    out << "subject_id,label,modality,path\n";

    // the augmented manifest is self-contained: original volumes are copied
    // alongside the synthetic ones
    for (const Subject& s : dataset.subjects) {
        for (const auto& [m, volume] : s.volumes) {
            if (m != modality) continue;
            const std::string rel = "volumes/" + s.subject_id + "_" + to_string(m) + ".vol";
            write_volume(volume, std::filesystem::path(out_dir) / rel);
            out << s.subject_id << ',' << to_string(s.label) << ',' << to_string(m) << ',' << rel
                << '\n';
        }
    }

    // synthetic rows, one volume each
    std::array<int, kNumClasses> counter{};
    for (std::size_t r = features.rows; r < balanced.balanced.rows; ++r) {
        const ClassLabel label = balanced.balanced.labels[r];
        char id[32];
        std::snprintf(id, sizeof(id), "syn_%s_%03d", to_string(label),
                      counter[static_cast<int>(label)]++);
        const Volume v = adasyn::row_as_volume(balanced.balanced.row(r), probe.depth, probe.height,
                                               probe.width);
        const std::string rel = std::string("volumes/") + id + "_" + to_string(modality) + ".vol";
        write_volume(v, std::filesystem::path(out_dir) / rel);
        out << id << ',' << to_string(label) << ',' << to_string(modality) << ',' << rel << '\n';
    }
    std::cout << "synthesized " << balanced.synthesized << " volumes (" << to_string(modality)
              << "), manifest at " << manifest_out.string() << "\n";
    if (balanced.k_clamped) {
        std::cout << "note: k was clamped to sample count - 1\n";
    }
    if (balanced.lone_duplicates > 0) {
        std::cout << "warning: " << balanced.lone_duplicates
                  << " rows duplicated (single-sample minority)\n";
    }
    return 0;
}

int cmd_train(const std::string& manifest, const std::string& modality_name,
              const std::string& spec_path, int epochs, int batch, double lr, std::uint64_t seed,
              const std::string& out_path) {
    const Modality modality = modality_from_string(modality_name);
    const Dataset dataset = load_dataset(manifest);
    if (dataset.subjects.empty()) {
        std::cerr << "error: manifest has no subjects\n";
        return 1;
    }
    const Volume& probe = dataset.subjects.front().volumes.begin()->second;
    const cnn::NetworkSpec spec =
        spec_path.empty()
            ? cnn::desk_spec(static_cast<int>(probe.height), static_cast<int>(probe.width))
            : cnn::load_spec(spec_path);

    std::vector<cnn::LabeledSlice> slices;
    for (const Subject& s : dataset.subjects) {
        auto it = s.volumes.find(modality);
        if (it == s.volumes.end()) {
            std::cerr << "error: subject " << s.subject_id << " lacks modality " << modality_name
                      << "\n";
            return 1;
        }
        auto subject_slices = cnn::labeled_slices(it->second, s.label);
        slices.insert(slices.end(), subject_slices.begin(), subject_slices.end());
    }

    cnn::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    cfg.seed = seed;
    const auto result = cnn::train(spec, slices, cfg);
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        std::cout << "epoch " << (e + 1) << " loss " << std::fixed << std::setprecision(6)
                  << result.history[e].loss << " acc " << result.history[e].accuracy << "\n";
    }
    cnn::save_checkpoint(result.params, spec, out_path);
    std::cout << "checkpoint written to " << out_path << "\n";
    return 0;
}

int cmd_dti(const std::string& tensors, const std::string& out_md, const std::string& out_fa) {
    const std::size_t clamped = dti::convert_tensor_file(tensors, out_md, out_fa);
    std::cout << "wrote " << out_md << " and " << out_fa << "\n";
    if (clamped > 0) {
        std::cout << "note: " << clamped << " voxels had raw FA outside [0,1] and were clamped\n";
    }
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& volume_path) {
    const auto ckpt = cnn::load_checkpoint(checkpoint);
    const Volume v = read_volume(volume_path);
    const ProbVector p = cnn::predict_subject(ckpt.spec, ckpt.params, v);
    std::printf("%.6f %.6f %.6f\n", p[0], p[1], p[2]);
    return 0;
}

int cmd_fuse(const std::string& ensemble_path, const std::string& labels_path,
             const std::string& strategy, double radius, double step,
             const std::string& out_dir) {
    auto ensemble = fusion::read_ensemble_csv(ensemble_path);
    const auto labels = fusion::read_labels_csv(labels_path, ensemble.subject_ids);

    // per-model accuracies on the provided labeled set
    for (std::size_t m = 0; m < ensemble.model_count(); ++m) {
        std::size_t correct = 0;
        for (std::size_t s = 0; s < labels.size(); ++s) {
            if (ensemble.probs[m][s].argmax() == labels[s]) correct++;
        }
        ensemble.accuracies.push_back(static_cast<double>(correct) /
                                      static_cast<double>(labels.size()));
    }

    std::filesystem::create_directories(out_dir);
    fusion::FusionWeights weights;
    std::vector<ClassLabel> predictions;
    predictions.reserve(labels.size());

    if (strategy == "vote") {
        for (std::size_t s = 0; s < labels.size(); ++s) {
            predictions.push_back(fusion::majority_vote(ensemble.subject_probs(s)));
        }
    } else {
        if (strategy == "avg") {
            weights = fusion::accuracy_weights(ensemble.accuracies);
        } else if (strategy == "mra") {
            weights = fusion::mra_weights(ensemble.accuracies);
        } else if (strategy == "owaf") {
            const auto initial = fusion::mra_weights(ensemble.accuracies);
            fusion::GridSearchConfig grid;
            grid.radius = radius;
            grid.step = step;
            weights = fusion::owaf_search(initial, ensemble, labels, grid).weights;
        } else {
            std::cerr << "error: unknown strategy " << strategy << "\n";
            return 1;
        }
        for (std::size_t s = 0; s < labels.size(); ++s) {
            predictions.push_back(fusion::fused_label(weights, ensemble.subject_probs(s)));
        }
        std::ofstream wout(std::filesystem::path(out_dir) / "weights.csv", std::ios::trunc);
        wout << "model,weight\n" << std::fixed << std::setprecision(6);
        for (std::size_t m = 0; m < weights.size(); ++m) {
            wout << ensemble.model_names[m] << ',' << weights.w[m] << '\n';
        }
    }

    std::ofstream pout(std::filesystem::path(out_dir) / "predictions.csv", std::ios::trunc);
    pout << "subject_id,predicted\n";
    for (std::size_t s = 0; s < labels.size(); ++s) {
        pout << ensemble.subject_ids[s] << ',' << to_string(predictions[s]) << '\n';
    }

    const auto m = eval::metrics(eval::confusion(labels, predictions));
    std::cout << std::fixed << std::setprecision(6) << "accuracy " << m.accuracy << " precision "
              << m.precision << " recall " << m.recall << " f1 " << m.f1 << "\n";
    return 0;
}

int cmd_experiment(const std::string& config_path) {
    const auto cfg = eval::parse_experiment_config(config_path);
    const auto result = eval::run_experiment(cfg);
    std::cout << result.report_body;
    std::cout << "report written to " << result.report_txt.string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Three-class multi-modal classification with decision-level fusion"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark dataset");
    std::string synth_out = "synth_data";
    int synth_per_class = 30;
    std::string synth_dims = "16,32,32";
    std::uint64_t synth_seed = 1337;
    double synth_noise = 0.3;
    double synth_amplitude = 1.0;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--per-class", synth_per_class, "Subjects per class");
    synth->add_option("--dims", synth_dims, "Volume dimensions D,H,W");
    synth->add_option("--seed", synth_seed, "Random seed");
    synth->add_option("--noise", synth_noise, "Voxel noise scale");
    synth->add_option("--amplitude", synth_amplitude, "Template amplitude");

    // adasyn
    auto* ada = app.add_subcommand("adasyn", "Balance one modality with ADASYN oversampling");
    std::string ada_manifest, ada_modality, ada_out;
    double ada_beta = 1.0;
    int ada_k = 5;
    std::uint64_t ada_seed = 0;
    ada->add_option("--manifest", ada_manifest, "Dataset manifest CSV")->required();
    ada->add_option("--modality", ada_modality, "GM, WM, FA or MD")->required();
    ada->add_option("--beta", ada_beta, "Balance level in (0,1]");
    ada->add_option("--k", ada_k, "Neighbor count");
    ada->add_option("--seed", ada_seed, "Random seed");
    ada->add_option("--out", ada_out, "Output directory")->required();

    // dti
    auto* dti_cmd = app.add_subcommand("dti", "Compute MD and FA scalar maps from a tensor volume");
    std::string dti_tensors, dti_md = "md.vol", dti_fa = "fa.vol";
    dti_cmd->add_option("--tensors", dti_tensors, "TEN1 tensor volume")->required();
    dti_cmd->add_option("--out-md", dti_md, "Output MD volume (VOL1)");
    dti_cmd->add_option("--out-fa", dti_fa, "Output FA volume (VOL1)");

    // train
    auto* train = app.add_subcommand("train", "Train one modality classifier");
    std::string train_manifest, train_modality, train_spec, train_out = "model.cnn1";
    int train_epochs = 100;
    int train_batch = 32;
    double train_lr = 1e-4;
    std::uint64_t train_seed = 0;
    train->add_option("--manifest", train_manifest, "Dataset manifest CSV")->required();
    train->add_option("--modality", train_modality, "GM, WM, FA or MD")->required();
    train->add_option("--spec", train_spec, "Network spec file (default: desk-scale)");
    train->add_option("--epochs", train_epochs, "Training epochs");
    train->add_option("--batch", train_batch, "Batch size");
    train->add_option("--lr", train_lr, "Learning rate");
    train->add_option("--seed", train_seed, "Random seed");
    train->add_option("--out", train_out, "Checkpoint output path");

    // predict
    auto* predict = app.add_subcommand("predict", "Classify one volume");
    std::string pred_checkpoint, pred_volume;
    predict->add_option("--checkpoint", pred_checkpoint, "CNN1 checkpoint")->required();
    predict->add_option("--volume", pred_volume, "VOL1 volume")->required();

    // fuse
    auto* fuse = app.add_subcommand("fuse", "Fuse ensemble outputs at the decision level");
    std::string fuse_ensemble, fuse_labels, fuse_strategy, fuse_out = ".";
    double fuse_radius = 0.05;
    double fuse_step = 0.01;
    std::uint64_t fuse_seed = 0;
    fuse->add_option("--ensemble", fuse_ensemble, "Ensemble outputs CSV")->required();
    fuse->add_option("--labels", fuse_labels, "Labels CSV")->required();
    fuse->add_option("--strategy", fuse_strategy, "vote, avg, mra or owaf")->required();
    fuse->add_option("--radius", fuse_radius, "OWAF grid radius");
    fuse->add_option("--step", fuse_step, "OWAF grid step");
    fuse->add_option("--seed", fuse_seed, "Reserved; fusion is deterministic");
    fuse->add_option("--out", fuse_out, "Output directory");

    // experiment
    auto* experiment = app.add_subcommand("experiment", "Run the end-to-end pipeline");
    std::string exp_config;
    experiment->add_option("--config", exp_config, "Experiment config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_out, synth_per_class, synth_dims, synth_seed, synth_noise,
                             synth_amplitude);
        }
        if (ada->parsed()) {
            return cmd_adasyn(ada_manifest, ada_modality, ada_beta, ada_k, ada_seed, ada_out);
        }
        if (dti_cmd->parsed()) {
            return cmd_dti(dti_tensors, dti_md, dti_fa);
        }
        if (train->parsed()) {
            return cmd_train(train_manifest, train_modality, train_spec, train_epochs, train_batch,
                             train_lr, train_seed, train_out);
        }
        if (predict->parsed()) {
            return cmd_predict(pred_checkpoint, pred_volume);
        }
        if (fuse->parsed()) {
            return cmd_fuse(fuse_ensemble, fuse_labels, fuse_strategy, fuse_radius, fuse_step,
                            fuse_out);
        }
        if (experiment->parsed()) {
            return cmd_experiment(exp_config);
        }
    } catch (const pdfuse::eval::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const pdfuse::eval::StageError& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
