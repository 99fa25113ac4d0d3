#include "pdfuse/experiment.hpp"
#include "pdfuse/metrics.hpp"
#include "pdfuse/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace pdfuse;
using namespace pdfuse::eval;

namespace {

// nearest-centroid probe on flattened voxels, fitted on one half and scored
// on the held-out half so subject noise cannot leak into the centroids
double centroid_probe_accuracy(const Dataset& d, const std::vector<Modality>& modalities) {
    const auto [fit, held_out] = split_train_test(d, {0.5, 4242});
    std::array<std::vector<double>, kNumClasses> centroid;
    std::array<std::size_t, kNumClasses> counts{};
    const auto features = [&](const Subject& s) {
        std::vector<double> f;
        for (Modality m : modalities) {
            const Volume& v = s.volumes.at(m);
            f.insert(f.end(), v.voxels.begin(), v.voxels.end());
        }
        return f;
    };
    for (const Subject& s : fit.subjects) {
        const auto f = features(s);
        auto& c = centroid[static_cast<int>(s.label)];
        if (c.empty()) c.assign(f.size(), 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) c[i] += f[i];
        counts[static_cast<int>(s.label)]++;
    }
    for (int c = 0; c < kNumClasses; ++c) {
        for (double& x : centroid[c]) x /= static_cast<double>(counts[c]);
    }
    std::size_t correct = 0;
    for (const Subject& s : held_out.subjects) {
        const auto f = features(s);
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < kNumClasses; ++c) {
            double dist = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const double diff = f[i] - centroid[c][i];
                dist += diff * diff;
            }
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        if (static_cast<ClassLabel>(best) == s.label) correct++;
    }
    return static_cast<double>(correct) / static_cast<double>(held_out.subjects.size());
}

ConfusionMatrix example_cm() {
    ConfusionMatrix cm;
    cm.counts = {{{8, 2, 0}, {1, 9, 0}, {0, 0, 10}}};
    return cm;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

} // namespace

TEST_CASE("confusion matrix") {
    SUBCASE("perfect predictions are diagonal") {
        const std::vector<ClassLabel> y = {ClassLabel::HC, ClassLabel::PD, ClassLabel::SWEDD,
                                           ClassLabel::PD};
        const auto cm = confusion(y, y);
        CHECK(cm.trace() == 4);
        CHECK(cm.total() == 4);
    }

    SUBCASE("single off-diagonal entry") {
        const auto cm = confusion({ClassLabel::HC, ClassLabel::PD, ClassLabel::SWEDD},
                                  {ClassLabel::PD, ClassLabel::PD, ClassLabel::SWEDD});
        CHECK(cm.counts[0][1] == 1);
        CHECK(cm.counts[0][0] == 0);
        CHECK(cm.trace() == 2);
    }

    SUBCASE("empty and mismatched inputs are errors") {
        CHECK_THROWS_AS(confusion({}, {}), std::runtime_error);
        CHECK_THROWS_AS(confusion({ClassLabel::HC}, {}), std::runtime_error);
    }
}

TEST_CASE("metrics oracle") {
    SUBCASE("diagonal matrix scores 1 on everything") {
        ConfusionMatrix cm;
        cm.counts = {{{5, 0, 0}, {0, 7, 0}, {0, 0, 2}}};
        const auto m = metrics(cm);
        CHECK(m.accuracy == 1.0);
        CHECK(m.precision == 1.0);
        CHECK(m.recall == 1.0);
        CHECK(m.f1 == 1.0);
    }

    SUBCASE("hand-computed example ((8,2,0),(1,9,0),(0,0,10))") {
        const auto m = metrics(example_cm());
        // accuracy 27/30; per-class precision 8/9, 9/11, 1; recall 4/5, 9/10, 1;
        // per-class F1 16/19, 6/7, 1
        CHECK(std::abs(m.accuracy - 0.9) < 1e-12);
        CHECK(std::abs(m.precision - 268.0 / 297.0) < 1e-12);
        CHECK(std::abs(m.recall - 0.9) < 1e-12);
        CHECK(std::abs(m.f1 - 359.0 / 399.0) < 1e-12);
    }

    SUBCASE("accuracy equals mean recall on balanced counts") {
        ConfusionMatrix cm;
        cm.counts = {{{7, 2, 1}, {3, 6, 1}, {2, 2, 6}}};
        const auto m = metrics(cm);
        CHECK(m.accuracy == doctest::Approx(m.recall).epsilon(1e-12));
    }

    SUBCASE("permutation equivariance under consistent relabeling") {
        const auto base = metrics(example_cm());
        // swap classes 0 and 2 everywhere
        ConfusionMatrix swapped;
        const auto& c = example_cm().counts;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                const int si = (i == 0) ? 2 : (i == 2 ? 0 : 1);
                const int sj = (j == 0) ? 2 : (j == 2 ? 0 : 1);
                swapped.counts[si][sj] = c[i][j];
            }
        }
        const auto m = metrics(swapped);
        CHECK(m.accuracy == doctest::Approx(base.accuracy).epsilon(1e-12));
        CHECK(m.precision == doctest::Approx(base.precision).epsilon(1e-12));
        CHECK(m.recall == doctest::Approx(base.recall).epsilon(1e-12));
        CHECK(m.f1 == doctest::Approx(base.f1).epsilon(1e-12));
    }

    SUBCASE("zero-denominator classes count as zero") {
        ConfusionMatrix cm;
        cm.counts = {{{4, 0, 0}, {1, 0, 0}, {0, 0, 0}}}; // nothing predicted or true for class 2
        const auto m = metrics(cm);
        CHECK(m.accuracy == doctest::Approx(0.8).epsilon(1e-12));
        CHECK(std::isfinite(m.precision));
        CHECK(std::isfinite(m.f1));
    }
}

TEST_CASE("synthetic benchmark generator") {
    SynthConfig small;
    small.per_class = 4;
    small.depth = 4;
    small.height = 8;
    small.width = 8;
    small.seed = 77;

    SUBCASE("zero noise makes within-class volumes identical") {
        SynthConfig cfg = small;
        cfg.noise_scale = 0.0;
        const Dataset d = synth_generate(cfg);
        for (Modality m : all_modalities()) {
            for (ClassLabel label : all_class_labels()) {
                const Volume* first = nullptr;
                for (const Subject& s : d.subjects) {
                    if (s.label != label) continue;
                    if (!first) {
                        first = &s.volumes.at(m);
                    } else {
                        CHECK(s.volumes.at(m) == *first);
                    }
                }
            }
        }
    }

    SUBCASE("the designated class pair is indistinguishable within one modality") {
        SynthConfig cfg = small;
        cfg.noise_scale = 0.0;
        const Dataset d = synth_generate(cfg);
        for (Modality m : all_modalities()) {
            const auto [a, b] = cfg.ambiguous_pairs[static_cast<int>(m)];
            const Subject* sa = nullptr;
            const Subject* sb = nullptr;
            for (const Subject& s : d.subjects) {
                if (s.label == a && !sa) sa = &s;
                if (s.label == b && !sb) sb = &s;
            }
            CHECK(sa->volumes.at(m) == sb->volumes.at(m));
        }
    }

    SUBCASE("same seed reproduces the dataset; different seed does not") {
        const Dataset d1 = synth_generate(small);
        const Dataset d2 = synth_generate(small);
        REQUIRE(d1.subjects.size() == d2.subjects.size());
        for (std::size_t i = 0; i < d1.subjects.size(); ++i) {
            CHECK(d1.subjects[i].subject_id == d2.subjects[i].subject_id);
            CHECK(d1.subjects[i].volumes.at(Modality::GM) ==
                  d2.subjects[i].volumes.at(Modality::GM));
        }
        SynthConfig other = small;
        other.seed = 78;
        const Dataset d3 = synth_generate(other);
        CHECK_FALSE(d3.subjects[0].volumes.at(Modality::GM) ==
                    d1.subjects[0].volumes.at(Modality::GM));
    }

    SUBCASE("degenerate configs are rejected") {
        SynthConfig bad = small;
        bad.per_class = 1;
        CHECK_THROWS_AS(synth_generate(bad), std::runtime_error);
        bad = small;
        bad.depth = 0;
        CHECK_THROWS_AS(synth_generate(bad), std::runtime_error);
    }
}

TEST_CASE("default synthetic benchmark: single modalities are partially blind, the union is not") {
    // golden regression bounds measured once on the fixed default config
    // (30/class, 16x32x32, seed 1337) and frozen
    const Dataset d = synth_generate(SynthConfig{});
    double max_single = 0.0;
    for (Modality m : all_modalities()) {
        const double acc = centroid_probe_accuracy(d, {m});
        CHECK(acc < 1.0);
        max_single = std::max(max_single, acc);
    }
    const double joint = centroid_probe_accuracy(
        d, {Modality::GM, Modality::WM, Modality::FA, Modality::MD});
    CHECK(joint > max_single);
    // measured once on the default seed: singles 0.6222..0.8222, joint 1.0
    CHECK(max_single <= 0.85);
    CHECK(joint >= 0.99);
}

TEST_CASE("experiment config parsing") {
    const auto dir = std::filesystem::temp_directory_path() / "pdfuse_test_expcfg";
    std::filesystem::create_directories(dir);

    SUBCASE("full round trip of keys") {
        std::ofstream out(dir / "ok.cfg");
        out << "# comment\n"
            << "[dataset]\nsource = synth\nper_class = 6\ndims = 4,8,8\nnoise = 0.25\nseed = 9\n"
            << "[split]\ntrain_fraction = 0.75\nseed = 11\nval_fraction = 0.25\n"
            << "[adasyn]\nk = 2\nbeta = 1.0\nseed = 3\n"
            << "[cnn]\nepochs = 2\nbatch = 8\nlr = 0.001\nseed = 5\n"
            << "[owaf]\nradius = 0.02\nstep = 0.01\n"
            << "[output]\ndir = " << (dir / "out").string() << "\n";
        out.close();
        const auto cfg = parse_experiment_config(dir / "ok.cfg");
        CHECK(cfg.use_synth);
        CHECK(cfg.synth.per_class == 6);
        CHECK(cfg.synth.height == 8);
        CHECK(cfg.split.train_fraction == doctest::Approx(0.75));
        CHECK(cfg.val_fraction == doctest::Approx(0.25));
        CHECK(cfg.adasyn.k == 2);
        CHECK(cfg.train.epochs == 2);
        CHECK(cfg.grid.radius == doctest::Approx(0.02));
    }

    SUBCASE("unknown keys are config errors") {
        std::ofstream out(dir / "bad.cfg");
        out << "[dataset]\nsources = synth\n";
        out.close();
        CHECK_THROWS_AS(parse_experiment_config(dir / "bad.cfg"), ConfigError);
    }

    SUBCASE("malformed dims are config errors") {
        std::ofstream out(dir / "bad2.cfg");
        out << "[dataset]\ndims = 4,8\n";
        out.close();
        CHECK_THROWS_AS(parse_experiment_config(dir / "bad2.cfg"), ConfigError);
    }

    SUBCASE("manifest source requires a manifest path") {
        std::ofstream out(dir / "bad3.cfg");
        out << "[dataset]\nsource = manifest\n";
        out.close();
        CHECK_THROWS_AS(parse_experiment_config(dir / "bad3.cfg"), ConfigError);
    }
}

TEST_CASE("tiny end-to-end experiment: structure and determinism") {
    const auto dir = std::filesystem::temp_directory_path() / "pdfuse_test_exp";
    std::filesystem::remove_all(dir);

    ExperimentConfig cfg;
    cfg.use_synth = true;
    cfg.synth.per_class = 6;
    cfg.synth.depth = 4;
    cfg.synth.height = 8;
    cfg.synth.width = 8;
    cfg.synth.seed = 9;
    cfg.split = {0.8, 11};
    cfg.val_fraction = 0.25;
    cfg.adasyn = {2, 1.0, 3};
    cfg.train.epochs = 2;
    cfg.train.batch_size = 8;
    cfg.train.learning_rate = 1e-3;
    cfg.train.seed = 5;
    cfg.grid = {0.02, 0.01};
    cfg.out_dir = dir / "run1";

    const auto r1 = run_experiment(cfg);

    SUBCASE("report structure mirrors the two tables") {
        REQUIRE(r1.modality_rows.size() == 7);
        CHECK(r1.modality_rows[0].name == "WM");
        CHECK(r1.modality_rows[1].name == "GM");
        CHECK(r1.modality_rows[2].name == "MD");
        CHECK(r1.modality_rows[3].name == "FA");
        CHECK(r1.modality_rows[4].name == "WM+GM");
        CHECK(r1.modality_rows[5].name == "FA+MD");
        CHECK(r1.modality_rows[6].name == "ALL (owaf)");
        REQUIRE(r1.strategy_rows.size() == 4);
        CHECK(r1.strategy_rows[0].name == "majority_vote");
        CHECK(r1.strategy_rows[3].name == "owaf");
        // the all-four OWAF row is the same computation in both tables
        CHECK(r1.modality_rows[6].m.accuracy == r1.strategy_rows[3].m.accuracy);
        for (const auto& row : r1.modality_rows) {
            CHECK(row.m.accuracy >= 0.0);
            CHECK(row.m.accuracy <= 1.0);
        }
        CHECK(std::filesystem::exists(dir / "run1" / "report.txt"));
        CHECK(std::filesystem::exists(dir / "run1" / "report.csv"));
        CHECK(std::filesystem::exists(dir / "run1" / "weights_mra.csv"));
        CHECK(std::filesystem::exists(dir / "run1" / "weights_owaf.csv"));
        for (const char* m : {"GM", "WM", "FA", "MD"}) {
            CHECK(std::filesystem::exists(dir / "run1" / (std::string("model_") + m + ".cnn1")));
        }
    }

    SUBCASE("rerunning the identical config is byte-identical") {
        ExperimentConfig cfg2 = cfg;
        cfg2.out_dir = dir / "run2";
        const auto r2 = run_experiment(cfg2);
        CHECK(r1.report_body == r2.report_body);
        CHECK(slurp(dir / "run1" / "report.txt") == slurp(dir / "run2" / "report.txt"));
        CHECK(slurp(dir / "run1" / "report.csv") == slurp(dir / "run2" / "report.csv"));
        CHECK(slurp(dir / "run1" / "model_GM.cnn1") == slurp(dir / "run2" / "model_GM.cnn1"));
        CHECK(slurp(dir / "run1" / "model_MD.cnn1") == slurp(dir / "run2" / "model_MD.cnn1"));
    }
}

TEST_CASE("experiment runs from a manifest on disk") {
    const auto dir = std::filesystem::temp_directory_path() / "pdfuse_test_exp_manifest";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    SynthConfig synth;
    synth.per_class = 6;
    synth.depth = 4;
    synth.height = 8;
    synth.width = 8;
    synth.seed = 21;
    const auto manifest = save_dataset(synth_generate(synth), dir / "data");

    ExperimentConfig cfg;
    cfg.use_synth = false;
    cfg.manifest = manifest;
    cfg.split = {0.8, 11};
    cfg.val_fraction = 0.25;
    cfg.adasyn = {2, 1.0, 3};
    cfg.train.epochs = 2;
    cfg.train.batch_size = 8;
    cfg.train.learning_rate = 1e-3;
    cfg.train.seed = 5;
    cfg.grid = {0.02, 0.01};
    cfg.out_dir = dir / "out";

    const auto result = run_experiment(cfg);
    CHECK(result.modality_rows.size() == 7);
    CHECK(result.strategy_rows.size() == 4);

    SUBCASE("a missing manifest is a dataset-stage failure") {
        ExperimentConfig bad = cfg;
        bad.manifest = dir / "nope.csv";
        bad.out_dir = dir / "bad_out";
        CHECK_THROWS_AS(run_experiment(bad), StageError);
        // the aborted stage is recorded in the report
        const std::string report = slurp(dir / "bad_out" / "report.txt");
        CHECK(report.find("error: stage dataset") != std::string::npos);
    }
}

TEST_CASE("modality subset fusion degenerates cleanly") {
    // two models that disagree; single-model subset must equal that model
    fusion::EnsembleOutputs val;
    val.model_names = {"GM", "WM"};
    val.subject_ids = {"a", "b", "c"};
    val.probs = {
        {ProbVector(0.8, 0.1, 0.1), ProbVector(0.1, 0.8, 0.1), ProbVector(0.2, 0.2, 0.6)},
        {ProbVector(0.1, 0.8, 0.1), ProbVector(0.8, 0.1, 0.1), ProbVector(0.6, 0.2, 0.2)},
    };
    val.accuracies = {1.0, 0.0};
    const std::vector<ClassLabel> labels = {ClassLabel::HC, ClassLabel::PD, ClassLabel::SWEDD};

    const auto single = modality_subset_fusion(val, labels, val, labels, {0}, {0.05, 0.01});
    CHECK(single.accuracy == 1.0);

    const auto both = modality_subset_fusion(val, labels, val, labels, {0, 1}, {0.05, 0.01});
    CHECK(both.accuracy <= 1.0);
}
