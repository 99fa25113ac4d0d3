#include "pdfuse/dataset.hpp"

#include "pdfuse/csv.hpp"
#include "pdfuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace pdfuse {

const char* to_string(ClassLabel label) {
    switch (label) {
        case ClassLabel::HC: return "HC";
        case ClassLabel::PD: return "PD";
        case ClassLabel::SWEDD: return "SWEDD";
    }
    throw std::runtime_error("invalid class label code");
}

const char* to_string(Modality modality) {
    switch (modality) {
        case Modality::GM: return "GM";
        case Modality::WM: return "WM";
        case Modality::FA: return "FA";
        case Modality::MD: return "MD";
    }
    throw std::runtime_error("invalid modality code");
}

ClassLabel class_label_from_string(const std::string& s) {
    if (s == "HC") return ClassLabel::HC;
    if (s == "PD") return ClassLabel::PD;
    if (s == "SWEDD") return ClassLabel::SWEDD;
    throw std::runtime_error("unknown class label: \"" + s + "\" (expected HC, PD or SWEDD)");
}

Modality modality_from_string(const std::string& s) {
    if (s == "GM") return Modality::GM;
    if (s == "WM") return Modality::WM;
    if (s == "FA") return Modality::FA;
    if (s == "MD") return Modality::MD;
    throw std::runtime_error("unknown modality: \"" + s + "\" (expected GM, WM, FA or MD)");
}

void Dataset::sort_subjects() {
    std::sort(subjects.begin(), subjects.end(),
              [](const Subject& a, const Subject& b) { return a.subject_id < b.subject_id; });
}

std::array<std::size_t, kNumClasses> Dataset::class_counts() const {
    std::array<std::size_t, kNumClasses> counts{};
    for (const Subject& s : subjects) {
        counts[static_cast<int>(s.label)]++;
    }
    return counts;
}

const Subject* Dataset::find(const std::string& subject_id) const {
    for (const Subject& s : subjects) {
        if (s.subject_id == subject_id) return &s;
    }
    return nullptr;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw std::runtime_error("cannot open manifest: " + manifest_path.string());
    }
    const std::filesystem::path base = manifest_path.parent_path();

    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("manifest is empty: " + manifest_path.string());
    }
    {
        const auto header = split_csv_line(line);
        if (header != std::vector<std::string>{"subject_id", "label", "modality", "path"}) {
            throw std::runtime_error("manifest header must be subject_id,label,modality,path");
        }
    }

    std::map<std::string, Subject> by_id;
    std::set<std::pair<std::string, Modality>> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw std::runtime_error("manifest line " + std::to_string(line_no) +
                                     ": expected 4 fields, got " + std::to_string(fields.size()));
        }
        const std::string& id = fields[0];
        if (id.empty()) {
            throw std::runtime_error("manifest line " + std::to_string(line_no) + ": empty subject_id");
        }
        const ClassLabel label = class_label_from_string(fields[1]);
        const Modality modality = modality_from_string(fields[2]);
        if (!seen.insert({id, modality}).second) {
            throw std::runtime_error("duplicate (subject_id, modality) row: " + id + "," + fields[2]);
        }
        Volume vol = read_volume(base / fields[3]);

        auto [it, inserted] = by_id.try_emplace(id);
        Subject& subject = it->second;
        if (inserted) {
            subject.subject_id = id;
            subject.label = label;
        } else if (subject.label != label) {
            throw std::runtime_error("subject " + id + " listed with conflicting labels");
        }
        if (!subject.volumes.empty() && !subject.volumes.begin()->second.same_dims(vol)) {
            throw std::runtime_error("subject " + id + " has volumes with mismatched dimensions");
        }
        subject.volumes.emplace(modality, std::move(vol));
    }

    Dataset dataset;
    dataset.provenance = "manifest:" + manifest_path.filename().string();
    dataset.subjects.reserve(by_id.size());
    for (auto& [id, subject] : by_id) {
        dataset.subjects.push_back(std::move(subject));
    }
    dataset.sort_subjects();
    return dataset;
}

std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "volumes");
    const std::filesystem::path manifest_path = dir / "manifest.csv";
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open manifest for writing: " + manifest_path.string());
    }
    out << "subject_id,label,modality,path\n";
    for (const Subject& s : dataset.subjects) {
        for (const auto& [modality, volume] : s.volumes) {
            const std::string rel = std::string("volumes/") + s.subject_id + "_" +
                                    to_string(modality) + ".vol";
            write_volume(volume, dir / rel);
            out << s.subject_id << ',' << to_string(s.label) << ',' << to_string(modality) << ','
                << rel << '\n';
        }
    }
    if (!out) {
        throw std::runtime_error("write failed for manifest: " + manifest_path.string());
    }
    return manifest_path;
}

SplitResult split_train_test(const Dataset& dataset, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw std::runtime_error("train_fraction must be strictly between 0 and 1");
    }

    Dataset sorted = dataset;
    sorted.sort_subjects();

    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < sorted.subjects.size(); ++i) {
        by_class[static_cast<int>(sorted.subjects[i].label)].push_back(i);
    }
    for (ClassLabel label : all_class_labels()) {
        if (by_class[static_cast<int>(label)].size() < 2) {
            throw std::runtime_error(std::string("cannot stratify: class ") + to_string(label) +
                                     " has fewer than 2 subjects");
        }
    }

    const double f = spec.train_fraction;
    const std::size_t total = sorted.subjects.size();
    const auto target_total = static_cast<std::size_t>(std::llround(f * static_cast<double>(total)));

    struct ClassShare {
        int code;
        std::size_t count;
        std::size_t base;
        std::int64_t frac; // fractional part in nano-units, so exact ties survive fp noise
    };
    std::array<ClassShare, kNumClasses> shares{};
    std::size_t base_sum = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        const std::size_t n = by_class[c].size();
        const double x = f * static_cast<double>(n);
        const auto base = static_cast<std::size_t>(std::floor(x));
        shares[c] = {c, n, base, std::llround((x - static_cast<double>(base)) * 1e9)};
        base_sum += base;
    }

    std::array<std::size_t, kNumClasses> train_count{};
    for (int c = 0; c < kNumClasses; ++c) train_count[c] = shares[c].base;

    if (target_total > base_sum) {
        std::size_t remainder = target_total - base_sum;
        std::array<ClassShare, kNumClasses> order = shares;
        std::sort(order.begin(), order.end(), [](const ClassShare& a, const ClassShare& b) {
            if (a.frac != b.frac) return a.frac > b.frac;
            if (a.count != b.count) return a.count > b.count;
            return a.code < b.code;
        });
        for (const ClassShare& s : order) {
            if (remainder == 0) break;
            train_count[s.code]++;
            remainder--;
        }
    }

    SplitResult result;
    result.train.provenance = sorted.provenance;
    result.test.provenance = sorted.provenance;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<std::size_t> members = by_class[c];
        Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(c) + 1));
        rng.shuffle(members);
        for (std::size_t i = 0; i < members.size(); ++i) {
            Dataset& side = (i < train_count[c]) ? result.train : result.test;
            side.subjects.push_back(sorted.subjects[members[i]]);
        }
    }
    result.train.sort_subjects();
    result.test.sort_subjects();
    return result;
}

} // namespace pdfuse
