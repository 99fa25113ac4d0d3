#pragma once

#include "pdfuse/volume.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pdfuse {

// Integer codes are fixed; they pin probability-vector component order
// everywhere downstream.
enum class ClassLabel : int { HC = 0, PD = 1, SWEDD = 2 };
enum class Modality : int { GM = 0, WM = 1, FA = 2, MD = 3 };

inline constexpr int kNumClasses = 3;
inline constexpr int kNumModalities = 4;

const char* to_string(ClassLabel label);
const char* to_string(Modality modality);
ClassLabel class_label_from_string(const std::string& s);
Modality modality_from_string(const std::string& s);

constexpr std::array<ClassLabel, kNumClasses> all_class_labels() {
    return {ClassLabel::HC, ClassLabel::PD, ClassLabel::SWEDD};
}
constexpr std::array<Modality, kNumModalities> all_modalities() {
    return {Modality::GM, Modality::WM, Modality::FA, Modality::MD};
}

struct Subject {
    std::string subject_id;
    ClassLabel label = ClassLabel::HC;
    std::map<Modality, Volume> volumes;
};

// Subjects are kept sorted by subject_id so every seeded operation downstream
// is independent of on-disk or construction order.
struct Dataset {
    std::vector<Subject> subjects;
    std::string provenance;

    void sort_subjects();
    std::array<std::size_t, kNumClasses> class_counts() const;
    const Subject* find(const std::string& subject_id) const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

// Manifest CSV: header "subject_id,label,modality,path"; label in
// {HC,PD,SWEDD}; modality in {GM,WM,FA,MD}; path relative to the manifest
// directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

// Writes one VOL1 file per (subject, modality) under dir plus
// dir/manifest.csv referencing them with relative paths.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct SplitResult {
    Dataset train;
    Dataset test;
};

// Stratified split. Per-class train count starts at floor(n_c * f); the
// remainder up to round(f * total) is assigned by largest fractional part,
// ties broken by larger class size then label code. Selection within a class
// is a seeded uniform shuffle of the id-sorted subjects.
SplitResult split_train_test(const Dataset& dataset, const SplitSpec& spec);

} // namespace pdfuse
