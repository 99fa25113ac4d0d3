#pragma once

#include "pdfuse/dataset.hpp"

#include <array>
#include <cstdint>
#include <utility>

namespace pdfuse::eval {

// Synthetic multi-modal benchmark. Every class gets a smooth per-modality
// template plus voxel noise. In each modality one designated class pair
// shares its template, so that single modality cannot separate the pair while
// the union of modalities separates all three classes.
struct SynthConfig {
    int per_class = 30;
    std::uint32_t depth = 16;
    std::uint32_t height = 32;
    std::uint32_t width = 32;
    double template_amplitude = 1.0;
    double noise_scale = 0.3;
    // ambiguous class pair per modality, indexed by Modality code
    std::array<std::pair<ClassLabel, ClassLabel>, kNumModalities> ambiguous_pairs =
        default_confusion_design();
    std::uint64_t seed = 1337;

    static std::array<std::pair<ClassLabel, ClassLabel>, kNumModalities>
    default_confusion_design() {
        return {{
            {ClassLabel::PD, ClassLabel::SWEDD}, // GM separates HC
            {ClassLabel::HC, ClassLabel::SWEDD}, // WM separates PD
            {ClassLabel::HC, ClassLabel::PD},    // FA separates SWEDD
            {ClassLabel::PD, ClassLabel::SWEDD}, // MD separates HC
        }};
    }
};

Dataset synth_generate(const SynthConfig& cfg);

} // namespace pdfuse::eval
