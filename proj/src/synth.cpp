#include "pdfuse/synth.hpp"

#include "pdfuse/rng.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace pdfuse::eval {

namespace {

constexpr int kBlobsPerTemplate = 4;

Volume make_template(std::uint32_t depth, std::uint32_t height, std::uint32_t width,
                     double amplitude, Rng& rng) {
    struct Blob {
        double cz, cy, cx, sz, sy, sx, amp;
    };
    Blob blobs[kBlobsPerTemplate];
    for (Blob& b : blobs) {
        b.cz = rng.uniform(0.0, depth);
        b.cy = rng.uniform(0.0, height);
        b.cx = rng.uniform(0.0, width);
        b.sz = rng.uniform(0.15, 0.35) * depth;
        b.sy = rng.uniform(0.15, 0.35) * height;
        b.sx = rng.uniform(0.15, 0.35) * width;
        b.amp = (rng.next_double() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 1.0) * amplitude;
    }
    Volume v = Volume::zeros(depth, height, width);
    std::size_t i = 0;
    for (std::uint32_t z = 0; z < depth; ++z) {
        for (std::uint32_t y = 0; y < height; ++y) {
            for (std::uint32_t x = 0; x < width; ++x, ++i) {
                double acc = 0.0;
                for (const Blob& b : blobs) {
                    const double dz = (z - b.cz) / b.sz;
                    const double dy = (y - b.cy) / b.sy;
                    const double dx = (x - b.cx) / b.sx;
                    acc += b.amp * std::exp(-0.5 * (dz * dz + dy * dy + dx * dx));
                }
                v.voxels[i] = static_cast<float>(acc);
            }
        }
    }
    return v;
}

// classes sharing a template in a modality collapse to the lower class code
int template_group(const SynthConfig& cfg, Modality m, ClassLabel c) {
    const auto& [a, b] = cfg.ambiguous_pairs[static_cast<int>(m)];
    if (c == a || c == b) {
        return static_cast<int>(std::min(static_cast<int>(a), static_cast<int>(b)));
    }
    return static_cast<int>(c);
}

} // namespace

Dataset synth_generate(const SynthConfig& cfg) {
    if (cfg.per_class < 2) {
        throw std::runtime_error("synthetic benchmark needs at least 2 subjects per class");
    }
    if (cfg.per_class > 999) {
        throw std::runtime_error("synthetic benchmark supports at most 999 subjects per class");
    }
    if (cfg.depth == 0 || cfg.height == 0 || cfg.width == 0) {
        throw std::runtime_error("synthetic volume dimensions must be positive");
    }
    for (const auto& [a, b] : cfg.ambiguous_pairs) {
        if (a == b) {
            throw std::runtime_error("an ambiguous pair must name two distinct classes");
        }
    }

    // templates per (modality, group)
    std::array<std::array<Volume, kNumClasses>, kNumModalities> templates;
    for (Modality m : all_modalities()) {
        for (int g = 0; g < kNumClasses; ++g) {
            Rng rng(mix_seed(cfg.seed, 0x7e0 + static_cast<int>(m) * kNumClasses + g));
            templates[static_cast<int>(m)][g] =
                make_template(cfg.depth, cfg.height, cfg.width, cfg.template_amplitude, rng);
        }
    }

    Dataset dataset;
    dataset.provenance = "synthetic";
    for (ClassLabel label : all_class_labels()) {
        for (int i = 0; i < cfg.per_class; ++i) {
            Subject subject;
            char id[32];
            std::snprintf(id, sizeof(id), "subj_%s_%03d", to_string(label), i);
            subject.subject_id = id;
            subject.label = label;
            for (Modality m : all_modalities()) {
                const int g = template_group(cfg, m, label);
                const Volume& base = templates[static_cast<int>(m)][g];
                Volume v = base;
                Rng noise(mix_seed(
                    mix_seed(cfg.seed, 0x4000 + static_cast<int>(m) * kNumClasses +
                                           static_cast<int>(label)),
                    static_cast<std::uint64_t>(i)));
                for (float& voxel : v.voxels) {
                    voxel = static_cast<float>(voxel + cfg.noise_scale * noise.normal());
                }
                subject.volumes.emplace(m, std::move(v));
            }
            dataset.subjects.push_back(std::move(subject));
        }
    }
    dataset.sort_subjects();
    return dataset;
}

} // namespace pdfuse::eval
