#pragma once

#include "pdfuse/dataset.hpp"
#include "pdfuse/network.hpp"
#include "pdfuse/prob.hpp"
#include "pdfuse/volume.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace pdfuse::cnn {

template <class T>
struct TensorT {
    std::vector<std::uint32_t> dims;
    std::vector<T> v;

    static TensorT zeros(std::vector<std::uint32_t> d) {
        TensorT t;
        t.dims = std::move(d);
        std::size_t n = 1;
        for (std::uint32_t x : t.dims) n *= x;
        t.v.assign(n, T(0));
        return t;
    }
    std::size_t size() const { return v.size(); }
};

using Tensor = TensorT<float>;

template <class T>
struct ParametersT {
    struct LayerParams {
        bool present = false;
        TensorT<T> w;
        TensorT<T> b;
    };
    std::vector<LayerParams> layers; // one entry per NetworkSpec layer
};

using Parameters = ParametersT<float>;

bool operator==(const Parameters& a, const Parameters& b);

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

struct LabeledSlice {
    std::vector<float> pixels; // H*W row-major
    ClassLabel label = ClassLabel::HC;
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    Parameters params;
    std::vector<EpochStats> history; // one entry per epoch
};

// He-uniform weights, zero biases; one seeded stream across all layers.
Parameters init_parameters(const NetworkSpec& spec, std::uint64_t seed);

// batch dims (B, C, H, W); one probability row per image.
std::vector<ProbVector> forward(const NetworkSpec& spec, const Parameters& params,
                                const Tensor& batch);

// Mean over rows of -sum_j target_j * log(pred_j), predictions clamped at
// 1e-12 before the log.
double cross_entropy(const std::vector<std::array<double, 3>>& pred,
                     const std::vector<std::array<double, 3>>& target);

// Gradients of the mean cross-entropy w.r.t. every parameter; same shapes as
// the parameters themselves.
Parameters backward(const NetworkSpec& spec, const Parameters& params, const Tensor& batch,
                    const std::vector<std::array<double, 3>>& targets);
Parameters backward(const NetworkSpec& spec, const Parameters& params, const Tensor& batch,
                    const std::vector<ClassLabel>& labels);

// Adam first/second moments, held in 64-bit.
struct AdamState {
    struct Entry {
        std::vector<double> mw, vw, mb, vb;
    };
    std::vector<Entry> layers;
    static AdamState init(const Parameters& params);
};

// Standard Adam update with bias correction; t is the 1-based step index.
// Throws (naming the layer) on a non-finite gradient or parameter.
void adam_step(Parameters& params, const Parameters& grads, AdamState& state,
               const TrainConfig& cfg, std::int64_t t);

TrainResult train(const NetworkSpec& spec, const std::vector<LabeledSlice>& data,
                  const TrainConfig& cfg);

// Runs the classifier on every axial slice and averages the per-slice
// probability rows.
ProbVector predict_subject(const NetworkSpec& spec, const Parameters& params, const Volume& v);

std::vector<LabeledSlice> labeled_slices(const Volume& v, ClassLabel label);

struct GradCheckOptions {
    double step = 1e-3;                    // central-difference h
    std::size_t max_coords_per_tensor = 0; // 0 = every coordinate
    std::uint64_t seed = 1;
    int batch = 1;
};

// Max over checked parameters of |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-8), with both sides evaluated in float64. Differences that
// straddle a ReLU/maxpool kink are re-taken with a smaller h.
double gradient_check(const NetworkSpec& spec, const GradCheckOptions& opts = {});

// CNN1 checkpoint: magic, u32 tensor count, per tensor u32 ndim + dims +
// binary32 LE data; the NetworkSpec rides in a text sidecar at path + ".spec".
void save_checkpoint(const Parameters& params, const NetworkSpec& spec,
                     const std::filesystem::path& path);

struct Checkpoint {
    NetworkSpec spec;
    Parameters params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace pdfuse::cnn
