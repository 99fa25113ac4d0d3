#include "pdfuse/cnn.hpp"

#include "pdfuse/cnn_kernels.hpp"
#include "pdfuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace pdfuse::cnn {

namespace {

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error(std::string("checkpoint truncated while reading ") + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

bool host_little_endian() {
    const std::uint16_t probe = 0x0102;
    unsigned char first;
    std::memcpy(&first, &probe, 1);
    return first == 0x02;
}

} // namespace

bool operator==(const Parameters& a, const Parameters& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        const auto& x = a.layers[i];
        const auto& y = b.layers[i];
        if (x.present != y.present) return false;
        if (x.w.dims != y.w.dims || x.b.dims != y.b.dims) return false;
        if (x.w.v != y.w.v || x.b.v != y.b.v) return false;
    }
    return true;
}

Parameters init_parameters(const NetworkSpec& spec, std::uint64_t seed) {
    return detail::he_init<float>(spec, seed);
}

std::vector<ProbVector> forward(const NetworkSpec& spec, const Parameters& params,
                                const Tensor& batch) {
    const auto probs = detail::forward_batch<float>(spec, params, batch, nullptr);
    const std::size_t n = probs.dims[0];
    std::vector<ProbVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.emplace_back(probs.v[i * 3], probs.v[i * 3 + 1], probs.v[i * 3 + 2]);
    }
    return out;
}

double cross_entropy(const std::vector<std::array<double, 3>>& pred,
                     const std::vector<std::array<double, 3>>& target) {
    if (pred.size() != target.size()) {
        throw std::runtime_error("prediction and target row counts differ");
    }
    if (pred.empty()) {
        throw std::runtime_error("cross entropy of zero rows");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            const double t = target[i][j];
            if (t != 0.0) {
                total -= t * std::log(std::max(pred[i][j], detail::kLogClamp));
            }
        }
    }
    return total / static_cast<double>(pred.size());
}

Parameters backward(const NetworkSpec& spec, const Parameters& params, const Tensor& batch,
                    const std::vector<std::array<double, 3>>& targets) {
    if (targets.size() != batch.dims[0]) {
        throw std::runtime_error("target row count does not match batch size");
    }
    detail::ForwardTrace<float> trace;
    detail::forward_batch<float>(spec, params, batch, &trace);
    auto onehot = Tensor::zeros({batch.dims[0], 3});
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            onehot.v[i * 3 + j] = static_cast<float>(targets[i][j]);
        }
    }
    return detail::backward_batch<float>(spec, params, trace, onehot);
}

Parameters backward(const NetworkSpec& spec, const Parameters& params, const Tensor& batch,
                    const std::vector<ClassLabel>& labels) {
    if (labels.size() != batch.dims[0]) {
        throw std::runtime_error("label count does not match batch size");
    }
    detail::ForwardTrace<float> trace;
    detail::forward_batch<float>(spec, params, batch, &trace);
    const auto onehot = detail::onehot_rows<float>(labels, spec.classes);
    return detail::backward_batch<float>(spec, params, trace, onehot);
}

AdamState AdamState::init(const Parameters& params) {
    AdamState state;
    state.layers.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        if (!params.layers[i].present) continue;
        state.layers[i].mw.assign(params.layers[i].w.size(), 0.0);
        state.layers[i].vw.assign(params.layers[i].w.size(), 0.0);
        state.layers[i].mb.assign(params.layers[i].b.size(), 0.0);
        state.layers[i].vb.assign(params.layers[i].b.size(), 0.0);
    }
    return state;
}

namespace {

void adam_update(std::vector<float>& p, const std::vector<float>& g, std::vector<double>& m,
                 std::vector<double>& v, const TrainConfig& cfg, double c1, double c2,
                 std::size_t layer) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        if (!std::isfinite(gi)) {
            throw std::runtime_error("non-finite gradient in layer " + std::to_string(layer));
        }
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        const double updated = static_cast<double>(p[i]) -
                               cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        if (!std::isfinite(updated)) {
            throw std::runtime_error("non-finite parameter after update in layer " +
                                     std::to_string(layer));
        }
        p[i] = static_cast<float>(updated);
    }
}

} // namespace

void adam_step(Parameters& params, const Parameters& grads, AdamState& state,
               const TrainConfig& cfg, std::int64_t t) {
    if (t < 1) {
        throw std::runtime_error("adam step index must be >= 1");
    }
    if (grads.layers.size() != params.layers.size() || state.layers.size() != params.layers.size()) {
        throw std::runtime_error("adam shapes do not align");
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        if (!params.layers[i].present) continue;
        if (!grads.layers[i].present || grads.layers[i].w.dims != params.layers[i].w.dims) {
            throw std::runtime_error("gradient shape mismatch in layer " + std::to_string(i));
        }
        auto& st = state.layers[i];
        adam_update(params.layers[i].w.v, grads.layers[i].w.v, st.mw, st.vw, cfg, c1, c2, i);
        adam_update(params.layers[i].b.v, grads.layers[i].b.v, st.mb, st.vb, cfg, c1, c2, i);
    }
}

namespace {

Tensor make_batch(const std::vector<LabeledSlice>& data, const std::vector<std::size_t>& idx,
                  std::size_t lo, std::size_t hi, int h, int w) {
    const std::size_t n = hi - lo;
    auto batch = Tensor::zeros({static_cast<std::uint32_t>(n), 1, static_cast<std::uint32_t>(h),
                                static_cast<std::uint32_t>(w)});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = data[idx[lo + i]];
        std::copy(s.pixels.begin(), s.pixels.end(), batch.v.begin() + i * plane);
    }
    return batch;
}

} // namespace

TrainResult train(const NetworkSpec& spec, const std::vector<LabeledSlice>& data,
                  const TrainConfig& cfg) {
    spec.validate();
    if (data.empty()) {
        throw std::runtime_error("training data is empty");
    }
    const std::size_t plane = static_cast<std::size_t>(spec.input_h) * spec.input_w;
    for (const LabeledSlice& s : data) {
        if (s.pixels.size() != plane) {
            throw std::runtime_error("training slice does not match network input size");
        }
    }
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
        throw std::runtime_error("invalid training configuration");
    }

    TrainResult result;
    result.params = init_parameters(spec, cfg.seed);
    AdamState state = AdamState::init(result.params);
    Rng shuffle_rng(mix_seed(cfg.seed, 1));

    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);

    std::int64_t t = 0;
    result.history.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(idx);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t lo = 0; lo < idx.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t hi = std::min(idx.size(), lo + static_cast<std::size_t>(cfg.batch_size));
            const Tensor batch = make_batch(data, idx, lo, hi, spec.input_h, spec.input_w);
            std::vector<ClassLabel> labels(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) labels[i - lo] = data[idx[i]].label;

            detail::ForwardTrace<float> trace;
            const auto probs = detail::forward_batch<float>(spec, result.params, batch, &trace);
            const auto onehot = detail::onehot_rows<float>(labels, spec.classes);
            loss_sum += detail::cross_entropy_batch(probs, onehot) * static_cast<double>(hi - lo);
            for (std::size_t i = 0; i < labels.size(); ++i) {
                const float* row = probs.v.data() + i * 3;
                std::size_t best = 0;
                for (std::size_t j = 1; j < 3; ++j) {
                    if (row[j] > row[best]) best = j;
                }
                if (static_cast<ClassLabel>(best) == labels[i]) correct++;
            }

            const auto grads = detail::backward_batch<float>(spec, result.params, trace, onehot);
            adam_step(result.params, grads, state, cfg, ++t);
        }
        result.history.push_back({loss_sum / static_cast<double>(data.size()),
                                  static_cast<double>(correct) / static_cast<double>(data.size())});
    }
    return result;
}

ProbVector predict_subject(const NetworkSpec& spec, const Parameters& params, const Volume& v) {
    if (v.height != static_cast<std::uint32_t>(spec.input_h) ||
        v.width != static_cast<std::uint32_t>(spec.input_w)) {
        throw std::runtime_error("volume slice size does not match network input");
    }
    if (v.depth == 0) {
        throw std::runtime_error("volume has no slices");
    }
    auto batch = Tensor::zeros({v.depth, 1, v.height, v.width});
    std::copy(v.voxels.begin(), v.voxels.end(), batch.v.begin());
    const auto rows = forward(spec, params, batch);
    std::array<double, 3> mean{};
    for (const ProbVector& p : rows) {
        for (std::size_t j = 0; j < 3; ++j) mean[j] += p[j];
    }
    return {mean[0] / rows.size(), mean[1] / rows.size(), mean[2] / rows.size()};
}

std::vector<LabeledSlice> labeled_slices(const Volume& v, ClassLabel label) {
    std::vector<LabeledSlice> slices;
    slices.reserve(v.depth);
    const std::size_t plane = static_cast<std::size_t>(v.height) * v.width;
    for (std::uint32_t z = 0; z < v.depth; ++z) {
        LabeledSlice s;
        s.label = label;
        s.pixels.assign(v.voxels.begin() + z * plane, v.voxels.begin() + (z + 1) * plane);
        slices.push_back(std::move(s));
    }
    return slices;
}

namespace {

// Activation-pattern fingerprint: a finite difference is only trusted when
// both sides sit on the same smooth branch (same ReLU sign pattern, same
// maxpool winners); otherwise the step is shrunk.
std::uint64_t branch_fingerprint(const NetworkSpec& spec,
                                 const detail::ForwardTrace<double>& trace) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mixin = [&h](std::uint64_t x) {
        h ^= x;
        h *= 1099511628211ULL;
    };
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (spec.layers[i].kind == LayerKind::Relu) {
            const auto& in = trace.acts[i];
            std::uint64_t word = 0;
            int bits = 0;
            for (double x : in.v) {
                word = (word << 1) | (x > 0.0 ? 1u : 0u);
                if (++bits == 64) {
                    mixin(word);
                    word = 0;
                    bits = 0;
                }
            }
            mixin(word);
        } else if (spec.layers[i].kind == LayerKind::MaxPool2d) {
            for (std::uint32_t a : trace.pool_argmax[i]) mixin(a);
        }
    }
    return h;
}

struct LossProbe {
    double loss;
    std::uint64_t fingerprint;
};

LossProbe probe_loss(const NetworkSpec& spec, const ParametersT<double>& params,
                     const TensorT<double>& batch, const TensorT<double>& onehot) {
    detail::ForwardTrace<double> trace;
    const auto probs = detail::forward_batch<double>(spec, params, batch, &trace);
    return {detail::cross_entropy_batch(probs, onehot), branch_fingerprint(spec, trace)};
}

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t cap, Rng& rng) {
    std::vector<std::size_t> coords(size);
    std::iota(coords.begin(), coords.end(), 0);
    if (cap > 0 && size > cap) {
        rng.shuffle(coords);
        coords.resize(cap);
        std::sort(coords.begin(), coords.end());
    }
    return coords;
}

} // namespace

double gradient_check(const NetworkSpec& spec, const GradCheckOptions& opts) {
    spec.validate();
    auto params = detail::he_init<double>(spec, opts.seed);
    Rng rng(mix_seed(opts.seed, 2));

    auto batch = TensorT<double>::zeros({static_cast<std::uint32_t>(opts.batch),
                                         static_cast<std::uint32_t>(spec.input_channels),
                                         static_cast<std::uint32_t>(spec.input_h),
                                         static_cast<std::uint32_t>(spec.input_w)});
    for (double& x : batch.v) x = rng.normal();
    std::vector<ClassLabel> labels(static_cast<std::size_t>(opts.batch));
    for (auto& l : labels) l = static_cast<ClassLabel>(rng.next_below(3));
    const auto onehot = detail::onehot_rows<double>(labels, spec.classes);

    detail::ForwardTrace<double> trace;
    detail::forward_batch<double>(spec, params, batch, &trace);
    const auto analytic = detail::backward_batch<double>(spec, params, trace, onehot);

    double max_rel = 0.0;
    std::size_t tensor_ordinal = 0;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        if (!params.layers[li].present) continue;
        for (int which = 0; which < 2; ++which) {
            auto& tensor = which == 0 ? params.layers[li].w : params.layers[li].b;
            const auto& grad = which == 0 ? analytic.layers[li].w : analytic.layers[li].b;
            Rng pick_rng(mix_seed(opts.seed, 100 + tensor_ordinal));
            const auto coords = pick_coords(tensor.size(), opts.max_coords_per_tensor, pick_rng);
            tensor_ordinal++;

            for (std::size_t c : coords) {
                const double saved = tensor.v[c];
                double h = opts.step;
                double numeric = 0.0;
                for (int attempt = 0; attempt < 6; ++attempt) {
                    tensor.v[c] = saved + h;
                    const LossProbe plus = probe_loss(spec, params, batch, onehot);
                    tensor.v[c] = saved - h;
                    const LossProbe minus = probe_loss(spec, params, batch, onehot);
                    tensor.v[c] = saved;
                    numeric = (plus.loss - minus.loss) / (2.0 * h);
                    if (plus.fingerprint == minus.fingerprint) break;
                    h /= 8.0;
                }
                const double a = grad.v[c];
                const double rel = std::abs(a - numeric) /
                                   std::max({std::abs(a), std::abs(numeric), 1e-8});
                max_rel = std::max(max_rel, rel);
            }
        }
    }
    return max_rel;
}

void save_checkpoint(const Parameters& params, const NetworkSpec& spec,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    }
    out.write("CNN1", 4);
    std::uint32_t tensor_count = 0;
    for (const auto& l : params.layers) {
        if (l.present) tensor_count += 2;
    }
    write_u32_le(out, tensor_count);
    auto write_tensor = [&out](const Tensor& t) {
        write_u32_le(out, static_cast<std::uint32_t>(t.dims.size()));
        for (std::uint32_t d : t.dims) write_u32_le(out, d);
        if (host_little_endian()) {
            out.write(reinterpret_cast<const char*>(t.v.data()),
                      static_cast<std::streamsize>(t.v.size() * sizeof(float)));
        } else {
            for (float f : t.v) {
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                write_u32_le(out, bits);
            }
        }
    };
    for (const auto& l : params.layers) {
        if (!l.present) continue;
        write_tensor(l.w);
        write_tensor(l.b);
    }
    if (!out) {
        throw std::runtime_error("write failed for checkpoint: " + path.string());
    }
    save_spec(spec, path.string() + ".spec");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Checkpoint ckpt;
    ckpt.spec = load_spec(path.string() + ".spec");

    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint: " + path.string());
    }
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "CNN1", 4) != 0) {
        throw std::runtime_error("bad magic in checkpoint (expected CNN1): " + path.string());
    }
    const std::uint32_t tensor_count = read_u32_le(in, "tensor count");

    auto read_tensor = [&in, &path]() {
        Tensor t;
        const std::uint32_t ndim = read_u32_le(in, "tensor rank");
        if (ndim > 8) {
            throw std::runtime_error("implausible tensor rank in checkpoint: " + path.string());
        }
        t.dims.resize(ndim);
        std::size_t n = 1;
        for (std::uint32_t& d : t.dims) {
            d = read_u32_le(in, "tensor dim");
            n *= d;
        }
        t.v.resize(n);
        const std::streamsize bytes = static_cast<std::streamsize>(n * sizeof(float));
        if (!in.read(reinterpret_cast<char*>(t.v.data()), bytes) || in.gcount() != bytes) {
            throw std::runtime_error("checkpoint tensor payload truncated: " + path.string());
        }
        if (!host_little_endian()) {
            for (float& f : t.v) {
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) |
                       (bits >> 24);
                std::memcpy(&f, &bits, 4);
            }
        }
        return t;
    };

    // shape skeleton from the sidecar spec, payload from the binary
    ckpt.params = detail::he_init<float>(ckpt.spec, 0);
    std::uint32_t consumed = 0;
    for (auto& l : ckpt.params.layers) {
        if (!l.present) continue;
        Tensor w = read_tensor();
        Tensor b = read_tensor();
        consumed += 2;
        if (w.dims != l.w.dims || b.dims != l.b.dims) {
            throw std::runtime_error("checkpoint tensor shape does not match spec: " +
                                     path.string());
        }
        l.w = std::move(w);
        l.b = std::move(b);
    }
    if (consumed != tensor_count) {
        throw std::runtime_error("checkpoint tensor count does not match spec: " + path.string());
    }
    return ckpt;
}

} // namespace pdfuse::cnn
