#pragma once

// Layer kernels templated on the scalar type. Training instantiates float;
// the gradient-check oracle instantiates double so the finite-difference
// comparison runs entirely in 64-bit.

#include "pdfuse/cnn.hpp"
#include "pdfuse/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdfuse::cnn::detail {

constexpr double kLogClamp = 1e-12;

// ox range keeping ix = ox*stride + k_off inside [0, in_size)
inline std::pair<std::size_t, std::size_t> conv_span(std::size_t out_size, std::size_t in_size,
                                                     int stride, int k_off) {
    std::size_t lo = 0;
    if (k_off < 0) {
        lo = static_cast<std::size_t>((-k_off + stride - 1) / stride);
    }
    const long long top = static_cast<long long>(in_size) - 1 - k_off;
    if (top < 0) return {0, 0};
    std::size_t hi = static_cast<std::size_t>(top / stride) + 1;
    hi = std::min(hi, out_size);
    lo = std::min(lo, hi);
    return {lo, hi};
}

template <class T>
TensorT<T> conv_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                        int stride, int pad) {
    const std::size_t B = in.dims[0], cin = in.dims[1], h = in.dims[2], wd = in.dims[3];
    const std::size_t cout = w.dims[0], kh = w.dims[2], kw = w.dims[3];
    const std::size_t hout = (h + 2 * pad - kh) / stride + 1;
    const std::size_t wout = (wd + 2 * pad - kw) / stride + 1;
    auto out = TensorT<T>::zeros({static_cast<std::uint32_t>(B), static_cast<std::uint32_t>(cout),
                                  static_cast<std::uint32_t>(hout), static_cast<std::uint32_t>(wout)});
    const std::size_t in_img = cin * h * wd, out_img = cout * hout * wout;
    for (std::size_t img = 0; img < B; ++img) {
        for (std::size_t oc = 0; oc < cout; ++oc) {
            T* out_plane = out.v.data() + img * out_img + oc * hout * wout;
            std::fill(out_plane, out_plane + hout * wout, b.v[oc]);
            for (std::size_t ic = 0; ic < cin; ++ic) {
                const T* in_plane = in.v.data() + img * in_img + ic * h * wd;
                const T* w_base = w.v.data() + (oc * cin + ic) * kh * kw;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const int offy = static_cast<int>(ky) - pad;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const T wv = w_base[ky * kw + kx];
                        const int offx = static_cast<int>(kx) - pad;
                        const auto [lo, hi] = conv_span(wout, wd, stride, offx);
                        for (std::size_t oy = 0; oy < hout; ++oy) {
                            const long long iy = static_cast<long long>(oy) * stride + offy;
                            if (iy < 0 || iy >= static_cast<long long>(h)) continue;
                            const T* in_row = in_plane + static_cast<std::size_t>(iy) * wd;
                            T* out_row = out_plane + oy * wout;
                            if (stride == 1) {
                                const T* src = in_row + offx;
                                for (std::size_t ox = lo; ox < hi; ++ox) {
                                    out_row[ox] += wv * src[ox];
                                }
                            } else {
                                for (std::size_t ox = lo; ox < hi; ++ox) {
                                    out_row[ox] += wv * in_row[ox * stride + offx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <class T>
void conv_backward(const TensorT<T>& dout, const TensorT<T>& in, const TensorT<T>& w, int stride,
                   int pad, TensorT<T>& dx, TensorT<T>& dw, TensorT<T>& db) {
    const std::size_t B = in.dims[0], cin = in.dims[1], h = in.dims[2], wd = in.dims[3];
    const std::size_t cout = w.dims[0], kh = w.dims[2], kw = w.dims[3];
    const std::size_t hout = dout.dims[2], wout = dout.dims[3];
    dx = TensorT<T>::zeros(in.dims);
    dw = TensorT<T>::zeros(w.dims);
    db = TensorT<T>::zeros({static_cast<std::uint32_t>(cout)});
    const std::size_t in_img = cin * h * wd, out_img = cout * hout * wout;

    for (std::size_t img = 0; img < B; ++img) {
        for (std::size_t oc = 0; oc < cout; ++oc) {
            const T* dout_plane = dout.v.data() + img * out_img + oc * hout * wout;
            T bias_acc = T(0);
            for (std::size_t i = 0; i < hout * wout; ++i) bias_acc += dout_plane[i];
            db.v[oc] += bias_acc;

            for (std::size_t ic = 0; ic < cin; ++ic) {
                const T* in_plane = in.v.data() + img * in_img + ic * h * wd;
                T* dx_plane = dx.v.data() + img * in_img + ic * h * wd;
                const T* w_base = w.v.data() + (oc * cin + ic) * kh * kw;
                T* dw_base = dw.v.data() + (oc * cin + ic) * kh * kw;
                for (std::size_t ky = 0; ky < kh; ++ky) {
                    const int offy = static_cast<int>(ky) - pad;
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                        const int offx = static_cast<int>(kx) - pad;
                        const T wv = w_base[ky * kw + kx];
                        const auto [lo, hi] = conv_span(wout, wd, stride, offx);
                        T w_acc = T(0);
                        for (std::size_t oy = 0; oy < hout; ++oy) {
                            const long long iy = static_cast<long long>(oy) * stride + offy;
                            if (iy < 0 || iy >= static_cast<long long>(h)) continue;
                            const T* in_row = in_plane + static_cast<std::size_t>(iy) * wd;
                            T* dx_row = dx_plane + static_cast<std::size_t>(iy) * wd;
                            const T* dout_row = dout_plane + oy * wout;
                            if (stride == 1) {
                                const T* src = in_row + offx;
                                T* dst = dx_row + offx;
                                for (std::size_t ox = lo; ox < hi; ++ox) {
                                    w_acc += dout_row[ox] * src[ox];
                                    dst[ox] += wv * dout_row[ox];
                                }
                            } else {
                                for (std::size_t ox = lo; ox < hi; ++ox) {
                                    const std::size_t ix = ox * stride + offx;
                                    w_acc += dout_row[ox] * in_row[ix];
                                    dx_row[ix] += wv * dout_row[ox];
                                }
                            }
                        }
                        dw_base[ky * kw + kx] += w_acc;
                    }
                }
            }
        }
    }
}

template <class T>
TensorT<T> relu_forward(const TensorT<T>& in) {
    TensorT<T> out = in;
    for (T& x : out.v) x = std::max(T(0), x);
    return out;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& dout, const TensorT<T>& in) {
    TensorT<T> dx = dout;
    for (std::size_t i = 0; i < dx.v.size(); ++i) {
        if (!(in.v[i] > T(0))) dx.v[i] = T(0);
    }
    return dx;
}

template <class T>
TensorT<T> maxpool_forward(const TensorT<T>& in, int window, int stride,
                           std::vector<std::uint32_t>& argmax) {
    const std::size_t B = in.dims[0], c = in.dims[1], h = in.dims[2], wd = in.dims[3];
    const std::size_t hout = (h - window) / stride + 1;
    const std::size_t wout = (wd - window) / stride + 1;
    auto out = TensorT<T>::zeros({static_cast<std::uint32_t>(B), static_cast<std::uint32_t>(c),
                                  static_cast<std::uint32_t>(hout), static_cast<std::uint32_t>(wout)});
    argmax.assign(out.size(), 0);
    std::size_t o = 0;
    for (std::size_t img = 0; img < B; ++img) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t plane = (img * c + ch) * h * wd;
            for (std::size_t oy = 0; oy < hout; ++oy) {
                for (std::size_t ox = 0; ox < wout; ++ox, ++o) {
                    const std::size_t iy0 = oy * stride, ix0 = ox * stride;
                    // ties keep the first row-major element
                    std::size_t best = plane + iy0 * wd + ix0;
                    T best_v = in.v[best];
                    for (int dy = 0; dy < window; ++dy) {
                        const std::size_t row = plane + (iy0 + dy) * wd + ix0;
                        for (int dx2 = 0; dx2 < window; ++dx2) {
                            if (in.v[row + dx2] > best_v) {
                                best_v = in.v[row + dx2];
                                best = row + dx2;
                            }
                        }
                    }
                    out.v[o] = best_v;
                    argmax[o] = static_cast<std::uint32_t>(best);
                }
            }
        }
    }
    return out;
}

template <class T>
TensorT<T> maxpool_backward(const TensorT<T>& dout, const std::vector<std::uint32_t>& argmax,
                            const std::vector<std::uint32_t>& in_dims) {
    auto dx = TensorT<T>::zeros(in_dims);
    for (std::size_t i = 0; i < dout.v.size(); ++i) {
        dx.v[argmax[i]] += dout.v[i];
    }
    return dx;
}

template <class T>
TensorT<T> dense_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b) {
    const std::size_t B = in.dims[0], fin = in.dims[1], fout = w.dims[0];
    auto out = TensorT<T>::zeros({static_cast<std::uint32_t>(B), static_cast<std::uint32_t>(fout)});
    for (std::size_t img = 0; img < B; ++img) {
        const T* in_row = in.v.data() + img * fin;
        T* out_row = out.v.data() + img * fout;
        for (std::size_t of = 0; of < fout; ++of) {
            const T* w_row = w.v.data() + of * fin;
            T acc = b.v[of];
            for (std::size_t fi = 0; fi < fin; ++fi) acc += w_row[fi] * in_row[fi];
            out_row[of] = acc;
        }
    }
    return out;
}

template <class T>
void dense_backward(const TensorT<T>& dout, const TensorT<T>& in, const TensorT<T>& w,
                    TensorT<T>& dx, TensorT<T>& dw, TensorT<T>& db) {
    const std::size_t B = in.dims[0], fin = in.dims[1], fout = w.dims[0];
    dx = TensorT<T>::zeros(in.dims);
    dw = TensorT<T>::zeros(w.dims);
    db = TensorT<T>::zeros({static_cast<std::uint32_t>(fout)});
    for (std::size_t img = 0; img < B; ++img) {
        const T* in_row = in.v.data() + img * fin;
        const T* dout_row = dout.v.data() + img * fout;
        T* dx_row = dx.v.data() + img * fin;
        for (std::size_t of = 0; of < fout; ++of) {
            const T g = dout_row[of];
            db.v[of] += g;
            const T* w_row = w.v.data() + of * fin;
            T* dw_row = dw.v.data() + of * fin;
            for (std::size_t fi = 0; fi < fin; ++fi) {
                dw_row[fi] += g * in_row[fi];
                dx_row[fi] += g * w_row[fi];
            }
        }
    }
}

template <class T>
TensorT<T> softmax_forward(const TensorT<T>& in) {
    const std::size_t B = in.dims[0], k = in.dims[1];
    TensorT<T> out = in;
    for (std::size_t img = 0; img < B; ++img) {
        T* row = out.v.data() + img * k;
        T m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        T sum = T(0);
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - m);
            sum += row[j];
        }
        for (std::size_t j = 0; j < k; ++j) row[j] /= sum;
    }
    return out;
}

template <class T>
TensorT<T> softmax_backward(const TensorT<T>& dout, const TensorT<T>& out) {
    const std::size_t B = out.dims[0], k = out.dims[1];
    TensorT<T> dx = dout;
    for (std::size_t img = 0; img < B; ++img) {
        const T* o = out.v.data() + img * k;
        const T* g = dout.v.data() + img * k;
        T dot = T(0);
        for (std::size_t j = 0; j < k; ++j) dot += g[j] * o[j];
        T* d = dx.v.data() + img * k;
        for (std::size_t j = 0; j < k; ++j) d[j] = o[j] * (g[j] - dot);
    }
    return dx;
}

// mean over rows; 64-bit accumulation regardless of T
template <class T>
double cross_entropy_batch(const TensorT<T>& probs, const TensorT<T>& onehot) {
    const std::size_t B = probs.dims[0], k = probs.dims[1];
    double total = 0.0;
    for (std::size_t i = 0; i < B * k; ++i) {
        const double t = static_cast<double>(onehot.v[i]);
        if (t != 0.0) {
            const double p = std::max(static_cast<double>(probs.v[i]), kLogClamp);
            total -= t * std::log(p);
        }
    }
    return total / static_cast<double>(B);
}

template <class T>
TensorT<T> cross_entropy_backward(const TensorT<T>& probs, const TensorT<T>& onehot) {
    const std::size_t B = probs.dims[0];
    auto dp = TensorT<T>::zeros(probs.dims);
    for (std::size_t i = 0; i < probs.v.size(); ++i) {
        const T t = onehot.v[i];
        if (t != T(0) && static_cast<double>(probs.v[i]) > kLogClamp) {
            dp.v[i] = -t / probs.v[i] / static_cast<T>(B);
        }
    }
    return dp;
}

template <class T>
struct ForwardTrace {
    std::vector<TensorT<T>> acts; // acts[0] = input, acts[i+1] = layer i output
    std::vector<std::vector<std::uint32_t>> pool_argmax; // per layer, empty unless maxpool
};

template <class T>
TensorT<T> forward_batch(const NetworkSpec& spec, const ParametersT<T>& params,
                         const TensorT<T>& batch, ForwardTrace<T>* trace) {
    if (batch.dims.size() != 4 || batch.dims[1] != static_cast<std::uint32_t>(spec.input_channels) ||
        batch.dims[2] != static_cast<std::uint32_t>(spec.input_h) ||
        batch.dims[3] != static_cast<std::uint32_t>(spec.input_w)) {
        throw std::runtime_error("batch shape does not match network input");
    }
    if (trace) {
        trace->acts.clear();
        trace->pool_argmax.assign(spec.layers.size(), {});
        trace->acts.push_back(batch);
    }
    TensorT<T> cur = batch;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        switch (l.kind) {
            case LayerKind::Conv2d:
                cur = conv_forward(cur, params.layers[i].w, params.layers[i].b, l.stride,
                                   l.padding);
                break;
            case LayerKind::Relu:
                cur = relu_forward(cur);
                break;
            case LayerKind::MaxPool2d: {
                std::vector<std::uint32_t> argmax;
                cur = maxpool_forward(cur, l.window, l.pool_stride, argmax);
                if (trace) trace->pool_argmax[i] = std::move(argmax);
                break;
            }
            case LayerKind::Flatten: {
                const std::uint32_t feats = cur.dims[1] * cur.dims[2] * cur.dims[3];
                cur.dims = {cur.dims[0], feats};
                break;
            }
            case LayerKind::Dense:
                cur = dense_forward(cur, params.layers[i].w, params.layers[i].b);
                break;
            case LayerKind::Softmax:
                cur = softmax_forward(cur);
                break;
        }
        if (trace) trace->acts.push_back(cur);
    }
    return cur;
}

template <class T>
ParametersT<T> backward_batch(const NetworkSpec& spec, const ParametersT<T>& params,
                              const ForwardTrace<T>& trace, const TensorT<T>& onehot) {
    ParametersT<T> grads;
    grads.layers.resize(spec.layers.size());
    TensorT<T> d = cross_entropy_backward(trace.acts.back(), onehot);
    for (std::size_t i = spec.layers.size(); i-- > 0;) {
        const LayerSpec& l = spec.layers[i];
        const TensorT<T>& in = trace.acts[i];
        const TensorT<T>& out = trace.acts[i + 1];
        switch (l.kind) {
            case LayerKind::Softmax:
                d = softmax_backward(d, out);
                break;
            case LayerKind::Dense: {
                auto& g = grads.layers[i];
                g.present = true;
                TensorT<T> dx;
                dense_backward(d, in, params.layers[i].w, dx, g.w, g.b);
                d = std::move(dx);
                break;
            }
            case LayerKind::Flatten:
                d.dims = in.dims;
                break;
            case LayerKind::Relu:
                d = relu_backward(d, in);
                break;
            case LayerKind::MaxPool2d:
                d = maxpool_backward(d, trace.pool_argmax[i], in.dims);
                break;
            case LayerKind::Conv2d: {
                auto& g = grads.layers[i];
                g.present = true;
                TensorT<T> dx;
                conv_backward(d, in, params.layers[i].w, l.stride, l.padding, dx, g.w, g.b);
                d = std::move(dx);
                break;
            }
        }
    }
    return grads;
}

// He-uniform: U(-sqrt(6/fan_in), +sqrt(6/fan_in)); draws are doubles so the
// float and double instantiations share the same stream.
template <class T>
ParametersT<T> he_init(const NetworkSpec& spec, std::uint64_t seed) {
    const auto chain = spec.shape_chain();
    ParametersT<T> params;
    params.layers.resize(spec.layers.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::Conv2d) {
            const std::uint32_t cin = static_cast<std::uint32_t>(chain[i].channels);
            auto& p = params.layers[i];
            p.present = true;
            p.w = TensorT<T>::zeros({static_cast<std::uint32_t>(l.out_channels), cin,
                                     static_cast<std::uint32_t>(l.kernel_h),
                                     static_cast<std::uint32_t>(l.kernel_w)});
            p.b = TensorT<T>::zeros({static_cast<std::uint32_t>(l.out_channels)});
            const double limit = std::sqrt(6.0 / (static_cast<double>(cin) * l.kernel_h * l.kernel_w));
            for (T& x : p.w.v) x = static_cast<T>(rng.uniform(-limit, limit));
        } else if (l.kind == LayerKind::Dense) {
            const std::uint32_t fin = static_cast<std::uint32_t>(chain[i].features);
            auto& p = params.layers[i];
            p.present = true;
            p.w = TensorT<T>::zeros({static_cast<std::uint32_t>(l.out_features), fin});
            p.b = TensorT<T>::zeros({static_cast<std::uint32_t>(l.out_features)});
            const double limit = std::sqrt(6.0 / static_cast<double>(fin));
            for (T& x : p.w.v) x = static_cast<T>(rng.uniform(-limit, limit));
        }
    }
    return params;
}

template <class T>
TensorT<T> onehot_rows(const std::vector<ClassLabel>& labels, int classes) {
    auto t = TensorT<T>::zeros({static_cast<std::uint32_t>(labels.size()),
                                static_cast<std::uint32_t>(classes)});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        t.v[i * classes + static_cast<std::size_t>(labels[i])] = T(1);
    }
    return t;
}

} // namespace pdfuse::cnn::detail
