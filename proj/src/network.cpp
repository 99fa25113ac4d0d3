#include "pdfuse/network.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pdfuse::cnn {

LayerSpec LayerSpec::conv2d(int out_channels, int kernel_h, int kernel_w, int stride,
                            int padding) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.out_channels = out_channels;
    l.kernel_h = kernel_h;
    l.kernel_w = kernel_w;
    l.stride = stride;
    l.padding = padding;
    return l;
}

LayerSpec LayerSpec::relu() {
    LayerSpec l;
    l.kind = LayerKind::Relu;
    return l;
}

LayerSpec LayerSpec::maxpool2d(int window, int stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool2d;
    l.window = window;
    l.pool_stride = stride;
    return l;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}

LayerSpec LayerSpec::dense(int out_features) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.out_features = out_features;
    return l;
}

LayerSpec LayerSpec::softmax() {
    LayerSpec l;
    l.kind = LayerKind::Softmax;
    return l;
}

std::vector<Shape> NetworkSpec::shape_chain() const {
    if (input_channels < 1 || input_h < 1 || input_w < 1) {
        throw std::runtime_error("network input shape must be positive");
    }
    if (classes < 2) {
        throw std::runtime_error("network needs at least 2 classes");
    }
    if (layers.empty()) {
        throw std::runtime_error("network has no layers");
    }

    std::vector<Shape> chain;
    Shape cur;
    cur.channels = input_channels;
    cur.h = input_h;
    cur.w = input_w;
    chain.push_back(cur);

    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::Conv2d: {
                if (cur.flat) throw std::runtime_error("conv2d after flatten");
                if (l.out_channels < 1 || l.kernel_h < 1 || l.kernel_w < 1 || l.stride < 1 ||
                    l.padding < 0) {
                    throw std::runtime_error("invalid conv2d parameters");
                }
                const int h = (cur.h + 2 * l.padding - l.kernel_h) / l.stride + 1;
                const int w = (cur.w + 2 * l.padding - l.kernel_w) / l.stride + 1;
                if (cur.h + 2 * l.padding < l.kernel_h || cur.w + 2 * l.padding < l.kernel_w) {
                    throw std::runtime_error("conv2d kernel larger than padded input");
                }
                cur.channels = l.out_channels;
                cur.h = h;
                cur.w = w;
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::MaxPool2d: {
                if (cur.flat) throw std::runtime_error("maxpool2d after flatten");
                if (l.window < 1 || l.pool_stride < 1) {
                    throw std::runtime_error("invalid maxpool2d parameters");
                }
                if (cur.h < l.window || cur.w < l.window) {
                    throw std::runtime_error("maxpool2d window larger than input");
                }
                cur.h = (cur.h - l.window) / l.pool_stride + 1;
                cur.w = (cur.w - l.window) / l.pool_stride + 1;
                break;
            }
            case LayerKind::Flatten: {
                if (cur.flat) throw std::runtime_error("flatten applied twice");
                cur.flat = true;
                cur.features = cur.channels * cur.h * cur.w;
                cur.channels = cur.h = cur.w = 0;
                break;
            }
            case LayerKind::Dense: {
                if (!cur.flat) throw std::runtime_error("dense before flatten");
                if (l.out_features < 1) throw std::runtime_error("invalid dense parameters");
                cur.features = l.out_features;
                break;
            }
            case LayerKind::Softmax: {
                if (!cur.flat) throw std::runtime_error("softmax before flatten");
                if (i + 1 != layers.size()) throw std::runtime_error("softmax must be the final layer");
                break;
            }
        }
        chain.push_back(cur);
    }

    if (layers.back().kind != LayerKind::Softmax) {
        throw std::runtime_error("final layer must be softmax");
    }
    if (chain.back().features != classes) {
        throw std::runtime_error("final feature count " + std::to_string(chain.back().features) +
                                 " does not match class count " + std::to_string(classes));
    }
    return chain;
}

std::size_t NetworkSpec::parameter_count() const {
    const auto chain = shape_chain();
    std::size_t total = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const Shape& in = chain[i];
        if (l.kind == LayerKind::Conv2d) {
            total += static_cast<std::size_t>(l.out_channels) * in.channels * l.kernel_h *
                         l.kernel_w +
                     static_cast<std::size_t>(l.out_channels);
        } else if (l.kind == LayerKind::Dense) {
            total += static_cast<std::size_t>(l.out_features) * in.features +
                     static_cast<std::size_t>(l.out_features);
        }
    }
    return total;
}

NetworkSpec desk_spec(int input_h, int input_w) {
    NetworkSpec spec;
    spec.input_channels = 1;
    spec.input_h = input_h;
    spec.input_w = input_w;
    spec.classes = 3;
    spec.layers = {
        LayerSpec::conv2d(8, 3, 3, 1, 1),  LayerSpec::relu(),
        LayerSpec::conv2d(16, 3, 3, 1, 1), LayerSpec::relu(),
        LayerSpec::maxpool2d(2, 2),
        LayerSpec::conv2d(16, 3, 3, 1, 1), LayerSpec::relu(),
        LayerSpec::conv2d(32, 3, 3, 1, 1), LayerSpec::relu(),
        LayerSpec::maxpool2d(2, 2),
        LayerSpec::flatten(),
        LayerSpec::dense(64),              LayerSpec::relu(),
        LayerSpec::dense(3),
        LayerSpec::softmax(),
    };
    return spec;
}

std::string serialize_spec(const NetworkSpec& spec) {
    std::ostringstream out;
    out << "input_channels=" << spec.input_channels << '\n';
    out << "input_height=" << spec.input_h << '\n';
    out << "input_width=" << spec.input_w << '\n';
    out << "classes=" << spec.classes << '\n';
    for (const LayerSpec& l : spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv2d:
                out << "layer=conv2d out_channels=" << l.out_channels << " kernel_h=" << l.kernel_h
                    << " kernel_w=" << l.kernel_w << " stride=" << l.stride
                    << " padding=" << l.padding << '\n';
                break;
            case LayerKind::Relu:
                out << "layer=relu\n";
                break;
            case LayerKind::MaxPool2d:
                out << "layer=maxpool2d window=" << l.window << " stride=" << l.pool_stride
                    << '\n';
                break;
            case LayerKind::Flatten:
                out << "layer=flatten\n";
                break;
            case LayerKind::Dense:
                out << "layer=dense out_features=" << l.out_features << '\n';
                break;
            case LayerKind::Softmax:
                out << "layer=softmax\n";
                break;
        }
    }
    return out.str();
}

namespace {

std::map<std::string, std::string> parse_pairs(std::istringstream& rest) {
    std::map<std::string, std::string> pairs;
    std::string token;
    while (rest >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("malformed layer attribute: " + token);
        }
        pairs[token.substr(0, eq)] = token.substr(eq + 1);
    }
    return pairs;
}

int require_int(const std::map<std::string, std::string>& pairs, const std::string& key) {
    auto it = pairs.find(key);
    if (it == pairs.end()) {
        throw std::runtime_error("missing layer attribute: " + key);
    }
    return std::stoi(it->second);
}

} // namespace

NetworkSpec parse_spec(const std::string& text) {
    NetworkSpec spec;
    spec.input_channels = spec.input_h = spec.input_w = 0;
    spec.classes = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("malformed spec line: " + line);
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "input_channels") {
            spec.input_channels = std::stoi(value);
        } else if (key == "input_height") {
            spec.input_h = std::stoi(value);
        } else if (key == "input_width") {
            spec.input_w = std::stoi(value);
        } else if (key == "classes") {
            spec.classes = std::stoi(value);
        } else if (key == "layer") {
            std::istringstream rest(value);
            std::string kind;
            rest >> kind;
            if (kind == "conv2d") {
                const auto pairs = parse_pairs(rest);
                spec.layers.push_back(LayerSpec::conv2d(
                    require_int(pairs, "out_channels"), require_int(pairs, "kernel_h"),
                    require_int(pairs, "kernel_w"), require_int(pairs, "stride"),
                    require_int(pairs, "padding")));
            } else if (kind == "relu") {
                spec.layers.push_back(LayerSpec::relu());
            } else if (kind == "maxpool2d") {
                const auto pairs = parse_pairs(rest);
                spec.layers.push_back(
                    LayerSpec::maxpool2d(require_int(pairs, "window"), require_int(pairs, "stride")));
            } else if (kind == "flatten") {
                spec.layers.push_back(LayerSpec::flatten());
            } else if (kind == "dense") {
                const auto pairs = parse_pairs(rest);
                spec.layers.push_back(LayerSpec::dense(require_int(pairs, "out_features")));
            } else if (kind == "softmax") {
                spec.layers.push_back(LayerSpec::softmax());
            } else {
                throw std::runtime_error("unknown layer kind: " + kind);
            }
        } else {
            throw std::runtime_error("unknown spec key: " + key);
        }
    }
    spec.validate();
    return spec;
}

NetworkSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open network spec: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str());
}

void save_spec(const NetworkSpec& spec, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open network spec for writing: " + path.string());
    }
    out << serialize_spec(spec);
    if (!out) {
        throw std::runtime_error("write failed for network spec: " + path.string());
    }
}

} // namespace pdfuse::cnn
