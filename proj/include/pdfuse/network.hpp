#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace pdfuse::cnn {

enum class LayerKind { Conv2d, Relu, MaxPool2d, Flatten, Dense, Softmax };

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    // conv2d
    int out_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int padding = 0;
    // maxpool2d
    int window = 0;
    int pool_stride = 0;
    // dense
    int out_features = 0;

    static LayerSpec conv2d(int out_channels, int kernel_h, int kernel_w, int stride,
                            int padding);
    static LayerSpec relu();
    static LayerSpec maxpool2d(int window, int stride);
    static LayerSpec flatten();
    static LayerSpec dense(int out_features);
    static LayerSpec softmax();
};

// Shape of the activation between layers: spatial (channels, h, w) before
// flatten, a flat feature count after.
struct Shape {
    bool flat = false;
    int channels = 0;
    int h = 0;
    int w = 0;
    int features = 0;
};

struct NetworkSpec {
    int input_channels = 1;
    int input_h = 0;
    int input_w = 0;
    int classes = 3;
    std::vector<LayerSpec> layers;

    // Shapes entering each layer plus the final output shape; throws when the
    // chain does not validate (size underflow, dense before flatten, missing
    // final softmax over `classes`, ...).
    std::vector<Shape> shape_chain() const;
    void validate() const { (void)shape_chain(); }
    std::size_t parameter_count() const;
};

// The desk-scale default: 4 conv layers (8,16,16,32 channels, 3x3, stride 1,
// pad 1) each followed by ReLU, 2x2 maxpool after conv 2 and 4, flatten,
// dense 64 + ReLU, dense 3, softmax.
NetworkSpec desk_spec(int input_h = 32, int input_w = 32);

// Canonical text form, one line per field, layers in order.
std::string serialize_spec(const NetworkSpec& spec);
NetworkSpec parse_spec(const std::string& text);
NetworkSpec load_spec(const std::filesystem::path& path);
void save_spec(const NetworkSpec& spec, const std::filesystem::path& path);

} // namespace pdfuse::cnn
