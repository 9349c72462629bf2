#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgs/image.hpp"

namespace sgs {

// Dense CHW tensor of doubles.
struct Tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, 0.0) {}

  size_t index(int c, int y, int x) const {
    return (static_cast<size_t>(c) * height + y) * width + x;
  }
  double& at(int c, int y, int x) { return data[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data[index(c, y, x)]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

Tensor3 to_tensor(const ImageBuffer& image);
ImageBuffer tensor_to_image(const Tensor3& t);

enum class LayerKind : uint32_t {
  Conv = 0,       // stride 1 or 2, square kernel, zero padding
  LeakyRelu = 1,  // slope 0.2
  Upsample = 2,   // nearest neighbor, factor 2
  Sigmoid = 3,
  Softplus = 4,
};

// One layer. Conv weights are stored as float32 (the on-disk precision) and
// promoted to double inside the arithmetic, so a save/load round trip leaves
// forward passes bit-identical.
struct Layer {
  LayerKind kind = LayerKind::Conv;
  int in_channels = 0, out_channels = 0;
  int kernel = 0, stride = 1, pad = 0;
  std::vector<float> weight;  // [out][in][ky][kx]
  std::vector<float> bias;    // [out]

  size_t weight_count() const {
    return static_cast<size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

// Stored forward pass: values[0] is the input, values[l + 1] the output of
// layer l.
struct Activations {
  std::vector<Tensor3> values;
  const Tensor3& output() const { return values.back(); }
  const Tensor3& layer_output(int layer) const { return values[layer + 1]; }
};

// Gradient of a loss with respect to a tensor exposed by the forward pass:
// layer == -1 addresses the network input, otherwise the layer's output.
struct TapGradient {
  int layer = -1;
  Tensor3 grad;
};

// Per-layer parameter gradients (empty vectors for parameter-free layers).
struct NetGradients {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;
};

// Sequential convolutional network. `taps` lists layers whose outputs are
// exposed to losses (in addition to the final output).
struct ConvNet {
  std::vector<Layer> layers;
  std::vector<int> taps;
  int min_input = 1;       // smallest accepted input side
  int input_multiple = 1;  // input sides must be divisible by this

  // Runs the network, recording every intermediate tensor. Throws
  // std::invalid_argument on a channel/shape mismatch or an input that
  // violates min_input/input_multiple.
  Activations forward(const Tensor3& input) const;

  // Propagates tap gradients (any subset of {-1-addressable tensors}) back
  // to the input. When `param_grads` is non-null it is filled with weight
  // and bias gradients. `acts` must come from forward() on this net.
  Tensor3 backward(const Activations& acts, std::span<const TapGradient> tap_grads,
                   NetGradients* param_grads = nullptr) const;

  size_t parameter_count() const;
};

// Four stride-2 stages (3->16->32->64->128, 3x3 kernels, leaky ReLU), one
// tap after each stage. Input must be at least 32x32.
ConvNet make_extractor(uint64_t seed);

// Patch discriminator: four stride-2 stages, then a zero-initialized 1x1
// conv and a sigmoid. Emits an H/16 x W/16 map of real-probabilities, 0.5
// everywhere at initialization. Input must be at least 64x64.
ConvNet make_discriminator(uint64_t seed);

// Depth predictor: the extractor's encoder with a tap after each stage,
// then a mirrored nearest-upsample decoder and a softplus output head.
// Input sides must be divisible by 16.
ConvNet make_depthnet(uint64_t seed);

// Raw little-endian float32 weight container with per-layer kind tags.
void save_net(const std::string& path, const ConvNet& net);
ConvNet load_net(const std::string& path);

}  // namespace sgs
