#include "sgs/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "sgs/common.hpp"

namespace sgs {

namespace {

constexpr double kLeakySlope = 0.2;

Tensor3 conv_forward(const Layer& l, const Tensor3& in) {
  if (in.channels != l.in_channels)
    throw std::invalid_argument("conv: input channel mismatch");
  const int oh = (in.height + 2 * l.pad - l.kernel) / l.stride + 1;
  const int ow = (in.width + 2 * l.pad - l.kernel) / l.stride + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv: input too small");
  Tensor3 out(l.out_channels, oh, ow);
  for (int oc = 0; oc < l.out_channels; ++oc) {
    const float* wbase = l.weight.data() +
                         static_cast<size_t>(oc) * l.in_channels * l.kernel * l.kernel;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double sum = l.bias[oc];
        for (int ic = 0; ic < l.in_channels; ++ic) {
          const double* irow = in.data.data() + in.index(ic, 0, 0);
          const float* wk = wbase + static_cast<size_t>(ic) * l.kernel * l.kernel;
          for (int ky = 0; ky < l.kernel; ++ky) {
            const int iy = oy * l.stride - l.pad + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < l.kernel; ++kx) {
              const int ix = ox * l.stride - l.pad + kx;
              if (ix < 0 || ix >= in.width) continue;
              sum += static_cast<double>(wk[ky * l.kernel + kx]) *
                     irow[static_cast<size_t>(iy) * in.width + ix];
            }
          }
        }
        out.at(oc, oy, ox) = sum;
      }
    }
  }
  return out;
}

void conv_backward(const Layer& l, const Tensor3& in, const Tensor3& d_out, Tensor3& d_in,
                   std::vector<double>* d_weight, std::vector<double>* d_bias) {
  for (int oc = 0; oc < l.out_channels; ++oc) {
    const float* wbase = l.weight.data() +
                         static_cast<size_t>(oc) * l.in_channels * l.kernel * l.kernel;
    double* dwbase = d_weight ? d_weight->data() +
                                    static_cast<size_t>(oc) * l.in_channels * l.kernel * l.kernel
                              : nullptr;
    double bias_sum = 0.0;
    for (int oy = 0; oy < d_out.height; ++oy) {
      for (int ox = 0; ox < d_out.width; ++ox) {
        const double g = d_out.at(oc, oy, ox);
        if (g == 0.0) continue;
        bias_sum += g;
        for (int ic = 0; ic < l.in_channels; ++ic) {
          const double* irow = in.data.data() + in.index(ic, 0, 0);
          double* drow = d_in.data.data() + d_in.index(ic, 0, 0);
          const float* wk = wbase + static_cast<size_t>(ic) * l.kernel * l.kernel;
          double* dwk = dwbase ? dwbase + static_cast<size_t>(ic) * l.kernel * l.kernel : nullptr;
          for (int ky = 0; ky < l.kernel; ++ky) {
            const int iy = oy * l.stride - l.pad + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (int kx = 0; kx < l.kernel; ++kx) {
              const int ix = ox * l.stride - l.pad + kx;
              if (ix < 0 || ix >= in.width) continue;
              const size_t ii = static_cast<size_t>(iy) * in.width + ix;
              drow[ii] += g * static_cast<double>(wk[ky * l.kernel + kx]);
              if (dwk) dwk[ky * l.kernel + kx] += g * irow[ii];
            }
          }
        }
      }
    }
    if (d_bias) (*d_bias)[oc] += bias_sum;
  }
}

Tensor3 shape_after(const Layer& l, const Tensor3& in) {
  switch (l.kind) {
    case LayerKind::Conv:
      return conv_forward(l, in);
    case LayerKind::LeakyRelu: {
      Tensor3 out = in;
      for (double& v : out.data) v = v > 0.0 ? v : kLeakySlope * v;
      return out;
    }
    case LayerKind::Upsample: {
      Tensor3 out(in.channels, in.height * 2, in.width * 2);
      for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < out.height; ++y)
          for (int x = 0; x < out.width; ++x)
            out.at(c, y, x) = in.at(c, y / 2, x / 2);
      return out;
    }
    case LayerKind::Sigmoid: {
      Tensor3 out = in;
      for (double& v : out.data) v = sigmoid(v);
      return out;
    }
    case LayerKind::Softplus: {
      Tensor3 out = in;
      for (double& v : out.data) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
      return out;
    }
  }
  throw std::logic_error("unreachable layer kind");
}

}  // namespace

Tensor3 to_tensor(const ImageBuffer& image) {
  Tensor3 t(3, image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double* p = image.pixel(x, y);
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = p[c];
    }
  return t;
}

ImageBuffer tensor_to_image(const Tensor3& t) {
  if (t.channels != 3) throw std::invalid_argument("tensor_to_image: need 3 channels");
  ImageBuffer img(t.width, t.height);
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x) {
      double* p = img.pixel(x, y);
      for (int c = 0; c < 3; ++c) p[c] = t.at(c, y, x);
    }
  return img;
}

Activations ConvNet::forward(const Tensor3& input) const {
  if (input.height < min_input || input.width < min_input)
    throw std::invalid_argument("forward: input smaller than the network accepts");
  if (input.height % input_multiple != 0 || input.width % input_multiple != 0)
    throw std::invalid_argument("forward: input sides must be divisible by " +
                                std::to_string(input_multiple));
  Activations acts;
  acts.values.reserve(layers.size() + 1);
  acts.values.push_back(input);
  for (const Layer& l : layers) acts.values.push_back(shape_after(l, acts.values.back()));
  return acts;
}

Tensor3 ConvNet::backward(const Activations& acts, std::span<const TapGradient> tap_grads,
                          NetGradients* param_grads) const {
  if (acts.values.size() != layers.size() + 1)
    throw std::invalid_argument("backward: activations do not match network");
  if (param_grads) {
    param_grads->weight.assign(layers.size(), {});
    param_grads->bias.assign(layers.size(), {});
    for (size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].kind == LayerKind::Conv) {
        param_grads->weight[l].assign(layers[l].weight_count(), 0.0);
        param_grads->bias[l].assign(layers[l].out_channels, 0.0);
      }
    }
  }

  const Tensor3& out = acts.values.back();
  Tensor3 grad(out.channels, out.height, out.width);
  auto inject = [&](int layer, Tensor3& g) {
    for (const TapGradient& t : tap_grads) {
      if (t.layer != layer) continue;
      if (!t.grad.same_shape(g)) throw std::invalid_argument("backward: tap gradient shape mismatch");
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += t.grad.data[i];
    }
  };

  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    inject(l, grad);
    const Layer& layer = layers[l];
    const Tensor3& in = acts.values[l];
    const Tensor3& out_l = acts.values[l + 1];
    Tensor3 d_in(in.channels, in.height, in.width);
    switch (layer.kind) {
      case LayerKind::Conv:
        conv_backward(layer, in, grad, d_in,
                      param_grads ? &param_grads->weight[l] : nullptr,
                      param_grads ? &param_grads->bias[l] : nullptr);
        break;
      case LayerKind::LeakyRelu:
        for (size_t i = 0; i < in.data.size(); ++i)
          d_in.data[i] = grad.data[i] * (in.data[i] > 0.0 ? 1.0 : kLeakySlope);
        break;
      case LayerKind::Upsample:
        for (int c = 0; c < out_l.channels; ++c)
          for (int y = 0; y < out_l.height; ++y)
            for (int x = 0; x < out_l.width; ++x)
              d_in.at(c, y / 2, x / 2) += grad.at(c, y, x);
        break;
      case LayerKind::Sigmoid:
        for (size_t i = 0; i < in.data.size(); ++i) {
          const double s = out_l.data[i];
          d_in.data[i] = grad.data[i] * s * (1.0 - s);
        }
        break;
      case LayerKind::Softplus:
        for (size_t i = 0; i < in.data.size(); ++i)
          d_in.data[i] = grad.data[i] * sigmoid(in.data[i]);
        break;
    }
    grad = std::move(d_in);
  }
  inject(-1, grad);
  return grad;
}

size_t ConvNet::parameter_count() const {
  size_t n = 0;
  for (const Layer& l : layers)
    if (l.kind == LayerKind::Conv) n += l.weight_count() + l.bias.size();
  return n;
}

namespace {

Layer make_activation(LayerKind kind) {
  Layer l;
  l.kind = kind;
  return l;
}

Layer make_conv(int in_c, int out_c, int kernel, int stride, std::mt19937_64& rng,
                bool zero_init = false) {
  Layer l;
  l.kind = LayerKind::Conv;
  l.in_channels = in_c;
  l.out_channels = out_c;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = kernel / 2;
  l.weight.assign(l.weight_count(), 0.0f);
  l.bias.assign(out_c, 0.0f);
  if (!zero_init) {
    // Kaiming-uniform with the leaky-ReLU gain.
    const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
    const double fan_in = static_cast<double>(in_c) * kernel * kernel;
    const double bound = gain * std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (float& w : l.weight) w = static_cast<float>(dist(rng));
  }
  return l;
}

void append_stage(ConvNet& net, int in_c, int out_c, std::mt19937_64& rng, bool tapped) {
  net.layers.push_back(make_conv(in_c, out_c, 3, 2, rng));
  net.layers.push_back(make_activation(LayerKind::LeakyRelu));
  if (tapped) net.taps.push_back(static_cast<int>(net.layers.size()) - 1);
}

}  // namespace

ConvNet make_extractor(uint64_t seed) {
  std::mt19937_64 rng(seed);
  ConvNet net;
  net.min_input = 32;
  append_stage(net, 3, 16, rng, true);
  append_stage(net, 16, 32, rng, true);
  append_stage(net, 32, 64, rng, true);
  append_stage(net, 64, 128, rng, true);
  return net;
}

ConvNet make_discriminator(uint64_t seed) {
  std::mt19937_64 rng(seed);
  ConvNet net;
  net.min_input = 64;
  append_stage(net, 3, 16, rng, false);
  append_stage(net, 16, 32, rng, false);
  append_stage(net, 32, 64, rng, false);
  append_stage(net, 64, 128, rng, false);
  net.layers.push_back(make_conv(128, 1, 1, 1, rng, /*zero_init=*/true));
  net.layers.push_back(make_activation(LayerKind::Sigmoid));
  return net;
}

ConvNet make_depthnet(uint64_t seed) {
  std::mt19937_64 rng(seed);
  ConvNet net;
  net.min_input = 16;
  net.input_multiple = 16;  // the decoder must restore the input size exactly
  append_stage(net, 3, 16, rng, true);
  append_stage(net, 16, 32, rng, true);
  append_stage(net, 32, 64, rng, true);
  append_stage(net, 64, 128, rng, true);
  const int dec[] = {128, 64, 32, 16, 8};
  for (int i = 0; i < 4; ++i) {
    net.layers.push_back(make_activation(LayerKind::Upsample));
    net.layers.push_back(make_conv(dec[i], dec[i + 1], 3, 1, rng));
    net.layers.push_back(make_activation(LayerKind::LeakyRelu));
  }
  net.layers.push_back(make_conv(8, 1, 3, 1, rng));
  net.layers.push_back(make_activation(LayerKind::Softplus));
  return net;
}

namespace {

constexpr char kNetMagic[4] = {'S', 'S', 'N', 'W'};
constexpr uint32_t kNetVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("net file: unexpected end of file");
  return v;
}

}  // namespace

void save_net(const std::string& path, const ConvNet& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write(kNetMagic, 4);
  write_pod(os, kNetVersion);
  write_pod(os, static_cast<uint32_t>(net.layers.size()));
  write_pod(os, static_cast<uint32_t>(net.taps.size()));
  write_pod(os, static_cast<uint32_t>(net.min_input));
  write_pod(os, static_cast<uint32_t>(net.input_multiple));
  for (int t : net.taps) write_pod(os, static_cast<int32_t>(t));
  for (const Layer& l : net.layers) {
    write_pod(os, static_cast<uint32_t>(l.kind));
    if (l.kind != LayerKind::Conv) continue;
    write_pod(os, static_cast<uint32_t>(l.in_channels));
    write_pod(os, static_cast<uint32_t>(l.out_channels));
    write_pod(os, static_cast<uint32_t>(l.kernel));
    write_pod(os, static_cast<uint32_t>(l.stride));
    write_pod(os, static_cast<uint32_t>(l.pad));
    os.write(reinterpret_cast<const char*>(l.weight.data()),
             static_cast<std::streamsize>(l.weight.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(l.bias.data()),
             static_cast<std::streamsize>(l.bias.size() * sizeof(float)));
  }
  if (!os) throw DataError("write failed: " + path);
}

ConvNet load_net(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kNetMagic, 4) != 0)
    throw DataError("net file: bad magic in " + path);
  if (read_pod<uint32_t>(is) != kNetVersion)
    throw DataError("net file: unsupported version in " + path);
  const uint32_t n_layers = read_pod<uint32_t>(is);
  const uint32_t n_taps = read_pod<uint32_t>(is);
  if (n_layers > 1000 || n_taps > 1000) throw DataError("net file: implausible counts in " + path);
  ConvNet net;
  net.min_input = static_cast<int>(read_pod<uint32_t>(is));
  net.input_multiple = static_cast<int>(read_pod<uint32_t>(is));
  if (net.min_input < 1 || net.input_multiple < 1)
    throw DataError("net file: bad input constraints in " + path);
  for (uint32_t i = 0; i < n_taps; ++i) net.taps.push_back(read_pod<int32_t>(is));
  for (uint32_t i = 0; i < n_layers; ++i) {
    Layer l;
    const uint32_t kind = read_pod<uint32_t>(is);
    if (kind > static_cast<uint32_t>(LayerKind::Softplus))
      throw DataError("net file: unknown layer kind in " + path);
    l.kind = static_cast<LayerKind>(kind);
    if (l.kind == LayerKind::Conv) {
      l.in_channels = static_cast<int>(read_pod<uint32_t>(is));
      l.out_channels = static_cast<int>(read_pod<uint32_t>(is));
      l.kernel = static_cast<int>(read_pod<uint32_t>(is));
      l.stride = static_cast<int>(read_pod<uint32_t>(is));
      l.pad = static_cast<int>(read_pod<uint32_t>(is));
      if (l.in_channels <= 0 || l.out_channels <= 0 || l.kernel <= 0 || l.stride <= 0 ||
          l.in_channels > 4096 || l.out_channels > 4096 || l.kernel > 15)
        throw DataError("net file: implausible conv shape in " + path);
      l.weight.resize(l.weight_count());
      l.bias.resize(l.out_channels);
      is.read(reinterpret_cast<char*>(l.weight.data()),
              static_cast<std::streamsize>(l.weight.size() * sizeof(float)));
      is.read(reinterpret_cast<char*>(l.bias.data()),
              static_cast<std::streamsize>(l.bias.size() * sizeof(float)));
      if (!is) throw DataError("net file: truncated weights in " + path);
    }
    net.layers.push_back(std::move(l));
  }
  for (int t : net.taps)
    if (t < -1 || t >= static_cast<int>(net.layers.size()))
      throw DataError("net file: tap out of range in " + path);
  return net;
}

}  // namespace sgs
