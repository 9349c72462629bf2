#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "fd_check.hpp"
#include "sgs/common.hpp"
#include "sgs/nets.hpp"

using namespace sgs;

TEST_SUITE_BEGIN("nets");

namespace {

Tensor3 random_tensor(int c, int h, int w, std::mt19937_64& rng, double span = 1.0) {
  Tensor3 t(c, h, w);
  std::uniform_real_distribution<double> u(-span, span);
  for (double& v : t.data) v = u(rng);
  return t;
}

Layer random_conv(int in_c, int out_c, int kernel, int stride, int pad, std::mt19937_64& rng) {
  Layer l;
  l.kind = LayerKind::Conv;
  l.in_channels = in_c;
  l.out_channels = out_c;
  l.kernel = kernel;
  l.stride = stride;
  l.pad = pad;
  l.weight.resize(l.weight_count());
  l.bias.resize(out_c);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (float& w : l.weight) w = static_cast<float>(u(rng));
  for (float& b : l.bias) b = static_cast<float>(u(rng));
  return l;
}

// Direct convolution sum, written independently of the library loops.
Tensor3 naive_conv(const Layer& l, const Tensor3& in) {
  const int oh = (in.height + 2 * l.pad - l.kernel) / l.stride + 1;
  const int ow = (in.width + 2 * l.pad - l.kernel) / l.stride + 1;
  Tensor3 out(l.out_channels, oh, ow);
  for (int oc = 0; oc < l.out_channels; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = l.bias[oc];
        for (int ic = 0; ic < l.in_channels; ++ic)
          for (int ky = 0; ky < l.kernel; ++ky)
            for (int kx = 0; kx < l.kernel; ++kx) {
              const int iy = oy * l.stride + ky - l.pad;
              const int ix = ox * l.stride + kx - l.pad;
              if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) continue;
              acc += static_cast<double>(
                         l.weight[((static_cast<size_t>(oc) * l.in_channels + ic) * l.kernel + ky) *
                                      l.kernel +
                                  kx]) *
                     in.at(ic, iy, ix);
            }
        out.at(oc, oy, ox) = acc;
      }
  return out;
}

ConvNet single_layer_net(Layer l) {
  ConvNet net;
  net.layers.push_back(std::move(l));
  return net;
}

// Probe loss: fixed random weighting of the final output.
struct OutputProbe {
  Tensor3 weights;
  double operator()(const Tensor3& out) const {
    double s = 0.0;
    for (size_t i = 0; i < out.data.size(); ++i) s += out.data[i] * weights.data[i];
    return s;
  }
};

void check_net_gradients(const ConvNet& net, Tensor3 input, std::mt19937_64& rng,
                         int max_input_slots = -1) {
  Activations acts = net.forward(input);
  OutputProbe probe{random_tensor(acts.output().channels, acts.output().height,
                                  acts.output().width, rng)};
  std::vector<TapGradient> taps;
  taps.push_back({static_cast<int>(net.layers.size()) - 1, probe.weights});
  NetGradients param_grads;
  const Tensor3 d_input = net.backward(acts, taps, &param_grads);

  const auto eval = [&] { return probe(net.forward(input).output()); };
  std::string msg;

  size_t n_slots = input.data.size();
  if (max_input_slots > 0) n_slots = std::min<size_t>(n_slots, max_input_slots);
  const size_t stride = std::max<size_t>(1, input.data.size() / n_slots);
  for (size_t i = 0; i < input.data.size(); i += stride) {
    CAPTURE(i);
    CHECK_MESSAGE(testutil::check_gradient(&input.data[i], d_input.data[i], eval, &msg),
                  "input ", msg);
  }

  // Weight and bias gradients need mutable access to the layer parameters.
  ConvNet& mutable_net = const_cast<ConvNet&>(net);
  for (size_t l = 0; l < net.layers.size(); ++l) {
    if (net.layers[l].kind != LayerKind::Conv) continue;
    Layer& layer = mutable_net.layers[l];
    for (size_t i = 0; i < layer.weight.size(); ++i) {
      CAPTURE(l);
      CAPTURE(i);
      CHECK_MESSAGE(
          testutil::check_gradient_f32(&layer.weight[i], param_grads.weight[l][i], eval, &msg),
          "weight ", msg);
    }
    for (size_t i = 0; i < layer.bias.size(); ++i)
      CHECK_MESSAGE(
          testutil::check_gradient_f32(&layer.bias[i], param_grads.bias[l][i], eval, &msg),
          "bias ", msg);
  }
}

}  // namespace

TEST_CASE("conv forward matches a naive direct sum") {
  std::mt19937_64 rng(51);
  struct Config {
    int in_c, out_c, k, stride, pad, h, w;
  };
  const Config configs[] = {
      {2, 3, 3, 1, 1, 6, 5}, {3, 2, 3, 2, 1, 8, 8}, {3, 4, 1, 1, 0, 5, 7}, {1, 1, 3, 2, 1, 9, 9}};
  for (const Config& c : configs) {
    const Layer l = random_conv(c.in_c, c.out_c, c.k, c.stride, c.pad, rng);
    const Tensor3 in = random_tensor(c.in_c, c.h, c.w, rng);
    const ConvNet net = single_layer_net(l);
    const Tensor3 out = net.forward(in).output();
    const Tensor3 expected = naive_conv(l, in);
    REQUIRE(out.same_shape(expected));
    for (size_t i = 0; i < out.data.size(); ++i)
      CHECK(out.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("builder architectures produce the documented shapes") {
  std::mt19937_64 rng(52);
  const Tensor3 input = random_tensor(3, 64, 64, rng);

  const ConvNet extractor = make_extractor(7);
  const Activations ea = extractor.forward(input);
  REQUIRE(extractor.taps.size() == 4);
  const int channels[] = {16, 32, 64, 128};
  const int sides[] = {32, 16, 8, 4};
  for (int t = 0; t < 4; ++t) {
    const Tensor3& f = ea.layer_output(extractor.taps[t]);
    CHECK(f.channels == channels[t]);
    CHECK(f.height == sides[t]);
    CHECK(f.width == sides[t]);
  }

  const ConvNet disc = make_discriminator(7);
  const Tensor3& patch = disc.forward(input).output();
  CHECK(patch.channels == 1);
  CHECK(patch.height == 4);
  CHECK(patch.width == 4);

  const ConvNet depth = make_depthnet(7);
  const Activations da = depth.forward(input);
  CHECK(da.output().channels == 1);
  CHECK(da.output().height == 64);
  CHECK(da.output().width == 64);
  REQUIRE(depth.taps.size() == 4);
  for (double v : da.output().data) CHECK(v >= 0.0);  // softplus head
}

TEST_CASE("initialization is seeded, biases are zero, discriminator starts at 0.5") {
  const ConvNet a = make_extractor(123);
  const ConvNet b = make_extractor(123);
  const ConvNet c = make_extractor(124);
  REQUIRE(a.layers.size() == b.layers.size());
  bool all_equal = true, any_diff = false;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].kind != LayerKind::Conv) continue;
    all_equal = all_equal && a.layers[l].weight == b.layers[l].weight;
    any_diff = any_diff || a.layers[l].weight != c.layers[l].weight;
    for (float bias : a.layers[l].bias) CHECK(bias == 0.0f);
  }
  CHECK(all_equal);
  CHECK(any_diff);

  std::mt19937_64 rng(53);
  const ConvNet disc = make_discriminator(9);
  const Tensor3 out = disc.forward(random_tensor(3, 64, 64, rng)).output();
  for (double v : out.data) CHECK(v == 0.5);
}

TEST_CASE("activation layer values") {
  ConvNet lrelu;
  lrelu.layers.push_back(Layer{});
  lrelu.layers.back().kind = LayerKind::LeakyRelu;
  Tensor3 in(1, 1, 3);
  in.data = {-1.0, 0.0, 2.0};
  const Tensor3 out = lrelu.forward(in).output();
  CHECK(out.data[0] == doctest::Approx(-0.2));
  CHECK(out.data[1] == 0.0);
  CHECK(out.data[2] == 2.0);

  ConvNet up;
  up.layers.push_back(Layer{});
  up.layers.back().kind = LayerKind::Upsample;
  Tensor3 uin(1, 1, 2);
  uin.data = {1.0, 2.0};
  const Tensor3 uout = up.forward(uin).output();
  REQUIRE(uout.height == 2);
  REQUIRE(uout.width == 4);
  CHECK(uout.at(0, 0, 0) == 1.0);
  CHECK(uout.at(0, 1, 1) == 1.0);
  CHECK(uout.at(0, 0, 2) == 2.0);
  CHECK(uout.at(0, 1, 3) == 2.0);

  ConvNet sig;
  sig.layers.push_back(Layer{});
  sig.layers.back().kind = LayerKind::Sigmoid;
  Tensor3 sin(1, 1, 1);
  sin.data = {0.0};
  CHECK(sig.forward(sin).output().data[0] == 0.5);

  ConvNet soft;
  soft.layers.push_back(Layer{});
  soft.layers.back().kind = LayerKind::Softplus;
  Tensor3 pin(1, 1, 4);
  pin.data = {0.0, 50.0, -50.0, 1.0};
  const Tensor3 pout = soft.forward(pin).output();
  CHECK(pout.data[0] == doctest::Approx(std::log(2.0)));
  CHECK(pout.data[1] == doctest::Approx(50.0));
  CHECK(pout.data[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pout.data[3] == doctest::Approx(std::log1p(std::exp(1.0))));
}

TEST_CASE("every layer type passes a finite-difference gradient check") {
  std::mt19937_64 rng(54);

  SUBCASE("conv 3x3 stride 1") {
    check_net_gradients(single_layer_net(random_conv(2, 3, 3, 1, 1, rng)),
                        random_tensor(2, 5, 6, rng), rng);
  }
  SUBCASE("conv 3x3 stride 2") {
    check_net_gradients(single_layer_net(random_conv(3, 2, 3, 2, 1, rng)),
                        random_tensor(3, 8, 8, rng), rng);
  }
  SUBCASE("conv 1x1") {
    check_net_gradients(single_layer_net(random_conv(3, 4, 1, 1, 0, rng)),
                        random_tensor(3, 4, 4, rng), rng);
  }
  SUBCASE("leaky relu") {
    ConvNet net;
    net.layers.push_back(Layer{});
    net.layers.back().kind = LayerKind::LeakyRelu;
    check_net_gradients(net, random_tensor(2, 6, 6, rng), rng);
  }
  SUBCASE("upsample") {
    ConvNet net;
    net.layers.push_back(Layer{});
    net.layers.back().kind = LayerKind::Upsample;
    check_net_gradients(net, random_tensor(2, 3, 4, rng), rng);
  }
  SUBCASE("sigmoid") {
    ConvNet net;
    net.layers.push_back(Layer{});
    net.layers.back().kind = LayerKind::Sigmoid;
    check_net_gradients(net, random_tensor(2, 4, 4, rng), rng);
  }
  SUBCASE("softplus") {
    ConvNet net;
    net.layers.push_back(Layer{});
    net.layers.back().kind = LayerKind::Softplus;
    check_net_gradients(net, random_tensor(2, 4, 4, rng), rng);
  }
}

TEST_CASE("chained layers with a tap injection match finite differences") {
  std::mt19937_64 rng(55);
  ConvNet net;
  net.layers.push_back(random_conv(2, 3, 3, 2, 1, rng));
  Layer lr;
  lr.kind = LayerKind::LeakyRelu;
  net.layers.push_back(lr);
  net.layers.push_back(random_conv(3, 2, 3, 1, 1, rng));
  net.layers.push_back(lr);
  net.taps = {1, 3};

  Tensor3 input = random_tensor(2, 8, 8, rng);
  Activations acts = net.forward(input);
  const OutputProbe tap_probe{random_tensor(3, 4, 4, rng)};
  const OutputProbe out_probe{random_tensor(2, 4, 4, rng)};

  std::vector<TapGradient> taps;
  taps.push_back({1, tap_probe.weights});
  taps.push_back({3, out_probe.weights});
  NetGradients param_grads;
  const Tensor3 d_input = net.backward(acts, taps, &param_grads);

  const auto eval = [&] {
    const Activations a = net.forward(input);
    return tap_probe(a.layer_output(1)) + out_probe(a.output());
  };
  std::string msg;
  for (size_t i = 0; i < input.data.size(); ++i)
    CHECK_MESSAGE(testutil::check_gradient(&input.data[i], d_input.data[i], eval, &msg),
                  "input ", msg);
  for (size_t l = 0; l < net.layers.size(); ++l) {
    if (net.layers[l].kind != LayerKind::Conv) continue;
    for (size_t i = 0; i < net.layers[l].weight.size(); i += 3)
      CHECK_MESSAGE(testutil::check_gradient_f32(&net.layers[l].weight[i],
                                                 param_grads.weight[l][i], eval, &msg),
                    "weight ", msg);
  }
}

TEST_CASE("input contract violations throw") {
  std::mt19937_64 rng(56);
  const ConvNet extractor = make_extractor(1);
  CHECK_THROWS_AS(extractor.forward(random_tensor(3, 16, 16, rng)), std::invalid_argument);
  const ConvNet depth = make_depthnet(1);
  CHECK_THROWS_AS(depth.forward(random_tensor(3, 24, 24, rng)), std::invalid_argument);
  const ConvNet disc = make_discriminator(1);
  CHECK_THROWS_AS(disc.forward(random_tensor(3, 32, 32, rng)), std::invalid_argument);
  CHECK_THROWS_AS(extractor.forward(random_tensor(1, 64, 64, rng)), std::invalid_argument);
}

TEST_CASE("weight files round-trip bitwise and forward identically") {
  std::mt19937_64 rng(57);
  const std::string path = (std::filesystem::temp_directory_path() / "nets_roundtrip.ssnw").string();
  const ConvNet original = make_depthnet(99);
  save_net(path, original);
  const ConvNet loaded = load_net(path);

  REQUIRE(loaded.layers.size() == original.layers.size());
  CHECK(loaded.taps == original.taps);
  CHECK(loaded.min_input == original.min_input);
  CHECK(loaded.input_multiple == original.input_multiple);
  for (size_t l = 0; l < original.layers.size(); ++l) {
    CHECK(loaded.layers[l].kind == original.layers[l].kind);
    CHECK(loaded.layers[l].weight == original.layers[l].weight);
    CHECK(loaded.layers[l].bias == original.layers[l].bias);
  }

  const Tensor3 input = random_tensor(3, 32, 32, rng);
  CHECK(original.forward(input).output().data == loaded.forward(input).output().data);

  // A second save must produce identical bytes.
  const std::string path2 = (std::filesystem::temp_directory_path() / "nets_roundtrip2.ssnw").string();
  save_net(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("malformed weight files are rejected") {
  const std::string path = (std::filesystem::temp_directory_path() / "nets_bad.ssnw").string();
  CHECK_THROWS_AS(load_net("/nonexistent/net.ssnw"), DataError);

  {
    std::ofstream os(path, std::ios::binary);
    os << "XXXX rubbish";
  }
  CHECK_THROWS_AS(load_net(path), DataError);

  save_net(path, make_extractor(3));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  CHECK_THROWS_AS(load_net(path), DataError);
  std::filesystem::remove(path);
}

TEST_SUITE_END();
