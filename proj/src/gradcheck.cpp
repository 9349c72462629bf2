#include "sgs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "sgs/losses.hpp"
#include "sgs/renderer.hpp"

namespace sgs {

namespace {

constexpr double kFdStep = 1e-5;

bool grads_agree(double analytic, double numeric) {
  const double err = std::abs(analytic - numeric);
  const double mag = std::max(std::abs(analytic), std::abs(numeric));
  return mag < kGradAbsTol ? err < kGradAbsTol : err / mag < kGradRelTol;
}

struct Accum {
  GradCheckEntry entry;

  explicit Accum(std::string name) { entry.name = std::move(name); }

  void add(double analytic, double numeric) {
    ++entry.probes;
    const double err = std::abs(analytic - numeric);
    const double mag = std::max(std::abs(analytic), std::abs(numeric));
    if (mag < kGradAbsTol) {
      entry.worst_abs = std::max(entry.worst_abs, err);
      if (err >= kGradAbsTol) entry.pass = false;
    } else {
      entry.worst_rel = std::max(entry.worst_rel, err / mag);
      if (err / mag >= kGradRelTol) entry.pass = false;
    }
  }

  // The rendering loss is only piecewise smooth: footprint culling, the
  // alpha floor, and the transmittance early-stop each switch a term on or
  // off at a parameter threshold. A finite-difference step that straddles
  // such a threshold measures the jump divided by the step, an estimate
  // that keeps changing as the step shrinks, while a genuine gradient
  // mismatch stays stable across step sizes. Failing probes retry with
  // smaller steps before being recorded.
  template <typename FdAt>
  void add_refining(double analytic, FdAt&& fd_at) {
    double numeric = fd_at(kFdStep);
    for (double h = kFdStep * 0.1; !grads_agree(analytic, numeric) && h >= kFdStep * 1e-3;
         h *= 0.1)
      numeric = fd_at(h);
    add(analytic, numeric);
  }
};

GaussianCloud sample_cloud(std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GaussianCloud cloud;
  cloud.sh_degree = 1;
  cloud.background = {0.5 + 0.4 * u(rng), 0.5 + 0.4 * u(rng), 0.5 + 0.4 * u(rng)};
  std::vector<double> sh(cloud.appearance_stride());
  for (int i = 0; i < count; ++i) {
    for (double& v : sh) v = 0.4 * u(rng);
    cloud.add_point({u(rng), u(rng), 4.0 + 2.0 * u(rng)},
                    {-1.8 + 0.7 * u(rng), -1.8 + 0.7 * u(rng), -1.8 + 0.7 * u(rng)},
                    {1.0 + 0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng)},
                    2.5 * u(rng), sh);
  }
  return cloud;
}

Camera frontal_camera(int size) {
  Camera cam;
  cam.fx = cam.fy = 40.0;
  cam.cx = cam.cy = size / 2.0;
  cam.width = cam.height = size;
  return cam;
}

ImageBuffer random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  ImageBuffer img(w, h);
  for (double& v : img.data) v = u(rng);
  return img;
}

}  // namespace

bool GradCheckReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const GradCheckEntry& e) { return e.pass; });
}

GradCheckReport check_cloud_gradients(uint64_t seed, int scene_count) {
  std::mt19937_64 rng(seed);
  const Camera cam = frontal_camera(32);

  Accum pos("position"), scale("log_scale"), rot("rotation"), opa("opacity"), color("color");

  for (int s = 0; s < scene_count; ++s) {
    GaussianCloud cloud = sample_cloud(rng, 5 + static_cast<int>(rng() % 4));
    const ImageBuffer target = render(sample_cloud(rng, 6), cam);

    const auto loss_at = [&](const GaussianCloud& c) {
      return loss_rgb(render(c, cam), target).first;
    };
    auto [base, grad] = loss_rgb(render(cloud, cam), target);
    (void)base;
    const CloudGradients analytic = render_backward(cloud, cam, grad);

    const auto probe = [&](double& param, double analytic_value, Accum& acc) {
      const double saved = param;
      acc.add_refining(analytic_value, [&](double h) {
        param = saved + h;
        const double up = loss_at(cloud);
        param = saved - h;
        const double down = loss_at(cloud);
        param = saved;
        return (up - down) / (2.0 * h);
      });
    };

    for (size_t i = 0; i < cloud.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        probe(cloud.positions[i][k], analytic.positions[i][k], pos);
        probe(cloud.log_scales[i][k], analytic.log_scales[i][k], scale);
      }
      for (int k = 0; k < 4; ++k)
        probe(cloud.rotations[i][k], analytic.rotations[i][k], rot);
      probe(cloud.opacity_logits[i], analytic.opacity_logits[i], opa);
    }
    for (size_t j = 0; j < cloud.sh_coeffs.size(); ++j)
      probe(cloud.sh_coeffs[j], analytic.sh_coeffs[j], color);
  }

  GradCheckReport report;
  for (Accum* a : {&pos, &scale, &rot, &opa, &color}) report.entries.push_back(a->entry);
  return report;
}

namespace {

Layer random_conv(std::mt19937_64& rng, int in_ch, int out_ch, int kernel, int stride) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Layer layer;
  layer.kind = LayerKind::Conv;
  layer.in_channels = in_ch;
  layer.out_channels = out_ch;
  layer.kernel = kernel;
  layer.stride = stride;
  layer.pad = kernel / 2;
  layer.weight.resize(layer.weight_count());
  layer.bias.resize(out_ch);
  for (float& w : layer.weight) w = static_cast<float>(u(rng));
  for (float& b : layer.bias) b = static_cast<float>(u(rng));
  return layer;
}

// Input values bounded away from zero so the leaky-ReLU kink cannot sit
// inside a finite-difference step.
Tensor3 random_tensor(std::mt19937_64& rng, int c, int h, int w) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor3 t(c, h, w);
  for (double& v : t.data) v = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return t;
}

// Scalar objective: mean squared activation of the final output plus, when
// the net declares taps, of each tapped tensor.
double net_objective(const ConvNet& net, const Activations& acts,
                     std::vector<TapGradient>* tap_grads) {
  double total = 0.0;
  std::vector<int> watched = net.taps;
  watched.push_back(static_cast<int>(net.layers.size()) - 1);
  for (int layer : watched) {
    const Tensor3& t = acts.layer_output(layer);
    double term = 0.0;
    for (double v : t.data) term += v * v;
    total += term / static_cast<double>(t.size());
    if (tap_grads) {
      TapGradient tg;
      tg.layer = layer;
      tg.grad = Tensor3(t.channels, t.height, t.width);
      for (size_t i = 0; i < t.data.size(); ++i)
        tg.grad.data[i] = 2.0 * t.data[i] / static_cast<double>(t.size());
      tap_grads->push_back(std::move(tg));
    }
  }
  return total;
}

void check_one_net(const ConvNet& net, const std::string& label, std::mt19937_64& rng,
                   GradCheckReport& report) {
  const Tensor3 input = random_tensor(rng, net.layers.front().kind == LayerKind::Conv
                                               ? net.layers.front().in_channels
                                               : 3,
                                      8, 8);
  const Activations acts = net.forward(input);
  std::vector<TapGradient> taps;
  net_objective(net, acts, &taps);
  NetGradients params;
  const Tensor3 d_input = net.backward(acts, taps, &params);

  const auto objective_at = [&](const Tensor3& x, const ConvNet& n) {
    const Activations a = n.forward(x);
    return net_objective(n, a, nullptr);
  };

  Accum in_acc(label + "_input");
  std::uniform_int_distribution<size_t> pick(0, input.data.size() - 1);
  Tensor3 probe = input;
  for (int p = 0; p < 24; ++p) {
    const size_t idx = pick(rng);
    const double saved = probe.data[idx];
    probe.data[idx] = saved + kFdStep;
    const double up = objective_at(probe, net);
    probe.data[idx] = saved - kFdStep;
    const double down = objective_at(probe, net);
    probe.data[idx] = saved;
    in_acc.add(d_input.data[idx], (up - down) / (2.0 * kFdStep));
  }
  report.entries.push_back(in_acc.entry);

  bool has_params = false;
  for (const Layer& l : net.layers) has_params |= !l.weight.empty();
  if (!has_params) return;

  Accum w_acc(label + "_weight"), b_acc(label + "_bias");
  ConvNet mutated = net;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    Layer& layer = mutated.layers[li];
    // Weights are float32, so the requested step quantizes; divide by the
    // step that was actually realized.
    const auto probe_f32 = [&](float& param, double analytic_value, Accum& acc) {
      const float saved = param;
      param = saved + static_cast<float>(kFdStep);
      const double up = objective_at(input, mutated);
      const double up_step = static_cast<double>(param) - static_cast<double>(saved);
      param = saved - static_cast<float>(kFdStep);
      const double down = objective_at(input, mutated);
      const double down_step = static_cast<double>(saved) - static_cast<double>(param);
      param = saved;
      acc.add(analytic_value, (up - down) / (up_step + down_step));
    };
    for (size_t wi = 0; wi < layer.weight.size(); ++wi)
      probe_f32(layer.weight[wi], params.weight[li][wi], w_acc);
    for (size_t bi = 0; bi < layer.bias.size(); ++bi)
      probe_f32(layer.bias[bi], params.bias[li][bi], b_acc);
  }
  report.entries.push_back(w_acc.entry);
  report.entries.push_back(b_acc.entry);
}

ConvNet single_layer_net(Layer layer) {
  ConvNet net;
  net.layers.push_back(std::move(layer));
  return net;
}

}  // namespace

GradCheckReport check_net_gradients(uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradCheckReport report;

  check_one_net(single_layer_net(random_conv(rng, 3, 4, 3, 1)), "conv3x3_s1", rng, report);
  check_one_net(single_layer_net(random_conv(rng, 3, 4, 3, 2)), "conv3x3_s2", rng, report);
  check_one_net(single_layer_net(random_conv(rng, 3, 4, 1, 1)), "conv1x1", rng, report);

  Layer relu;
  relu.kind = LayerKind::LeakyRelu;
  check_one_net(single_layer_net(relu), "leaky_relu", rng, report);
  Layer up;
  up.kind = LayerKind::Upsample;
  check_one_net(single_layer_net(up), "upsample", rng, report);
  Layer sig;
  sig.kind = LayerKind::Sigmoid;
  check_one_net(single_layer_net(sig), "sigmoid", rng, report);
  Layer soft;
  soft.kind = LayerKind::Softplus;
  check_one_net(single_layer_net(soft), "softplus", rng, report);

  // Mixed stack with a mid-network tap, so gradients from two objective
  // terms accumulate through shared layers.
  ConvNet stack;
  stack.layers.push_back(random_conv(rng, 3, 4, 3, 2));
  Layer stack_relu;
  stack_relu.kind = LayerKind::LeakyRelu;
  stack.layers.push_back(stack_relu);
  Layer stack_up;
  stack_up.kind = LayerKind::Upsample;
  stack.layers.push_back(stack_up);
  stack.layers.push_back(random_conv(rng, 4, 2, 3, 1));
  Layer stack_sig;
  stack_sig.kind = LayerKind::Sigmoid;
  stack.layers.push_back(stack_sig);
  stack.taps = {1};
  check_one_net(stack, "stack", rng, report);

  return report;
}

namespace {

ConvNet warmed_discriminator(std::mt19937_64& rng, const ImageBuffer& real,
                             const ImageBuffer& fake) {
  ConvNet disc = make_discriminator(rng());
  NetAdam state(disc);
  AdamConfig cfg;
  cfg.lr = 1e-3;
  for (int i = 0; i < 3; ++i) loss_disc_step(disc, state, real, fake, cfg);
  return disc;
}

void check_image_grad(const std::string& name,
                      const std::function<std::pair<double, ImageGrad>(const ImageBuffer&)>& f,
                      const ImageBuffer& at, std::mt19937_64& rng, GradCheckReport& report) {
  const auto [base, grad] = f(at);
  (void)base;
  Accum acc(name);
  std::uniform_int_distribution<size_t> pick(0, at.data.size() - 1);
  ImageBuffer probe = at;
  for (int p = 0; p < 24; ++p) {
    const size_t idx = pick(rng);
    const double saved = probe.data[idx];
    probe.data[idx] = saved + kFdStep;
    const double up = f(probe).first;
    probe.data[idx] = saved - kFdStep;
    const double down = f(probe).first;
    probe.data[idx] = saved;
    acc.add(grad.data[idx], (up - down) / (2.0 * kFdStep));
  }
  report.entries.push_back(acc.entry);
}

}  // namespace

GradCheckReport check_loss_gradients(uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradCheckReport report;

  const ImageBuffer x = random_image(rng, 64, 64);
  const ImageBuffer reference = random_image(rng, 64, 64);

  TransferNets nets;
  nets.extractor = make_extractor(rng());
  nets.discriminator = warmed_discriminator(rng, reference, x);
  nets.depthnet = make_depthnet(rng());

  check_image_grad("rgb", [&](const ImageBuffer& im) { return loss_rgb(im, reference); }, x,
                   rng, report);

  const std::vector<ImageBuffer> style_pool = {random_image(rng, 64, 64),
                                               random_image(rng, 64, 64)};
  const StyleStats style_target = pool_style_stats(nets.extractor, style_pool);
  check_image_grad("style",
                   [&](const ImageBuffer& im) { return loss_style(im, style_target,
                                                                  nets.extractor); },
                   x, rng, report);

  check_image_grad("adv",
                   [&](const ImageBuffer& im) {
                     return loss_adv_generator(im, nets.discriminator);
                   },
                   x, rng, report);

  const Tensor3 content_ref = content_reference(nets.extractor, reference);
  check_image_grad("content",
                   [&](const ImageBuffer& im) {
                     return loss_content(im, content_ref, nets.extractor);
                   },
                   x, rng, report);

  const DepthReference depth_ref = depth_reference(nets.depthnet, reference);
  check_image_grad("depth",
                   [&](const ImageBuffer& im) { return loss_depth(im, depth_ref,
                                                                  nets.depthnet); },
                   x, rng, report);

  const ViewReference view_ref = build_view_reference(nets, reference);
  const LossWeights weights;
  check_image_grad("combined",
                   [&](const ImageBuffer& im) {
                     const LossReport r = loss_combined(im, view_ref, style_target, nets,
                                                        weights);
                     return std::make_pair(r.total, r.image_grad);
                   },
                   x, rng, report);

  return report;
}

std::string format_gradcheck(const GradCheckReport& report) {
  std::ostringstream out;
  out << "  check                 probes   worst rel    worst abs(near-0)  result\n";
  for (const GradCheckEntry& e : report.entries) {
    out << "  " << e.name;
    for (size_t i = e.name.size(); i < 22; ++i) out << ' ';
    out << e.probes << "\t" << e.worst_rel << "\t" << e.worst_abs << "\t"
        << (e.pass ? "ok" : "FAIL") << "\n";
  }
  return out.str();
}

}  // namespace sgs
