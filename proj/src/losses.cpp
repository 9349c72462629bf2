#include "sgs/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace sgs {

namespace {

constexpr double kStdEps = 1e-8;  // inside the sqrt of the std computation
constexpr double kLogEps = 1e-8;  // guards log() in the adversarial terms

void stats_of(const Tensor3& f, Eigen::VectorXd& mean, Eigen::VectorXd& stddev) {
  const size_t hw = static_cast<size_t>(f.height) * f.width;
  mean.resize(f.channels);
  stddev.resize(f.channels);
  for (int c = 0; c < f.channels; ++c) {
    const double* p = f.data.data() + f.index(c, 0, 0);
    double sum = 0.0;
    for (size_t i = 0; i < hw; ++i) sum += p[i];
    const double mu = sum / static_cast<double>(hw);
    double var = 0.0;
    for (size_t i = 0; i < hw; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= static_cast<double>(hw);
    mean[c] = mu;
    stddev[c] = std::sqrt(var + kStdEps);
  }
}

// Style distance at every tap of a finished forward pass. Appends the
// unweighted tap gradients (scaled later by the caller).
double style_term(const ConvNet& extractor, const Activations& acts, const StyleStats& target,
                  std::vector<TapGradient>& taps, double weight) {
  if (target.mean.size() != extractor.taps.size())
    throw std::invalid_argument("loss_style: target statistics do not match the extractor");
  double loss = 0.0;
  for (size_t t = 0; t < extractor.taps.size(); ++t) {
    const Tensor3& f = acts.layer_output(extractor.taps[t]);
    Eigen::VectorXd mean, stddev;
    stats_of(f, mean, stddev);
    if (target.mean[t].size() != f.channels)
      throw std::invalid_argument("loss_style: channel count mismatch at a tap");
    const double inv_c = 1.0 / static_cast<double>(f.channels);
    const size_t hw = static_cast<size_t>(f.height) * f.width;
    TapGradient tg;
    tg.layer = extractor.taps[t];
    tg.grad = Tensor3(f.channels, f.height, f.width);
    for (int c = 0; c < f.channels; ++c) {
      const double dmu = mean[c] - target.mean[t][c];
      const double dsig = stddev[c] - target.std[t][c];
      loss += (dmu * dmu + dsig * dsig) * inv_c;
      const double g_mu = 2.0 * dmu * inv_c * weight / static_cast<double>(hw);
      const double g_sig = 2.0 * dsig * inv_c * weight / (static_cast<double>(hw) * stddev[c]);
      const double* p = f.data.data() + f.index(c, 0, 0);
      double* g = tg.grad.data.data() + tg.grad.index(c, 0, 0);
      for (size_t i = 0; i < hw; ++i) g[i] = g_mu + g_sig * (p[i] - mean[c]);
    }
    taps.push_back(std::move(tg));
  }
  return loss;
}

double content_term(const ConvNet& extractor, const Activations& acts, const Tensor3& reference,
                    std::vector<TapGradient>& taps, double weight) {
  const int deepest = extractor.taps.back();
  const Tensor3& f = acts.layer_output(deepest);
  if (!f.same_shape(reference))
    throw std::invalid_argument("loss_content: reference feature shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(f.size());
  TapGradient tg;
  tg.layer = deepest;
  tg.grad = Tensor3(f.channels, f.height, f.width);
  double loss = 0.0;
  for (size_t i = 0; i < f.data.size(); ++i) {
    const double d = f.data[i] - reference.data[i];
    loss += d * d;
    tg.grad.data[i] = 2.0 * d * inv_n * weight;
  }
  taps.push_back(std::move(tg));
  return loss * inv_n;
}

// -mean log(D + eps) over the patch map; gradient goes to the map.
double adv_generator_term(const Activations& acts, std::vector<TapGradient>& taps, int last_layer,
                          double weight) {
  const Tensor3& patch = acts.output();
  const double inv_n = 1.0 / static_cast<double>(patch.size());
  TapGradient tg;
  tg.layer = last_layer;
  tg.grad = Tensor3(patch.channels, patch.height, patch.width);
  double loss = 0.0;
  for (size_t i = 0; i < patch.data.size(); ++i) {
    loss -= std::log(patch.data[i] + kLogEps);
    tg.grad.data[i] = -inv_n * weight / (patch.data[i] + kLogEps);
  }
  taps.push_back(std::move(tg));
  return loss * inv_n;
}

double depth_term(const ConvNet& depthnet, const Activations& acts, const DepthReference& ref,
                  std::vector<TapGradient>& taps, double weight) {
  if (ref.encoder_taps.size() != depthnet.taps.size())
    throw std::invalid_argument("loss_depth: reference does not match the depth network");
  double loss = 0.0;
  auto mse_tap = [&](const Tensor3& f, const Tensor3& r, int layer) {
    if (!f.same_shape(r)) throw std::invalid_argument("loss_depth: reference shape mismatch");
    const double inv_n = 1.0 / static_cast<double>(f.size());
    TapGradient tg;
    tg.layer = layer;
    tg.grad = Tensor3(f.channels, f.height, f.width);
    double term = 0.0;
    for (size_t i = 0; i < f.data.size(); ++i) {
      const double d = f.data[i] - r.data[i];
      term += d * d;
      tg.grad.data[i] = 2.0 * d * inv_n * weight;
    }
    taps.push_back(std::move(tg));
    loss += term * inv_n;
  };
  mse_tap(acts.output(), ref.prediction, static_cast<int>(depthnet.layers.size()) - 1);
  for (size_t t = 0; t < depthnet.taps.size(); ++t)
    mse_tap(acts.layer_output(depthnet.taps[t]), ref.encoder_taps[t], depthnet.taps[t]);
  return loss;
}

void add_image_grad(ImageGrad& total, const Tensor3& d_input) {
  for (int y = 0; y < total.height; ++y)
    for (int x = 0; x < total.width; ++x) {
      double* p = total.pixel(x, y);
      for (int c = 0; c < 3; ++c) p[c] += d_input.at(c, y, x);
    }
}

}  // namespace

std::pair<double, ImageGrad> loss_rgb(const ImageBuffer& rendered, const ImageBuffer& target) {
  if (!rendered.same_shape(target)) throw std::invalid_argument("loss_rgb: image size mismatch");
  const double inv_n = 1.0 / static_cast<double>(rendered.pixel_count());
  ImageGrad grad(rendered.width, rendered.height);
  double loss = 0.0;
  for (size_t i = 0; i < rendered.data.size(); ++i) {
    const double d = rendered.data[i] - target.data[i];
    loss += d * d;
    grad.data[i] = 2.0 * d * inv_n;
  }
  return {loss * inv_n, std::move(grad)};
}

StyleStats compute_style_stats(const ConvNet& extractor, const ImageBuffer& image) {
  const Activations acts = extractor.forward(to_tensor(image));
  StyleStats s;
  s.mean.resize(extractor.taps.size());
  s.std.resize(extractor.taps.size());
  for (size_t t = 0; t < extractor.taps.size(); ++t)
    stats_of(acts.layer_output(extractor.taps[t]), s.mean[t], s.std[t]);
  return s;
}

StyleStats pool_style_stats(const ConvNet& extractor, std::span<const ImageBuffer> pool) {
  if (pool.empty()) throw std::invalid_argument("pool_style_stats: empty pool");
  StyleStats acc = compute_style_stats(extractor, pool[0]);
  for (size_t i = 1; i < pool.size(); ++i) {
    const StyleStats s = compute_style_stats(extractor, pool[i]);
    for (size_t t = 0; t < acc.mean.size(); ++t) {
      acc.mean[t] += s.mean[t];
      acc.std[t] += s.std[t];
    }
  }
  const double inv = 1.0 / static_cast<double>(pool.size());
  for (size_t t = 0; t < acc.mean.size(); ++t) {
    acc.mean[t] *= inv;
    acc.std[t] *= inv;
  }
  return acc;
}

std::pair<double, ImageGrad> loss_style(const ImageBuffer& generated, const StyleStats& target,
                                        const ConvNet& extractor) {
  const Activations acts = extractor.forward(to_tensor(generated));
  std::vector<TapGradient> taps;
  const double loss = style_term(extractor, acts, target, taps, 1.0);
  const Tensor3 d_input = extractor.backward(acts, taps);
  ImageGrad grad(generated.width, generated.height);
  add_image_grad(grad, d_input);
  return {loss, std::move(grad)};
}

std::pair<double, ImageGrad> loss_adv_generator(const ImageBuffer& generated,
                                                const ConvNet& discriminator) {
  const Activations acts = discriminator.forward(to_tensor(generated));
  std::vector<TapGradient> taps;
  const double loss = adv_generator_term(acts, taps,
                                         static_cast<int>(discriminator.layers.size()) - 1, 1.0);
  const Tensor3 d_input = discriminator.backward(acts, taps);
  ImageGrad grad(generated.width, generated.height);
  add_image_grad(grad, d_input);
  return {loss, std::move(grad)};
}

double loss_disc_step(ConvNet& discriminator, NetAdam& state, const ImageBuffer& real,
                      const ImageBuffer& generated, const AdamConfig& cfg) {
  const int last = static_cast<int>(discriminator.layers.size()) - 1;
  double loss = 0.0;
  NetGradients total;

  // Real pass: -mean log(D(real) + eps).
  {
    const Activations acts = discriminator.forward(to_tensor(real));
    const Tensor3& patch = acts.output();
    const double inv_n = 1.0 / static_cast<double>(patch.size());
    TapGradient tg;
    tg.layer = last;
    tg.grad = Tensor3(patch.channels, patch.height, patch.width);
    for (size_t i = 0; i < patch.data.size(); ++i) {
      loss -= inv_n * std::log(patch.data[i] + kLogEps);
      tg.grad.data[i] = -inv_n / (patch.data[i] + kLogEps);
    }
    std::vector<TapGradient> taps;
    taps.push_back(std::move(tg));
    discriminator.backward(acts, taps, &total);
  }

  // Generated pass: -mean log(1 - D(generated) + eps), input held constant.
  {
    const Activations acts = discriminator.forward(to_tensor(generated));
    const Tensor3& patch = acts.output();
    const double inv_n = 1.0 / static_cast<double>(patch.size());
    TapGradient tg;
    tg.layer = last;
    tg.grad = Tensor3(patch.channels, patch.height, patch.width);
    for (size_t i = 0; i < patch.data.size(); ++i) {
      loss -= inv_n * std::log(1.0 - patch.data[i] + kLogEps);
      tg.grad.data[i] = inv_n / (1.0 - patch.data[i] + kLogEps);
    }
    std::vector<TapGradient> taps;
    taps.push_back(std::move(tg));
    NetGradients fake_grads;
    discriminator.backward(acts, taps, &fake_grads);
    for (size_t l = 0; l < total.weight.size(); ++l) {
      for (size_t i = 0; i < total.weight[l].size(); ++i)
        total.weight[l][i] += fake_grads.weight[l][i];
      for (size_t i = 0; i < total.bias[l].size(); ++i) total.bias[l][i] += fake_grads.bias[l][i];
    }
  }

  state.step(discriminator, total, cfg);
  return loss;
}

Tensor3 content_reference(const ConvNet& extractor, const ImageBuffer& image) {
  const Activations acts = extractor.forward(to_tensor(image));
  return acts.layer_output(extractor.taps.back());
}

std::pair<double, ImageGrad> loss_content(const ImageBuffer& generated,
                                          const Tensor3& reference_features,
                                          const ConvNet& extractor) {
  const Activations acts = extractor.forward(to_tensor(generated));
  std::vector<TapGradient> taps;
  const double loss = content_term(extractor, acts, reference_features, taps, 1.0);
  const Tensor3 d_input = extractor.backward(acts, taps);
  ImageGrad grad(generated.width, generated.height);
  add_image_grad(grad, d_input);
  return {loss, std::move(grad)};
}

DepthReference depth_reference(const ConvNet& depthnet, const ImageBuffer& image) {
  const Activations acts = depthnet.forward(to_tensor(image));
  DepthReference ref;
  ref.prediction = acts.output();
  for (int t : depthnet.taps) ref.encoder_taps.push_back(acts.layer_output(t));
  return ref;
}

std::pair<double, ImageGrad> loss_depth(const ImageBuffer& generated, const DepthReference& ref,
                                        const ConvNet& depthnet) {
  const Activations acts = depthnet.forward(to_tensor(generated));
  std::vector<TapGradient> taps;
  const double loss = depth_term(depthnet, acts, ref, taps, 1.0);
  const Tensor3 d_input = depthnet.backward(acts, taps);
  ImageGrad grad(generated.width, generated.height);
  add_image_grad(grad, d_input);
  return {loss, std::move(grad)};
}

ViewReference build_view_reference(const TransferNets& nets, ImageBuffer virtual_image) {
  ViewReference ref;
  ref.content_features = content_reference(nets.extractor, virtual_image);
  ref.depth = depth_reference(nets.depthnet, virtual_image);
  ref.virtual_image = std::move(virtual_image);
  return ref;
}

LossReport loss_combined(const ImageBuffer& generated, const ViewReference& ref,
                         const StyleStats& style_target, const TransferNets& nets,
                         const LossWeights& weights) {
  LossReport report;
  report.image_grad = ImageGrad(generated.width, generated.height);

  if (weights.style_on || weights.content_on) {
    const Activations acts = nets.extractor.forward(to_tensor(generated));
    std::vector<TapGradient> taps;
    if (weights.style_on)
      report.style = style_term(nets.extractor, acts, style_target, taps, weights.style);
    if (weights.content_on)
      report.content = content_term(nets.extractor, acts, ref.content_features, taps,
                                    weights.content);
    add_image_grad(report.image_grad, nets.extractor.backward(acts, taps));
  }
  if (weights.adv_on) {
    const Activations acts = nets.discriminator.forward(to_tensor(generated));
    std::vector<TapGradient> taps;
    report.adv = adv_generator_term(acts, taps,
                                    static_cast<int>(nets.discriminator.layers.size()) - 1,
                                    weights.adv);
    add_image_grad(report.image_grad, nets.discriminator.backward(acts, taps));
  }
  if (weights.depth_on) {
    const Activations acts = nets.depthnet.forward(to_tensor(generated));
    std::vector<TapGradient> taps;
    report.depth = depth_term(nets.depthnet, acts, ref.depth, taps, weights.depth);
    add_image_grad(report.image_grad, nets.depthnet.backward(acts, taps));
  }

  report.total = 0.0;
  if (weights.style_on) report.total += weights.style * report.style;
  if (weights.adv_on) report.total += weights.adv * report.adv;
  if (weights.content_on) report.total += weights.content * report.content;
  if (weights.depth_on) report.total += weights.depth * report.depth;
  return report;
}

}  // namespace sgs
