#include "sgs/optim.hpp"

#include <cmath>

#include "sgs/common.hpp"

namespace sgs {

namespace {

std::span<double> flat(std::vector<Eigen::Vector3d>& v) {
  return {v.empty() ? nullptr : v[0].data(), v.size() * 3};
}
std::span<double> flat(std::vector<Eigen::Vector4d>& v) {
  return {v.empty() ? nullptr : v[0].data(), v.size() * 4};
}
std::span<const double> flat(const std::vector<Eigen::Vector3d>& v) {
  return {v.empty() ? nullptr : v[0].data(), v.size() * 3};
}
std::span<const double> flat(const std::vector<Eigen::Vector4d>& v) {
  return {v.empty() ? nullptr : v[0].data(), v.size() * 4};
}

template <typename Param>
void adam_update(std::span<Param> params, std::span<const double> grads, AdamState& state,
                 const AdamConfig& cfg) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
  if (state.m.size() != params.size()) state.resize(params.size());
  ++state.step_count;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] = static_cast<Param>(static_cast<double>(params[i]) -
                                   cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

}  // namespace

void AdamState::filter(std::span<const size_t> kept, size_t stride) {
  std::vector<double> nm, nv;
  nm.reserve(kept.size() * stride);
  nv.reserve(kept.size() * stride);
  for (size_t idx : kept)
    for (size_t k = 0; k < stride; ++k) {
      nm.push_back(m[idx * stride + k]);
      nv.push_back(v[idx * stride + k]);
    }
  m = std::move(nm);
  v = std::move(nv);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  adam_update(params, grads, state, cfg);
}

void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  adam_update(params, grads, state, cfg);
}

double clip_global_norm(std::span<std::span<double>> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& block : grads)
    for (double g : block) sq += g * g;
  if (!std::isfinite(sq)) throw NumericError("gradient norm is not finite");
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& block : grads)
      for (double& g : block) g *= scale;
  }
  return norm;
}

NetAdam::NetAdam(const ConvNet& net)
    : weight_states(net.layers.size()), bias_states(net.layers.size()) {}

void NetAdam::step(ConvNet& net, const NetGradients& grads, const AdamConfig& cfg) {
  if (grads.weight.size() != net.layers.size())
    throw std::invalid_argument("NetAdam::step: gradient layout mismatch");
  for (size_t l = 0; l < net.layers.size(); ++l) {
    Layer& layer = net.layers[l];
    if (layer.kind != LayerKind::Conv) continue;
    adam_step(std::span<float>(layer.weight), std::span<const double>(grads.weight[l]),
              weight_states[l], cfg);
    adam_step(std::span<float>(layer.bias), std::span<const double>(grads.bias[l]),
              bias_states[l], cfg);
  }
}

CloudAdam::CloudAdam(const GaussianCloud& cloud) {
  positions.resize(cloud.size() * 3);
  log_scales.resize(cloud.size() * 3);
  rotations.resize(cloud.size() * 4);
  opacities.resize(cloud.size());
  sh.resize(cloud.sh_coeffs.size());
}

void CloudAdam::filter(std::span<const size_t> kept, const GaussianCloud& cloud_before) {
  positions.filter(kept, 3);
  log_scales.filter(kept, 3);
  rotations.filter(kept, 4);
  opacities.filter(kept, 1);
  sh.filter(kept, static_cast<size_t>(cloud_before.appearance_stride()));
}

void cloud_adam_step(GaussianCloud& cloud, const CloudGradients& grads, CloudAdam& state,
                     const CloudLearningRates& lrs) {
  AdamConfig cfg;
  cfg.lr = lrs.position;
  adam_step(flat(cloud.positions), flat(grads.positions), state.positions, cfg);
  cfg.lr = lrs.log_scale;
  adam_step(flat(cloud.log_scales), flat(grads.log_scales), state.log_scales, cfg);
  cfg.lr = lrs.rotation;
  adam_step(flat(cloud.rotations), flat(grads.rotations), state.rotations, cfg);
  cfg.lr = lrs.opacity;
  adam_step(std::span<double>(cloud.opacity_logits), std::span<const double>(grads.opacity_logits),
            state.opacities, cfg);
  cfg.lr = lrs.sh;
  adam_step(std::span<double>(cloud.sh_coeffs), std::span<const double>(grads.sh_coeffs), state.sh,
            cfg);
}

double clip_cloud_gradients(CloudGradients& grads, double max_norm) {
  std::span<double> blocks[5] = {
      flat(grads.positions), flat(grads.log_scales), flat(grads.rotations),
      std::span<double>(grads.opacity_logits), std::span<double>(grads.sh_coeffs)};
  return clip_global_norm(blocks, max_norm);
}

double clip_appearance_gradients(CloudGradients& grads, double max_norm) {
  std::span<double> blocks[1] = {std::span<double>(grads.sh_coeffs)};
  return clip_global_norm(blocks, max_norm);
}

void appearance_adam_step(GaussianCloud& cloud, const CloudGradients& grads, AdamState& state,
                          double lr) {
  AdamConfig cfg;
  cfg.lr = lr;
  adam_step(std::span<double>(cloud.sh_coeffs), std::span<const double>(grads.sh_coeffs), state,
            cfg);
}

}  // namespace sgs
