#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sgs/nets.hpp"
#include "sgs/scene.hpp"

namespace sgs {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates for one parameter group.
struct AdamState {
  std::vector<double> m, v;
  int64_t step_count = 0;

  void resize(size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
  // Drops moment entries, keeping `stride` consecutive values per kept index.
  void filter(std::span<const size_t> kept, size_t stride);
};

// Bias-corrected Adam update, computed in double precision.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg);
// Same update for float-stored parameters (net weights).
void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg);

// Scales the listed gradient blocks in place so their concatenated L2 norm
// is at most max_norm; returns the pre-clip norm. Throws NumericError on
// non-finite gradients.
double clip_global_norm(std::span<std::span<double>> grads, double max_norm);

// Adam over every conv layer of a network.
struct NetAdam {
  std::vector<AdamState> weight_states, bias_states;

  explicit NetAdam(const ConvNet& net);
  void step(ConvNet& net, const NetGradients& grads, const AdamConfig& cfg);
};

// Adam over the five cloud parameter groups, each with its own learning
// rate. Moments survive pruning via filter().
struct CloudAdam {
  AdamState positions, log_scales, rotations, opacities, sh;

  explicit CloudAdam(const GaussianCloud& cloud);
  void filter(std::span<const size_t> kept, const GaussianCloud& cloud_before);
};

struct CloudLearningRates {
  double position = 1.6e-4;  // multiplied by the scene extent by callers
  double log_scale = 5e-3;
  double rotation = 1e-3;
  double opacity = 0.05;
  double sh = 0.0025;
};

// One Adam step on all cloud parameters. Gradients must be finite.
void cloud_adam_step(GaussianCloud& cloud, const CloudGradients& grads, CloudAdam& state,
                     const CloudLearningRates& lrs);

// Clips all cloud gradients to a shared global norm; returns pre-clip norm.
double clip_cloud_gradients(CloudGradients& grads, double max_norm);

// Clips only the SH gradients (appearance-only optimization).
double clip_appearance_gradients(CloudGradients& grads, double max_norm);

// One Adam step on the SH coefficients only; every structure parameter is
// left bit-identical.
void appearance_adam_step(GaussianCloud& cloud, const CloudGradients& grads, AdamState& state,
                          double lr);

}  // namespace sgs
