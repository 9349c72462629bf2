#pragma once

#include <cstdint>
#include <string>

#include "sgs/losses.hpp"
#include "sgs/optim.hpp"

namespace sgs {

// Cloud-reconstruction settings. Positions additionally scale their rate by
// the scene extent at run time.
struct Phase1Config {
  int iterations = 2000;
  CloudLearningRates lrs;  // sh (feature) rate defaults to 0.0025
  int prune_interval = 300;
  double prune_opacity_threshold = 0.005;
  bool densify_enabled = false;  // reserved; rejected as unsupported when set
  double grad_clip_norm = 10.0;
};

// Appearance-transfer settings. Only SH coefficients train; the
// discriminator gets one update per iteration.
struct Phase2Config {
  int iterations = 600;
  double appearance_lr = 0.025;
  double disc_lr = 2e-4;
  LossWeights weights;
  double grad_clip_norm = 10.0;
};

struct TrainConfig {
  Phase1Config phase1;
  Phase2Config phase2;
  uint64_t seed = 0;

  // Throws std::invalid_argument when a rate or budget is non-positive.
  void validate() const;
};

// Parses a JSON object with optional "phase1"/"phase2"/"seed" sections;
// absent keys keep their defaults, unknown keys are DataErrors (typo
// guard). Weight switches appear as phase2.style_on etc.
TrainConfig load_train_config(const std::string& path);
TrainConfig train_config_from_json_text(const std::string& text);

// Canonical JSON rendering: fixed key order and number formatting, so the
// hash below is stable across runs and platforms.
std::string config_to_json(const TrainConfig& config);

// FNV-1a (64-bit) over the canonical rendering; stamped into checkpoints.
uint64_t config_hash(const TrainConfig& config);

}  // namespace sgs
