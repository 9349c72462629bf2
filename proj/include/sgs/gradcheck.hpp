#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sgs {

// Finite-difference acceptance bounds: relative error for gradients of
// meaningful magnitude, absolute error when analytic and numeric values are
// both near zero.
constexpr double kGradRelTol = 1e-2;
constexpr double kGradAbsTol = 1e-4;

struct GradCheckEntry {
  std::string name;
  double worst_rel = 0.0;  // probes with magnitude >= kGradAbsTol
  double worst_abs = 0.0;  // near-zero probes
  size_t probes = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass() const;
};

// Central finite differences of a photometric image loss against the
// analytic rendering gradients, on small random scenes; one entry per
// parameter class (position, log scale, rotation, opacity, color).
GradCheckReport check_cloud_gradients(uint64_t seed, int scene_count);

// One entry per network layer kind (plus a mixed stack), separately for
// input, weight, and bias gradients where the layer has parameters.
GradCheckReport check_net_gradients(uint64_t seed);

// Image-gradient checks for every loss term and the combined objective.
GradCheckReport check_loss_gradients(uint64_t seed);

std::string format_gradcheck(const GradCheckReport& report);

}  // namespace sgs
