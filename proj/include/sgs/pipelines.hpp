#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sgs/camera.hpp"
#include "sgs/config.hpp"
#include "sgs/data_io.hpp"
#include "sgs/losses.hpp"
#include "sgs/renderer.hpp"

namespace sgs {

struct PosedViews {
  std::vector<ImageBuffer> images;
  std::vector<Camera> cameras;

  size_t size() const { return images.size(); }
};

// Random cloud around seed positions (coarse geometry estimates): jittered
// points, isotropic scales at the jitter magnitude, mid-gray color, and a
// moderate starting opacity. Deterministic per seed.
GaussianCloud init_cloud_from_seeds(std::span<const Eigen::Vector3d> seeds, int sh_degree,
                                    const Eigen::Vector3d& background, uint64_t seed,
                                    double jitter_sigma);

// Largest distance from the position centroid; scales the position
// learning rate so spatial step sizes are resolution independent.
double cloud_extent(const GaussianCloud& cloud);

struct ReconstructReport {
  GaussianCloud cloud;
  std::vector<LossRow> history;  // photometric loss in `total`
  double train_psnr = 0.0;
  double heldout_psnr = -1.0;  // -1 when no held-out views were given
  double extent = 0.0;
  size_t pruned_points = 0;
};

// Phase 1: fits all cloud parameters to the posed training views with a
// photometric MSE objective (one view per iteration, seeded shuffle order,
// gradient clipping, periodic opacity pruning). Held-out views are only
// evaluated, never trained on.
ReconstructReport reconstruct(const PosedViews& train, const PosedViews& heldout,
                              GaussianCloud init, const Phase1Config& config, uint64_t seed,
                              int threads = 1);

struct DepthTrainReport {
  ConvNet net;
  std::vector<double> loss_history;
};

// Supervised pretraining of the depth predictor on (image, depth) pairs.
// The loss is mean squared error over valid depth pixels.
DepthTrainReport train_depthnet(const PosedViews& views, std::span<const DepthBuffer> depths,
                                int iterations, double lr, uint64_t seed, int threads = 1);

struct TransferRun {
  GaussianCloud initial;
  GaussianCloud stylized;
  std::vector<LossRow> history;
  double generator_seconds = 0.0;
  double discriminator_seconds = 0.0;
};

// Phase 2: appearance-only stylization. Per-camera references (virtual
// image, content features, depth response) are cached once, then each
// iteration renders the working cloud at a sampled camera, optimizes the SH
// coefficients against the combined loss, and gives the discriminator one
// update on a sampled pool image versus the fresh render. Structure
// parameters stay bit-identical to the input cloud.
TransferRun transfer(const GaussianCloud& cloud, std::span<const ImageBuffer> real_pool,
                     std::span<const Camera> cameras, TransferNets nets,
                     const Phase2Config& config, uint64_t seed, int threads = 1);

struct AblationRow {
  std::string name;  // "full", "no_style", "no_adv", "no_structure"
  TransferRun run;
};

// Runs transfer once per loss configuration: the full objective and the
// three single-ablation variants, all from the same seed and starting nets.
std::vector<AblationRow> ablation_matrix(const GaussianCloud& cloud,
                                         std::span<const ImageBuffer> real_pool,
                                         std::span<const Camera> cameras,
                                         const TransferNets& nets, const Phase2Config& base,
                                         uint64_t seed, int threads = 1);

}  // namespace sgs
