#pragma once

#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sgs/image.hpp"
#include "sgs/nets.hpp"
#include "sgs/optim.hpp"

namespace sgs {

// Photometric MSE: mean over pixels, summed over the three channels.
// Returns the loss and dL/dpixel for the first argument.
std::pair<double, ImageGrad> loss_rgb(const ImageBuffer& rendered, const ImageBuffer& target);

// Per-channel feature statistics (mean and guarded std) at every extractor
// tap. The same formula is used for generated images and pool targets, so
// identical inputs give exactly zero style loss.
struct StyleStats {
  std::vector<Eigen::VectorXd> mean;  // [tap](channels)
  std::vector<Eigen::VectorXd> std;
};

StyleStats compute_style_stats(const ConvNet& extractor, const ImageBuffer& image);

// Arithmetic mean of per-image statistics over a style pool (unpaired
// images; sizes may differ, channel counts are fixed by the extractor).
StyleStats pool_style_stats(const ConvNet& extractor, std::span<const ImageBuffer> pool);

// Squared distance between generated-image statistics and pooled targets,
// channel-count normalized per tap, summed over taps.
std::pair<double, ImageGrad> loss_style(const ImageBuffer& generated, const StyleStats& target,
                                        const ConvNet& extractor);

// Non-saturating generator loss: mean over patches of -log(D(I) + 1e-8).
std::pair<double, ImageGrad> loss_adv_generator(const ImageBuffer& generated,
                                                const ConvNet& discriminator);

// One discriminator update: evaluates
//   -mean log(D(real) + eps) - mean log(1 - D(generated) + eps),
// applies a single Adam step to the discriminator, and returns the loss
// evaluated before the step. The generated image is treated as a constant.
double loss_disc_step(ConvNet& discriminator, NetAdam& state, const ImageBuffer& real,
                      const ImageBuffer& generated, const AdamConfig& cfg);

// Deepest-tap feature MSE against a reference feature map.
std::pair<double, ImageGrad> loss_content(const ImageBuffer& generated,
                                          const Tensor3& reference_features,
                                          const ConvNet& extractor);
Tensor3 content_reference(const ConvNet& extractor, const ImageBuffer& image);

// Cached depth-network response to a reference image: predicted depth plus
// every encoder tap.
struct DepthReference {
  Tensor3 prediction;
  std::vector<Tensor3> encoder_taps;
};
DepthReference depth_reference(const ConvNet& depthnet, const ImageBuffer& image);

// Structure-consistency loss: MSE between depth predictions plus MSE at
// each encoder tap, all element-count normalized and summed. The depth
// network is frozen; the gradient flows only into the generated image.
std::pair<double, ImageGrad> loss_depth(const ImageBuffer& generated, const DepthReference& ref,
                                        const ConvNet& depthnet);

struct LossWeights {
  double style = 1.0, adv = 1.0, content = 1.0, depth = 1.0;
  bool style_on = true, adv_on = true, content_on = true, depth_on = true;
};

// Raw (unweighted) term values; total is the weighted sum of enabled terms.
// Disabled terms are skipped entirely and report exactly 0.
struct LossReport {
  double total = 0.0;
  double style = 0.0, adv = 0.0, content = 0.0, depth = 0.0;
  ImageGrad image_grad;
};

struct TransferNets {
  ConvNet extractor;
  ConvNet discriminator;
  ConvNet depthnet;
};

// Precomputed responses to one virtual (source-appearance) view; constant
// during appearance optimization.
struct ViewReference {
  ImageBuffer virtual_image;
  Tensor3 content_features;
  DepthReference depth;
};
ViewReference build_view_reference(const TransferNets& nets, ImageBuffer virtual_image);

// Combined stylization loss. Shares one extractor pass between style and
// content terms and accumulates all image gradients in a single buffer.
LossReport loss_combined(const ImageBuffer& generated, const ViewReference& ref,
                         const StyleStats& style_target, const TransferNets& nets,
                         const LossWeights& weights);

}  // namespace sgs
