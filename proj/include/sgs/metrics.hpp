#pragma once

#include <span>
#include <string>
#include <vector>

#include "sgs/image.hpp"
#include "sgs/nets.hpp"

namespace sgs {

// Peak signal-to-noise ratio in dB with MAX = 1. MSE is the mean over all
// samples (pixels x channels). Identical images return +infinity.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2, averaged over valid window positions and channels. Both
// image sides must be at least 11.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

// Squared maximum mean discrepancy between two image sets in the feature
// space of the extractor's deepest tap (spatially average-pooled), with the
// polynomial kernel k(x, y) = (x.y / dim + 1)^3. Biased estimator; the
// value is a squared RKHS norm, so negatives can only arise from rounding
// and are clamped to zero.
double feature_distance(std::span<const ImageBuffer> a, std::span<const ImageBuffer> b,
                        const ConvNet& extractor);

// Channel means of the deepest extractor tap: one vector per image.
std::vector<std::vector<double>> pooled_features(std::span<const ImageBuffer> images,
                                                 const ConvNet& extractor);

struct MetricReport {
  std::vector<double> psnr_db;  // per image pair
  std::vector<double> ssim_value;
  double mean_psnr_db = 0.0;  // +inf when every pair is identical
  double mean_ssim = 0.0;
  double feature_dist = -1.0;  // -1 when no extractor was supplied
  double renders_per_second = -1.0;    // -1 when not measured
  double iterations_per_second = -1.0;  // -1 when not measured
};

// Pairwise metrics over aligned image lists, plus the set-level feature
// distance when an extractor is given.
MetricReport evaluate_image_sets(std::span<const ImageBuffer> a, std::span<const ImageBuffer> b,
                                 const ConvNet* extractor = nullptr);

// Human-readable rendering of a report; infinities print as "inf".
std::string format_metric_report(const MetricReport& report);

}  // namespace sgs
