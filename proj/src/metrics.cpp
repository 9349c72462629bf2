#include "sgs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sgs {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

// Normalized 11x11 Gaussian window.
std::vector<double> ssim_window() {
  std::vector<double> w(kSsimWindow * kSsimWindow);
  double total = 0.0;
  for (int y = 0; y < kSsimWindow; ++y) {
    for (int x = 0; x < kSsimWindow; ++x) {
      const double dy = y - (kSsimWindow - 1) / 2.0;
      const double dx = x - (kSsimWindow - 1) / 2.0;
      w[y * kSsimWindow + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
      total += w[y * kSsimWindow + x];
    }
  }
  for (double& v : w) v /= total;
  return w;
}

double poly_kernel(const std::vector<double>& x, const std::vector<double>& y) {
  double dot = 0.0;
  for (size_t i = 0; i < x.size(); ++i) dot += x[i] * y[i];
  const double base = dot / static_cast<double>(x.size()) + 1.0;
  return base * base * base;
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: image size mismatch");
  double mse = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) mse += std::pow(a.data[i] - b.data[i], 2);
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: image size mismatch");
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw std::invalid_argument("ssim: images must be at least 11x11");
  static const std::vector<double> window = ssim_window();

  double total = 0.0;
  size_t count = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y0 = 0; y0 + kSsimWindow <= a.height; ++y0) {
      for (int x0 = 0; x0 + kSsimWindow <= a.width; ++x0) {
        double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
        for (int wy = 0; wy < kSsimWindow; ++wy) {
          for (int wx = 0; wx < kSsimWindow; ++wx) {
            const double w = window[wy * kSsimWindow + wx];
            const double va = a.pixel(x0 + wx, y0 + wy)[c];
            const double vb = b.pixel(x0 + wx, y0 + wy)[c];
            mx += w * va;
            my += w * vb;
            mxx += w * va * va;
            myy += w * vb * vb;
            mxy += w * va * vb;
          }
        }
        const double vx = mxx - mx * mx;
        const double vy = myy - my * my;
        const double cov = mxy - mx * my;
        const double value = ((2.0 * mx * my + kSsimC1) * (2.0 * cov + kSsimC2)) /
                             ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
        total += value;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

std::vector<std::vector<double>> pooled_features(std::span<const ImageBuffer> images,
                                                 const ConvNet& extractor) {
  std::vector<std::vector<double>> features;
  features.reserve(images.size());
  for (const ImageBuffer& img : images) {
    const Activations acts = extractor.forward(to_tensor(img));
    const Tensor3& deep = acts.layer_output(extractor.taps.back());
    const size_t hw = static_cast<size_t>(deep.height) * deep.width;
    std::vector<double> f(deep.channels, 0.0);
    for (int c = 0; c < deep.channels; ++c) {
      for (size_t i = 0; i < hw; ++i) f[c] += deep.data[c * hw + i];
      f[c] /= static_cast<double>(hw);
    }
    features.push_back(std::move(f));
  }
  return features;
}

double feature_distance(std::span<const ImageBuffer> a, std::span<const ImageBuffer> b,
                        const ConvNet& extractor) {
  if (a.empty() || b.empty()) throw std::invalid_argument("feature_distance: empty image set");
  const auto fa = pooled_features(a, extractor);
  const auto fb = pooled_features(b, extractor);

  const double m = static_cast<double>(fa.size());
  const double n = static_cast<double>(fb.size());
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (const auto& x : fa)
    for (const auto& y : fa) kaa += poly_kernel(x, y);
  for (const auto& x : fb)
    for (const auto& y : fb) kbb += poly_kernel(x, y);
  for (const auto& x : fa)
    for (const auto& y : fb) kab += poly_kernel(x, y);
  const double mmd2 = kaa / (m * m) + kbb / (n * n) - 2.0 * kab / (m * n);
  return std::max(mmd2, 0.0);
}

MetricReport evaluate_image_sets(std::span<const ImageBuffer> a, std::span<const ImageBuffer> b,
                                 const ConvNet* extractor) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("evaluate_image_sets: lists must be nonempty and aligned");
  MetricReport report;
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    report.psnr_db.push_back(psnr(a[i], b[i]));
    report.ssim_value.push_back(ssim(a[i], b[i]));
    psnr_sum += report.psnr_db.back();
    ssim_sum += report.ssim_value.back();
  }
  report.mean_psnr_db = psnr_sum / static_cast<double>(a.size());
  report.mean_ssim = ssim_sum / static_cast<double>(a.size());
  if (extractor != nullptr) report.feature_dist = feature_distance(a, b, *extractor);
  return report;
}

std::string format_metric_report(const MetricReport& report) {
  std::ostringstream out;
  out << "  #   PSNR(dB)    SSIM\n";
  for (size_t i = 0; i < report.psnr_db.size(); ++i) {
    out << "  " << i << "   ";
    if (std::isinf(report.psnr_db[i]))
      out << "inf";
    else
      out << report.psnr_db[i];
    out << "    " << report.ssim_value[i] << "\n";
  }
  out << "mean PSNR: ";
  if (std::isinf(report.mean_psnr_db))
    out << "inf";
  else
    out << report.mean_psnr_db;
  out << " dB\nmean SSIM: " << report.mean_ssim << "\n";
  if (report.feature_dist >= 0.0) out << "feature distance: " << report.feature_dist << "\n";
  if (report.renders_per_second >= 0.0)
    out << "renders/s: " << report.renders_per_second << "\n";
  if (report.iterations_per_second >= 0.0)
    out << "iterations/s: " << report.iterations_per_second << "\n";
  return out.str();
}

}  // namespace sgs
