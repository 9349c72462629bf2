#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sgs/camera.hpp"
#include "sgs/image.hpp"
#include "sgs/scene.hpp"

namespace sgs {

// Rasterizer constants. The per-pixel influence predicate (Mahalanobis
// radius + alpha floor), the termination threshold, and the background rule
// are part of the rendering definition: every code path that composites
// (tiled forward, backward replay, depth) applies them identically.
constexpr double kNearPlane = 0.01;         // camera-space z cull threshold
constexpr int kTileSize = 16;               // rasterization tile edge, pixels
constexpr double kCovRegularizer = 0.3;     // added to the 2D covariance diagonal
constexpr double kMaxMahalanobisSq = 9.0;   // 3-sigma influence cutoff
constexpr double kAlphaFloor = 1.0 / 255.0; // contributions below are skipped
constexpr double kMinTransmittance = 1e-4;  // front-to-back early termination

struct RenderOptions {
  int threads = 1;
};

// One Gaussian after projection into a camera. `conic` is the inverse of the
// regularized 2D covariance; `radius` is a conservative 3-sigma pixel radius.
struct ProjectedSplat {
  int point_index = 0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();
  double depth = 0.0;  // camera-space z
  double radius = 0.0;
  double opacity = 0.0;  // activated
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  std::array<bool, 3> color_clamped = {false, false, false};
};

// Projects all points into the camera, culling those behind the near plane
// or whose 3-sigma extent misses the image. Output preserves cloud order;
// point_index maps each entry back to the cloud.
std::vector<ProjectedSplat> project(const GaussianCloud& cloud, const Camera& camera);

// Front-to-back alpha compositing of depth-ordered (color, alpha) pairs over
// a background. Terminates once transmittance drops below kMinTransmittance;
// the background is always weighted by the final transmittance.
Eigen::Vector3d composite_pixel(std::span<const std::pair<Eigen::Vector3d, double>> ordered,
                                const Eigen::Vector3d& background);

// Rasterizes the cloud into an RGB image. Splats are globally sorted by
// camera depth (ties broken by point index) and composited per pixel within
// 16x16 tiles. Deterministic for a fixed cloud and camera regardless of
// thread count.
ImageBuffer render(const GaussianCloud& cloud, const Camera& camera,
                   const RenderOptions& opts = {});

// Alpha-weighted mean of camera-space depth per pixel. Pixels whose
// accumulated alpha stays below 0.5 are masked invalid. Depends only on
// structure parameters, never on SH coefficients.
DepthBuffer render_depth(const GaussianCloud& cloud, const Camera& camera,
                         const RenderOptions& opts = {});

// Gradients of a scalar image loss with respect to every cloud parameter,
// given dL/dpixel for the rendered image. Culled points receive zero
// gradient. Accumulation order is fixed (tile-major) so results are
// bit-identical across thread counts.
CloudGradients render_backward(const GaussianCloud& cloud, const Camera& camera,
                               const ImageGrad& image_grad, const RenderOptions& opts = {});

}  // namespace sgs
