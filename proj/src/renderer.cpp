#include "sgs/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <vector>

namespace sgs {

namespace {

// Runs fn(begin, end) over [0, n) split into contiguous chunks, one per
// worker. Chunk boundaries depend only on n and thread count; each chunk
// writes to disjoint state, so results never depend on scheduling.
void parallel_chunks(int n, int threads, const std::function<void(int, int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1) {
    if (n > 0) fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int begin = t * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  for (auto& th : pool) th.join();
}

// Largest eigenvalue of a symmetric 2x2 matrix.
double max_eigenvalue(const Eigen::Matrix2d& m) {
  const double mid = 0.5 * (m(0, 0) + m(1, 1));
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return mid + std::sqrt(std::max(0.0, mid * mid - det));
}

// Perspective Jacobian of (x, y, z) -> (fx*x/z + cx, fy*y/z + cy).
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Eigen::Vector3d& pc) {
  const double z = pc.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z),
       0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
  return j;
}

struct TilePlan {
  int tiles_x = 0;
  int tiles_y = 0;
  // Per tile: indices into the depth-sorted splat array, in depth order.
  std::vector<std::vector<int>> bins;
  int tile_count() const { return tiles_x * tiles_y; }
};

// Depth-sorts the projected splats (ties keep cloud order) and bins them
// into the tiles their conservative pixel bounds touch.
std::vector<ProjectedSplat> sort_and_bin(std::vector<ProjectedSplat> splats, const Camera& cam,
                                         TilePlan& plan) {
  std::stable_sort(splats.begin(), splats.end(),
                   [](const ProjectedSplat& a, const ProjectedSplat& b) { return a.depth < b.depth; });
  plan.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
  plan.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
  plan.bins.assign(plan.tile_count(), {});
  for (int s = 0; s < static_cast<int>(splats.size()); ++s) {
    const ProjectedSplat& sp = splats[s];
    const int x0 = std::max(0, static_cast<int>(std::floor(sp.mean.x() - sp.radius)));
    const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(sp.mean.x() + sp.radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(sp.mean.y() - sp.radius)));
    const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(sp.mean.y() + sp.radius)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
      for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx)
        plan.bins[ty * plan.tiles_x + tx].push_back(s);
  }
  return splats;
}

struct PixelRange {
  int x0, x1, y0, y1;  // half-open
};

PixelRange tile_pixels(const TilePlan& plan, const Camera& cam, int tile) {
  const int tx = tile % plan.tiles_x;
  const int ty = tile / plan.tiles_x;
  return {tx * kTileSize, std::min(cam.width, (tx + 1) * kTileSize),
          ty * kTileSize, std::min(cam.height, (ty + 1) * kTileSize)};
}

// One surviving compositing contribution at a pixel, recorded for backward.
struct Contribution {
  int splat = 0;        // index into the sorted splat array
  double alpha = 0.0;
  double transmittance = 0.0;  // before this contribution
  double falloff = 0.0;        // exp(-0.5 * mahalanobis^2)
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();  // pixel center - mean
};

// Gradient accumulators for one splat, in projected quantities.
struct SplatAccum {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();   // dL/d view color
  double opacity = 0.0;                              // dL/d activated opacity
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();    // dL/d 2D mean
  Eigen::Matrix2d conic = Eigen::Matrix2d::Zero();   // dL/d conic
  bool touched = false;

  void merge(const SplatAccum& o) {
    color += o.color;
    opacity += o.opacity;
    mean += o.mean;
    conic += o.conic;
    touched = touched || o.touched;
  }
};

}  // namespace

std::vector<ProjectedSplat> project(const GaussianCloud& cloud, const Camera& camera) {
  camera.validate();
  const Eigen::Matrix3d w = camera.world_to_camera_rotation();
  std::vector<ProjectedSplat> out;
  out.reserve(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d pc = w * (cloud.positions[i] - camera.translation);
    if (pc.z() <= kNearPlane) continue;

    ProjectedSplat sp;
    sp.point_index = static_cast<int>(i);
    sp.depth = pc.z();
    sp.mean = camera.project_camera_point(pc);

    const Eigen::Matrix<double, 2, 3> a = projection_jacobian(camera, pc) * w;
    const Eigen::Matrix3d cov3 = build_covariance(cloud.activated_scale(i), cloud.rotations[i]);
    sp.cov = a * cov3 * a.transpose();
    sp.cov(0, 0) += kCovRegularizer;
    sp.cov(1, 1) += kCovRegularizer;
    const double det = sp.cov(0, 0) * sp.cov(1, 1) - sp.cov(0, 1) * sp.cov(1, 0);
    sp.conic << sp.cov(1, 1) / det, -sp.cov(0, 1) / det,
                -sp.cov(1, 0) / det, sp.cov(0, 0) / det;
    sp.radius = 3.0 * std::sqrt(max_eigenvalue(sp.cov));

    if (sp.mean.x() + sp.radius < 0.0 || sp.mean.x() - sp.radius > camera.width ||
        sp.mean.y() + sp.radius < 0.0 || sp.mean.y() - sp.radius > camera.height)
      continue;

    sp.opacity = cloud.activated_opacity(i);
    const Eigen::Vector3d dir = (cloud.positions[i] - camera.translation).normalized();
    const Eigen::Vector3d color = eval_sh_color(cloud.point_sh(i), cloud.sh_degree, dir);
    sp.color = color;
    for (int ch = 0; ch < 3; ++ch) sp.color_clamped[ch] = color[ch] <= 0.0;
    out.push_back(sp);
  }
  return out;
}

Eigen::Vector3d composite_pixel(std::span<const std::pair<Eigen::Vector3d, double>> ordered,
                                const Eigen::Vector3d& background) {
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double transmittance = 1.0;
  for (const auto& [rgb, alpha] : ordered) {
    if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("composite_pixel: alpha outside [0, 1)");
    color += rgb * (alpha * transmittance);
    transmittance *= 1.0 - alpha;
    if (transmittance < kMinTransmittance) break;
  }
  return color + transmittance * background;
}

ImageBuffer render(const GaussianCloud& cloud, const Camera& camera, const RenderOptions& opts) {
  cloud.validate();
  TilePlan plan;
  const std::vector<ProjectedSplat> splats = sort_and_bin(project(cloud, camera), camera, plan);

  ImageBuffer image(camera.width, camera.height);
  parallel_chunks(plan.tile_count(), opts.threads, [&](int begin, int end) {
    for (int tile = begin; tile < end; ++tile) {
      const PixelRange px = tile_pixels(plan, camera, tile);
      const std::vector<int>& bin = plan.bins[tile];
      for (int y = px.y0; y < px.y1; ++y) {
        for (int x = px.x0; x < px.x1; ++x) {
          const Eigen::Vector2d center(x + 0.5, y + 0.5);
          Eigen::Vector3d color = Eigen::Vector3d::Zero();
          double transmittance = 1.0;
          for (int s : bin) {
            const ProjectedSplat& sp = splats[s];
            const Eigen::Vector2d d = center - sp.mean;
            const double m = d.dot(sp.conic * d);
            if (m > kMaxMahalanobisSq) continue;
            const double alpha = sp.opacity * std::exp(-0.5 * m);
            if (alpha < kAlphaFloor) continue;
            color += sp.color * (alpha * transmittance);
            transmittance *= 1.0 - alpha;
            if (transmittance < kMinTransmittance) break;
          }
          color += transmittance * cloud.background;
          image.set_rgb(x, y, color);
        }
      }
    }
  });
  return image;
}

DepthBuffer render_depth(const GaussianCloud& cloud, const Camera& camera,
                         const RenderOptions& opts) {
  cloud.validate();
  TilePlan plan;
  const std::vector<ProjectedSplat> splats = sort_and_bin(project(cloud, camera), camera, plan);

  DepthBuffer depth(camera.width, camera.height);
  parallel_chunks(plan.tile_count(), opts.threads, [&](int begin, int end) {
    for (int tile = begin; tile < end; ++tile) {
      const PixelRange px = tile_pixels(plan, camera, tile);
      const std::vector<int>& bin = plan.bins[tile];
      for (int y = px.y0; y < px.y1; ++y) {
        for (int x = px.x0; x < px.x1; ++x) {
          const Eigen::Vector2d center(x + 0.5, y + 0.5);
          double weighted = 0.0, accum_alpha = 0.0, transmittance = 1.0;
          for (int s : bin) {
            const ProjectedSplat& sp = splats[s];
            const Eigen::Vector2d d = center - sp.mean;
            const double m = d.dot(sp.conic * d);
            if (m > kMaxMahalanobisSq) continue;
            const double alpha = sp.opacity * std::exp(-0.5 * m);
            if (alpha < kAlphaFloor) continue;
            const double w = alpha * transmittance;
            weighted += sp.depth * w;
            accum_alpha += w;
            transmittance *= 1.0 - alpha;
            if (transmittance < kMinTransmittance) break;
          }
          const size_t idx = depth.index(x, y);
          if (accum_alpha >= 0.5) {
            depth.data[idx] = weighted / accum_alpha;
            depth.mask[idx] = 1;
          }
        }
      }
    }
  });
  return depth;
}

CloudGradients render_backward(const GaussianCloud& cloud, const Camera& camera,
                               const ImageGrad& image_grad, const RenderOptions& opts) {
  cloud.validate();
  if (image_grad.width != camera.width || image_grad.height != camera.height)
    throw std::invalid_argument("render_backward: gradient image size mismatch");
  TilePlan plan;
  const std::vector<ProjectedSplat> splats = sort_and_bin(project(cloud, camera), camera, plan);

  // Phase A: replay compositing per pixel and accumulate gradients in
  // projected quantities, separately per tile.
  std::vector<std::vector<SplatAccum>> tile_accums(plan.tile_count());
  parallel_chunks(plan.tile_count(), opts.threads, [&](int begin, int end) {
    std::vector<Contribution> stack;
    for (int tile = begin; tile < end; ++tile) {
      const PixelRange px = tile_pixels(plan, camera, tile);
      const std::vector<int>& bin = plan.bins[tile];
      if (bin.empty()) continue;
      std::vector<SplatAccum>& accum = tile_accums[tile];
      accum.assign(bin.size(), SplatAccum{});
      // Bin position of each sorted splat, for accumulator lookup.
      for (int y = px.y0; y < px.y1; ++y) {
        for (int x = px.x0; x < px.x1; ++x) {
          const Eigen::Vector2d center(x + 0.5, y + 0.5);
          stack.clear();
          double transmittance = 1.0;
          for (size_t k = 0; k < bin.size(); ++k) {
            const ProjectedSplat& sp = splats[bin[k]];
            const Eigen::Vector2d d = center - sp.mean;
            const double m = d.dot(sp.conic * d);
            if (m > kMaxMahalanobisSq) continue;
            const double falloff = std::exp(-0.5 * m);
            const double alpha = sp.opacity * falloff;
            if (alpha < kAlphaFloor) continue;
            stack.push_back({static_cast<int>(k), alpha, transmittance, falloff, d});
            transmittance *= 1.0 - alpha;
            if (transmittance < kMinTransmittance) break;
          }
          if (stack.empty()) continue;
          const Eigen::Vector3d g = image_grad.rgb(x, y);
          // Walk back to front; `behind` is the color composited behind the
          // current contribution assuming unit transmittance there.
          Eigen::Vector3d behind = cloud.background;
          for (size_t r = stack.size(); r-- > 0;) {
            const Contribution& c = stack[r];
            const ProjectedSplat& sp = splats[bin[c.splat]];
            SplatAccum& a = accum[c.splat];
            a.touched = true;
            a.color += g * (c.alpha * c.transmittance);
            const double d_alpha = c.transmittance * g.dot(sp.color - behind);
            a.opacity += d_alpha * c.falloff;
            const double d_m = -0.5 * sp.opacity * c.falloff * d_alpha;
            a.mean += d_m * (-2.0 * (sp.conic * c.offset));
            a.conic += d_m * (c.offset * c.offset.transpose());
            behind = c.alpha * sp.color + (1.0 - c.alpha) * behind;
          }
        }
      }
    }
  });

  // Merge per-tile accumulators in tile order (fixed regardless of threads).
  std::vector<SplatAccum> merged(splats.size());
  for (int tile = 0; tile < plan.tile_count(); ++tile) {
    if (tile_accums[tile].empty()) continue;
    const std::vector<int>& bin = plan.bins[tile];
    for (size_t k = 0; k < bin.size(); ++k) merged[bin[k]].merge(tile_accums[tile][k]);
  }

  // Phase B: chain projected-quantity gradients back to cloud parameters.
  CloudGradients grads(cloud);
  const Eigen::Matrix3d w = camera.world_to_camera_rotation();
  const int n_splats = static_cast<int>(splats.size());
  parallel_chunks(n_splats, opts.threads, [&](int begin, int end) {
    double basis[16];
    Eigen::Vector3d basis_grad[16];
    for (int s = begin; s < end; ++s) {
      const SplatAccum& acc = merged[s];
      if (!acc.touched) continue;
      const ProjectedSplat& sp = splats[s];
      const size_t i = static_cast<size_t>(sp.point_index);

      const Eigen::Vector3d pc = w * (cloud.positions[i] - camera.translation);
      const double z = pc.z();
      const Eigen::Matrix<double, 2, 3> j = projection_jacobian(camera, pc);
      const Eigen::Matrix<double, 2, 3> a = j * w;
      const Eigen::Matrix3d rot = rotation_from_quaternion(cloud.rotations[i]);
      const Eigen::Vector3d scale = cloud.activated_scale(i);
      const Eigen::Matrix3d m3 = rot * scale.asDiagonal();
      const Eigen::Matrix3d cov3 = m3 * m3.transpose();

      // Conic -> 2D covariance -> 3D covariance.
      const Eigen::Matrix2d d_cov2 = -sp.conic * acc.conic * sp.conic;
      const Eigen::Matrix3d d_cov3 = a.transpose() * d_cov2 * a;
      const Eigen::Matrix<double, 2, 3> d_a = 2.0 * d_cov2 * a * cov3;
      const Eigen::Matrix<double, 2, 3> d_j = d_a * w.transpose();

      // Camera-space position gradient: through the projected mean and
      // through the Jacobian's dependence on (x, y, z).
      Eigen::Vector3d d_pc(acc.mean.x() * camera.fx / z, acc.mean.y() * camera.fy / z,
                           -acc.mean.x() * camera.fx * pc.x() / (z * z) -
                               acc.mean.y() * camera.fy * pc.y() / (z * z));
      d_pc.x() += d_j(0, 2) * (-camera.fx / (z * z));
      d_pc.y() += d_j(1, 2) * (-camera.fy / (z * z));
      d_pc.z() += d_j(0, 0) * (-camera.fx / (z * z)) + d_j(1, 1) * (-camera.fy / (z * z)) +
                  d_j(0, 2) * (2.0 * camera.fx * pc.x() / (z * z * z)) +
                  d_j(1, 2) * (2.0 * camera.fy * pc.y() / (z * z * z));
      Eigen::Vector3d d_pos = w.transpose() * d_pc;

      // 3D covariance -> rotation and log-scale.
      const Eigen::Matrix3d d_m3 = 2.0 * d_cov3 * m3;
      const Eigen::Matrix3d d_rot = d_m3 * scale.asDiagonal();
      for (int k = 0; k < 3; ++k)
        grads.log_scales[i][k] += d_m3.col(k).dot(rot.col(k)) * scale[k];

      // Rotation -> quaternion (normalized), then project the gradient onto
      // the tangent of the normalization map.
      const Eigen::Vector4d q_raw = cloud.rotations[i];
      const double qn = q_raw.norm();
      const Eigen::Vector4d q = q_raw / qn;
      const double qw = q[0], qx = q[1], qy = q[2], qz = q[3];
      Eigen::Matrix3d dr_dw, dr_dx, dr_dy, dr_dz;
      dr_dw << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
      dr_dx << 0, qy, qz, qy, -2 * qx, -qw, qz, qw, -2 * qx;
      dr_dy << -2 * qy, qx, qw, qx, 0, qz, -qw, qz, -2 * qy;
      dr_dz << -2 * qz, -qw, qx, qw, -2 * qz, qy, qx, qy, 0;
      Eigen::Vector4d d_q_unit(2.0 * d_rot.cwiseProduct(dr_dw).sum(),
                               2.0 * d_rot.cwiseProduct(dr_dx).sum(),
                               2.0 * d_rot.cwiseProduct(dr_dy).sum(),
                               2.0 * d_rot.cwiseProduct(dr_dz).sum());
      grads.rotations[i] += (d_q_unit - d_q_unit.dot(q) * q) / qn;

      // View color -> SH coefficients and view direction. Clamped channels
      // contribute nothing.
      const Eigen::Vector3d to_point = cloud.positions[i] - camera.translation;
      const double dist = to_point.norm();
      const Eigen::Vector3d dir = to_point / dist;
      sh_basis(cloud.sh_degree, dir, std::span<double>(basis, 16));
      sh_basis_gradient(cloud.sh_degree, dir, std::span<Eigen::Vector3d>(basis_grad, 16));
      const int nb = cloud.sh_dim();
      double* d_sh = grads.sh_coeffs.data() + i * cloud.appearance_stride();
      const std::span<const double> sh = cloud.point_sh(i);
      Eigen::Vector3d d_dir = Eigen::Vector3d::Zero();
      for (int ch = 0; ch < 3; ++ch) {
        if (sp.color_clamped[ch]) continue;
        const double d_col = acc.color[ch];
        if (d_col == 0.0) continue;
        for (int b = 0; b < nb; ++b) {
          d_sh[3 * b + ch] += d_col * basis[b];
          d_dir += d_col * sh[3 * b + ch] * basis_grad[b];
        }
      }
      d_pos += (d_dir - d_dir.dot(dir) * dir) / dist;

      grads.positions[i] += d_pos;
      grads.opacity_logits[i] += acc.opacity * sp.opacity * (1.0 - sp.opacity);
    }
  });
  return grads;
}

}  // namespace sgs
