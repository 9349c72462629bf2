#include "sgs/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "sgs/data_io.hpp"
#include "sgs/renderer.hpp"

namespace sgs {

namespace {

constexpr double kTubeRadius = 1.0;
constexpr double kTubeLength = 4.0;

// Albedo palettes: a base color plus angular/axial modulation so every
// surface point is distinguishable (texture gives reconstruction something
// to lock onto).
Eigen::Vector3d albedo(const std::string& scheme, double theta, double axial) {
  Eigen::Vector3d c;
  if (scheme == "warm") {
    c = {0.72 + 0.16 * std::sin(2.0 * theta + 1.5 * axial),
         0.44 + 0.13 * std::sin(3.0 * theta - axial),
         0.34 + 0.10 * std::cos(theta + 2.0 * axial)};
  } else if (scheme == "cool") {
    c = {0.33 + 0.10 * std::cos(theta + 2.0 * axial),
         0.46 + 0.13 * std::sin(3.0 * theta + axial),
         0.70 + 0.16 * std::sin(2.0 * theta - 1.5 * axial)};
  } else {
    throw std::invalid_argument("unknown color scheme: " + scheme);
  }
  return c.cwiseMax(0.05).cwiseMin(0.95);
}

Eigen::Vector4d quat_from_columns(const Eigen::Vector3d& c0, const Eigen::Vector3d& c1,
                                  const Eigen::Vector3d& c2) {
  Eigen::Matrix3d r;
  r.col(0) = c0;
  r.col(1) = c1;
  r.col(2) = c2;
  const Eigen::Quaterniond q(r);
  return {q.w(), q.x(), q.y(), q.z()};
}

void add_gaussian(GaussianCloud& cloud, const Eigen::Vector3d& pos, const Eigen::Vector3d& scale,
                  const Eigen::Vector4d& quat, double opacity_logit, const Eigen::Vector3d& color,
                  std::mt19937_64& rng) {
  std::normal_distribution<double> jitter(0.0, 1.0);
  Eigen::Vector3d p = pos;
  for (int k = 0; k < 3; ++k) p[k] += 0.01 * jitter(rng);
  Eigen::Vector3d ls = scale.array().log();
  for (int k = 0; k < 3; ++k) ls[k] += 0.05 * jitter(rng);

  std::vector<double> sh(cloud.appearance_stride(), 0.0);
  for (int ch = 0; ch < 3; ++ch) sh[ch] = (color[ch] - 0.5) / kShBand0;
  cloud.add_point(p, ls, quat, opacity_logit, sh);
}

// Gaussians tiling the inside wall of a z-aligned cylinder, closed by a
// disk of gaussians at the far end so axial rays terminate.
GaussianCloud build_tube_cloud(const SyntheticSceneSpec& spec, std::mt19937_64& rng) {
  GaussianCloud cloud;
  cloud.sh_degree = 0;
  cloud.background = {0.05, 0.05, 0.05};

  const int cap_points = 1 + 6 + 12;
  const int wall_target = std::max(spec.point_target - cap_points, 24);
  const int per_ring = 14;
  const int rings = std::max(wall_target / per_ring, 2);
  const double dz = kTubeLength / rings;
  const double arc = 2.0 * M_PI * kTubeRadius / per_ring;

  for (int k = 0; k < rings; ++k) {
    const double z = (k + 0.5) * dz;
    for (int j = 0; j < per_ring; ++j) {
      const double theta = 2.0 * M_PI * (j + 0.5 * (k % 2)) / per_ring;
      const Eigen::Vector3d normal(std::cos(theta), std::sin(theta), 0.0);
      const Eigen::Vector3d tangent(-std::sin(theta), std::cos(theta), 0.0);
      const Eigen::Vector3d axial(0.0, 0.0, 1.0);
      add_gaussian(cloud, kTubeRadius * normal + z * axial,
                   {0.45 * arc, 0.45 * dz, 0.02},
                   quat_from_columns(tangent, axial, normal), 2.2,
                   albedo(spec.scheme, theta, z), rng);
    }
  }

  // End cap: one center point plus two concentric rings, normal along -z.
  const double cap_z = kTubeLength;
  const auto cap_color = [&](double x, double y) {
    return albedo(spec.scheme, std::atan2(y, x), cap_z + std::hypot(x, y));
  };
  add_gaussian(cloud, {0.0, 0.0, cap_z}, {0.22, 0.22, 0.02},
               {1.0, 0.0, 0.0, 0.0}, 2.2, cap_color(0.0, 0.0), rng);
  for (int ring = 0; ring < 2; ++ring) {
    const int n = ring == 0 ? 6 : 12;
    const double radius = ring == 0 ? 0.45 : 0.8;
    for (int j = 0; j < n; ++j) {
      const double theta = 2.0 * M_PI * j / n;
      const double x = radius * std::cos(theta), y = radius * std::sin(theta);
      add_gaussian(cloud, {x, y, cap_z}, {0.55 * radius, 0.55 * radius, 0.02},
                   {1.0, 0.0, 0.0, 0.0}, 2.2, cap_color(x, y), rng);
    }
  }
  return cloud;
}

// Gaussians on a unit sphere shell (Fibonacci spiral), viewed from an
// outside orbit.
GaussianCloud build_sphere_cloud(const SyntheticSceneSpec& spec, std::mt19937_64& rng) {
  GaussianCloud cloud;
  cloud.sh_degree = 0;
  cloud.background = {0.05, 0.05, 0.05};

  const int n = std::max(spec.point_target, 16);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const double spacing = std::sqrt(4.0 * M_PI / n);
  for (int i = 0; i < n; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(std::max(1.0 - y * y, 0.0));
    const double phi = golden * i;
    const Eigen::Vector3d normal(r * std::cos(phi), y, r * std::sin(phi));
    // Any tangent frame works; derive one from the least-aligned axis.
    const Eigen::Vector3d helper =
        std::abs(normal.x()) < 0.7 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    const Eigen::Vector3d t0 = normal.cross(helper).normalized();
    const Eigen::Vector3d t1 = normal.cross(t0);
    add_gaussian(cloud, normal, {0.6 * spacing, 0.6 * spacing, 0.02},
                 quat_from_columns(t0, t1, normal), 2.2,
                 albedo(spec.scheme, std::atan2(normal.z(), normal.x()), 2.0 * std::asin(y)),
                 rng);
  }
  return cloud;
}

std::vector<Camera> tube_cameras(const SyntheticSceneSpec& spec, int count, double phase) {
  std::vector<Camera> cams;
  const double focal = 0.7 * spec.width;
  for (int k = 0; k < count; ++k) {
    const double u = (k + phase) / std::max(static_cast<double>(count - 1), 1.0);
    const double along = 0.3 + 2.1 * u;
    const double swirl = 2.0 * M_PI * (0.37 * k + 1.7 * phase);
    const Eigen::Vector3d eye(0.22 * std::cos(swirl), 0.22 * std::sin(swirl), along);
    const Eigen::Vector3d target(0.1 * std::cos(swirl * 0.7), 0.1 * std::sin(swirl * 0.7),
                                 along + 1.2);
    cams.push_back(Camera::look_at(eye, target, {0.0, 1.0, 0.0}, focal, focal,
                                   spec.width / 2.0, spec.height / 2.0, spec.width,
                                   spec.height));
  }
  return cams;
}

std::vector<Camera> sphere_cameras(const SyntheticSceneSpec& spec, int count, double phase) {
  std::vector<Camera> cams;
  const double focal = 1.1 * spec.width;
  for (int k = 0; k < count; ++k) {
    const double alpha = 2.0 * M_PI * (k + phase) / count;
    const Eigen::Vector3d eye(3.2 * std::cos(alpha), 0.8 * std::sin(2.0 * alpha),
                              3.2 * std::sin(alpha));
    cams.push_back(Camera::look_at(eye, {0.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, focal, focal,
                                   spec.width / 2.0, spec.height / 2.0, spec.width,
                                   spec.height));
  }
  return cams;
}

}  // namespace

SyntheticScene build_synthetic_scene(const SyntheticSceneSpec& spec) {
  if (spec.train_count + spec.test_count < 2)
    throw std::invalid_argument("synthetic scene needs at least 2 cameras");
  std::mt19937_64 rng(spec.seed);

  SyntheticScene scene;
  if (spec.layout == "tube") {
    scene.cloud = build_tube_cloud(spec, rng);
    scene.train_cameras = tube_cameras(spec, spec.train_count, 0.0);
    scene.test_cameras = tube_cameras(spec, spec.test_count, 0.43);
  } else if (spec.layout == "sphere") {
    scene.cloud = build_sphere_cloud(spec, rng);
    scene.train_cameras = sphere_cameras(spec, spec.train_count, 0.0);
    scene.test_cameras = sphere_cameras(spec, spec.test_count, 0.5);
  } else {
    throw std::invalid_argument("unknown layout: " + spec.layout);
  }
  scene.cloud.validate();
  return scene;
}

ColorMap color_map_by_id(const std::string& id) {
  ColorMap map;
  if (id == "identity") return map;
  if (id == "recolor") {
    map.m << 0.9, 0.1, 0.0,
             0.05, 0.85, 0.1,
             0.0, 0.1, 0.8;
    map.b = {0.05, 0.02, -0.02};
    return map;
  }
  throw std::invalid_argument("unknown color map: " + id);
}

ImageBuffer apply_color_map(const ImageBuffer& image, const ColorMap& map) {
  ImageBuffer out(image.width, image.height);
  for (size_t i = 0; i < image.data.size(); i += 3) {
    const Eigen::Vector3d rgb(image.data[i], image.data[i + 1], image.data[i + 2]);
    const Eigen::Vector3d mapped = (map.m * rgb + map.b).cwiseMax(0.0).cwiseMin(1.0);
    out.data[i] = mapped[0];
    out.data[i + 1] = mapped[1];
    out.data[i + 2] = mapped[2];
  }
  return out;
}

std::vector<ImageBuffer> recolor_pool(std::span<const ImageBuffer> renders, const ColorMap& map) {
  if (renders.size() < kRealPoolSize)
    throw std::invalid_argument("recolor_pool: need at least 10 source renders");
  std::vector<ImageBuffer> pool;
  pool.reserve(kRealPoolSize);
  for (size_t i = 0; i < kRealPoolSize; ++i) pool.push_back(apply_color_map(renders[i], map));
  return pool;
}

GaussianCloud generate_synthetic(const SyntheticSceneSpec& spec, const std::string& out_dir,
                                 int threads) {
  namespace fs = std::filesystem;
  const SyntheticScene scene = build_synthetic_scene(spec);
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "depth");

  RenderOptions opts;
  opts.threads = threads;
  std::vector<ManifestFrame> frames;
  std::vector<ImageBuffer> train_renders;

  auto emit_split = [&](const std::vector<Camera>& cams, bool is_test, const char* tag) {
    for (size_t i = 0; i < cams.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%02zu", tag, i);
      const ImageBuffer image = render(scene.cloud, cams[i], opts);
      const DepthBuffer depth = render_depth(scene.cloud, cams[i], opts);
      ManifestFrame frame;
      frame.image_path = std::string("images/") + name + ".png";
      frame.depth_path = std::string("depth/") + name + ".f32d";
      frame.camera = cams[i];
      frame.is_test = is_test;
      save_png((fs::path(out_dir) / frame.image_path).string(), image);
      save_depth((fs::path(out_dir) / frame.depth_path).string(), depth);
      if (!is_test) train_renders.push_back(image);
      frames.push_back(std::move(frame));
    }
  };
  emit_split(scene.train_cameras, false, "train");
  emit_split(scene.test_cameras, true, "test");

  std::vector<std::string> pool_paths;
  if (!spec.pool_map.empty()) {
    const std::vector<ImageBuffer> pool =
        recolor_pool(train_renders, color_map_by_id(spec.pool_map));
    fs::create_directories(fs::path(out_dir) / "pool");
    for (size_t i = 0; i < pool.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "pool/pool_%02zu.png", i);
      save_png((fs::path(out_dir) / name).string(), pool[i]);
      pool_paths.emplace_back(name);
    }
  }

  save_scene_manifest((fs::path(out_dir) / "manifest.json").string(), frames, pool_paths);
  return scene.cloud;
}

}  // namespace sgs
