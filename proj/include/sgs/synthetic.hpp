#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sgs/camera.hpp"
#include "sgs/image.hpp"
#include "sgs/scene.hpp"

namespace sgs {

// Procedural scene recipe. Everything downstream (cloud, cameras, files) is
// a pure function of these fields.
struct SyntheticSceneSpec {
  std::string layout = "tube";   // "tube" (fly-through) or "sphere" (orbit)
  std::string scheme = "warm";   // "warm" or "cool" albedo palette
  int point_target = 200;        // approximate gaussian count
  int train_count = 20;
  int test_count = 5;
  int width = 128, height = 128;
  uint64_t seed = 0;
  std::string pool_map = "";     // "", "identity", or "recolor"
};

struct SyntheticScene {
  GaussianCloud cloud;  // ground truth
  std::vector<Camera> train_cameras;
  std::vector<Camera> test_cameras;
};

// Builds the ground-truth cloud and camera trajectory in memory.
SyntheticScene build_synthetic_scene(const SyntheticSceneSpec& spec);

// Invertible global color transform: clamp(m * rgb + b, 0, 1).
struct ColorMap {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
};

// "identity" maps pixels unchanged; "recolor" is a fixed channel-mixing
// shift used as the transfer ground truth. Unknown ids throw.
ColorMap color_map_by_id(const std::string& id);

ImageBuffer apply_color_map(const ImageBuffer& image, const ColorMap& map);

// The unpaired target pool: the first `kRealPoolSize` images, transformed.
// Fewer inputs than that is an error.
inline constexpr size_t kRealPoolSize = 10;
std::vector<ImageBuffer> recolor_pool(std::span<const ImageBuffer> renders, const ColorMap& map);

// Renders the scene and writes <out_dir>/manifest.json plus images, depth
// maps, and (when spec.pool_map is set) the recolored pool. Byte-identical
// output for identical specs. Returns the ground-truth cloud.
GaussianCloud generate_synthetic(const SyntheticSceneSpec& spec, const std::string& out_dir,
                                 int threads = 1);

}  // namespace sgs
