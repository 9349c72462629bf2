#pragma once

#include <Eigen/Core>

#include "sgs/common.hpp"

namespace sgs {

// Pinhole camera. `rotation`/`translation` form the camera-to-world pose:
// x_world = rotation * x_cam + translation. Camera frame: +z forward, +y down.
// Pixel (ix, iy) is sampled at continuous coordinates (ix + 0.5, iy + 0.5).
struct Camera {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d world_to_camera(const Eigen::Vector3d& p) const {
    return rotation.transpose() * (p - translation);
  }
  Eigen::Matrix3d world_to_camera_rotation() const { return rotation.transpose(); }

  // Projects a camera-space point; caller must ensure z > 0.
  Eigen::Vector2d project_camera_point(const Eigen::Vector3d& pc) const {
    return {fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy};
  }

  // Throws std::invalid_argument on non-positive intrinsics/size or a
  // non-orthonormal rotation (checked to 1e-6).
  void validate() const;

  // Camera at `eye` looking at `target`. `up` is the world direction that
  // maps to image "up" (negative image y).
  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, double fx, double fy, double cx, double cy,
                        int width, int height);
};

}  // namespace sgs
