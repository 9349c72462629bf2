#include "sgs/camera.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace sgs {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("Camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("Camera: non-positive image size");
  if (!std::isfinite(cx) || !std::isfinite(cy) || !translation.allFinite() || !rotation.allFinite())
    throw std::invalid_argument("Camera: non-finite pose or intrinsics");
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw std::invalid_argument("Camera: rotation is not orthonormal");
  if (rotation.determinant() < 0.0)
    throw std::invalid_argument("Camera: rotation has negative determinant");
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double fx, double fy, double cx, double cy,
                       int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-9) throw std::invalid_argument("Camera::look_at: up parallel to view direction");
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right);

  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  cam.rotation.col(0) = right;
  cam.rotation.col(1) = down;
  cam.rotation.col(2) = forward;
  cam.translation = eye;
  cam.validate();
  return cam;
}

}  // namespace sgs
