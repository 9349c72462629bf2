#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sgs/common.hpp"

namespace sgs {

constexpr int kMaxShDegree = 3;

// Band-0 basis value Y_00. A constant albedo `a` corresponds to the DC
// coefficient (a - 0.5) / kShBand0 under the 0.5-offset color convention.
constexpr double kShBand0 = 0.28209479177387814;

// Number of spherical-harmonic basis functions for a band limit.
constexpr int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

// Rotation matrix from a quaternion (w, x, y, z). The quaternion is
// normalized internally; it must have nonzero norm.
Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q);

// Covariance of an anisotropic Gaussian: R * diag(s)^2 * R^T built from the
// activated (positive) scale vector and an unnormalized quaternion.
Eigen::Matrix3d build_covariance(const Eigen::Vector3d& scale, const Eigen::Vector4d& quat);

// Unnormalized density exp(-0.5 * x^T cov^-1 x) at offset x from the mean.
// Throws std::invalid_argument if cov is singular or not positive definite.
double gaussian_density(const Eigen::Matrix3d& cov, const Eigen::Vector3d& offset);

// Real spherical-harmonic basis values for a unit direction, bands 0..degree.
void sh_basis(int degree, const Eigen::Vector3d& dir, std::span<double> out);

// Gradient of each basis value with respect to the (unnormalized) direction
// components, evaluated at a unit direction.
void sh_basis_gradient(int degree, const Eigen::Vector3d& dir, std::span<Eigen::Vector3d> out);

// RGB radiance from SH coefficients viewed along unit direction `dir`.
// Layout: coeffs[basis * 3 + channel], size 3 * (degree+1)^2. Adds the 0.5
// offset and clamps each channel at zero.
Eigen::Vector3d eval_sh_color(std::span<const double> coeffs, int degree,
                              const Eigen::Vector3d& dir);

// Differentiable 3D Gaussian cloud, struct-of-arrays. Raw (pre-activation)
// parameters are stored: scales as logs, opacities as logits, rotations as
// unnormalized quaternions (w, x, y, z).
struct GaussianCloud {
  int sh_degree = 2;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();

  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> log_scales;
  std::vector<Eigen::Vector4d> rotations;
  std::vector<double> opacity_logits;
  std::vector<double> sh_coeffs;  // size() * 3 * sh_basis_count(sh_degree)

  size_t size() const { return positions.size(); }
  int sh_dim() const { return sh_basis_count(sh_degree); }
  int appearance_stride() const { return 3 * sh_dim(); }

  std::span<double> point_sh(size_t i) {
    return {sh_coeffs.data() + i * appearance_stride(), static_cast<size_t>(appearance_stride())};
  }
  std::span<const double> point_sh(size_t i) const {
    return {sh_coeffs.data() + i * appearance_stride(), static_cast<size_t>(appearance_stride())};
  }

  Eigen::Vector3d activated_scale(size_t i) const {
    return log_scales[i].array().exp().matrix();
  }
  double activated_opacity(size_t i) const { return sigmoid(opacity_logits[i]); }

  // Throws std::invalid_argument on inconsistent array lengths, an
  // out-of-range SH degree, or non-finite parameter values.
  void validate() const;

  // Appends one point; sh must have length appearance_stride().
  void add_point(const Eigen::Vector3d& pos, const Eigen::Vector3d& log_scale,
                 const Eigen::Vector4d& rot, double opacity_logit, std::span<const double> sh);

  // Keeps only the points whose indices are listed (ascending, unique).
  void keep_points(std::span<const size_t> indices);
};

// Disjoint flat views of the optimizable parameters.
//   structure  = {position, scale, rotation, opacity}, 11 values per point:
//                [px py pz, ls0 ls1 ls2, qw qx qy qz, opacity_logit]
//   appearance = {SH coefficients}, 3*(degree+1)^2 values per point.
constexpr int kStructureStride = 11;

std::vector<double> gather_structure(const GaussianCloud& cloud);
void scatter_structure(GaussianCloud& cloud, std::span<const double> values);
std::vector<double> gather_appearance(const GaussianCloud& cloud);
void scatter_appearance(GaussianCloud& cloud, std::span<const double> values);

// Little-endian f64 serialization of the structure vector, used for
// invariance checksums across appearance-only optimization.
std::vector<uint8_t> serialize_structure(const GaussianCloud& cloud);

// Per-point gradients, same shapes as the cloud parameters.
struct CloudGradients {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> log_scales;
  std::vector<Eigen::Vector4d> rotations;
  std::vector<double> opacity_logits;
  std::vector<double> sh_coeffs;

  explicit CloudGradients(const GaussianCloud& cloud)
      : positions(cloud.size(), Eigen::Vector3d::Zero()),
        log_scales(cloud.size(), Eigen::Vector3d::Zero()),
        rotations(cloud.size(), Eigen::Vector4d::Zero()),
        opacity_logits(cloud.size(), 0.0),
        sh_coeffs(cloud.sh_coeffs.size(), 0.0) {}
};

}  // namespace sgs
