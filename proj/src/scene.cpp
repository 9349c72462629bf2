#include "sgs/scene.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace sgs {

namespace {

constexpr double kSH0 = kShBand0;
constexpr double kSH1 = 0.4886025119029199;
constexpr double kSH2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};
constexpr double kSH3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                            0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

void check_degree(int degree) {
  if (degree < 0 || degree > kMaxShDegree)
    throw std::invalid_argument("sh: degree out of range [0, 3]");
}

}  // namespace

Eigen::Matrix3d rotation_from_quaternion(const Eigen::Vector4d& q) {
  const double n = q.norm();
  if (!(n > 0.0)) throw std::invalid_argument("rotation_from_quaternion: zero quaternion");
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Eigen::Matrix3d build_covariance(const Eigen::Vector3d& scale, const Eigen::Vector4d& quat) {
  const Eigen::Matrix3d r = rotation_from_quaternion(quat);
  const Eigen::Matrix3d m = r * scale.asDiagonal();
  return m * m.transpose();
}

double gaussian_density(const Eigen::Matrix3d& cov, const Eigen::Vector3d& offset) {
  if (!cov.allFinite()) throw std::invalid_argument("gaussian_density: non-finite covariance");
  const double det = cov.determinant();
  if (!(det > 0.0)) throw std::invalid_argument("gaussian_density: covariance not positive definite");
  const Eigen::Matrix3d inv = cov.inverse();
  const double m = offset.dot(inv * offset);
  if (m < 0.0) throw std::invalid_argument("gaussian_density: covariance not positive definite");
  return std::exp(-0.5 * m);
}

void sh_basis(int degree, const Eigen::Vector3d& dir, std::span<double> out) {
  check_degree(degree);
  const size_t n = static_cast<size_t>(sh_basis_count(degree));
  if (out.size() < n) throw std::invalid_argument("sh_basis: output span too small");
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0] = kSH0;
  if (degree < 1) return;
  out[1] = -kSH1 * y;
  out[2] = kSH1 * z;
  out[3] = -kSH1 * x;
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = kSH2[0] * x * y;
  out[5] = kSH2[1] * y * z;
  out[6] = kSH2[2] * (2.0 * zz - xx - yy);
  out[7] = kSH2[3] * x * z;
  out[8] = kSH2[4] * (xx - yy);
  if (degree < 3) return;
  out[9] = kSH3[0] * y * (3.0 * xx - yy);
  out[10] = kSH3[1] * x * y * z;
  out[11] = kSH3[2] * y * (4.0 * zz - xx - yy);
  out[12] = kSH3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kSH3[4] * x * (4.0 * zz - xx - yy);
  out[14] = kSH3[5] * z * (xx - yy);
  out[15] = kSH3[6] * x * (xx - 3.0 * yy);
}

void sh_basis_gradient(int degree, const Eigen::Vector3d& dir, std::span<Eigen::Vector3d> out) {
  check_degree(degree);
  const size_t n = static_cast<size_t>(sh_basis_count(degree));
  if (out.size() < n) throw std::invalid_argument("sh_basis_gradient: output span too small");
  const double x = dir.x(), y = dir.y(), z = dir.z();
  out[0].setZero();
  if (degree < 1) return;
  out[1] = {0.0, -kSH1, 0.0};
  out[2] = {0.0, 0.0, kSH1};
  out[3] = {-kSH1, 0.0, 0.0};
  if (degree < 2) return;
  const double xx = x * x, yy = y * y, zz = z * z;
  out[4] = kSH2[0] * Eigen::Vector3d(y, x, 0.0);
  out[5] = kSH2[1] * Eigen::Vector3d(0.0, z, y);
  out[6] = kSH2[2] * Eigen::Vector3d(-2.0 * x, -2.0 * y, 4.0 * z);
  out[7] = kSH2[3] * Eigen::Vector3d(z, 0.0, x);
  out[8] = kSH2[4] * Eigen::Vector3d(2.0 * x, -2.0 * y, 0.0);
  if (degree < 3) return;
  out[9] = kSH3[0] * Eigen::Vector3d(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
  out[10] = kSH3[1] * Eigen::Vector3d(y * z, x * z, x * y);
  out[11] = kSH3[2] * Eigen::Vector3d(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
  out[12] = kSH3[3] * Eigen::Vector3d(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
  out[13] = kSH3[4] * Eigen::Vector3d(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
  out[14] = kSH3[5] * Eigen::Vector3d(2.0 * x * z, -2.0 * y * z, xx - yy);
  out[15] = kSH3[6] * Eigen::Vector3d(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

Eigen::Vector3d eval_sh_color(std::span<const double> coeffs, int degree,
                              const Eigen::Vector3d& dir) {
  check_degree(degree);
  const int n = sh_basis_count(degree);
  if (coeffs.size() != static_cast<size_t>(3 * n))
    throw std::invalid_argument("eval_sh_color: coefficient count mismatch");
  double basis[16];
  sh_basis(degree, dir, std::span<double>(basis, 16));
  Eigen::Vector3d color(0.5, 0.5, 0.5);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < 3; ++ch) color[ch] += basis[b] * coeffs[3 * b + ch];
  return color.cwiseMax(0.0);
}

void GaussianCloud::validate() const {
  if (sh_degree < 0 || sh_degree > kMaxShDegree)
    throw std::invalid_argument("GaussianCloud: sh_degree out of range [0, 3]");
  const size_t n = positions.size();
  if (log_scales.size() != n || rotations.size() != n || opacity_logits.size() != n ||
      sh_coeffs.size() != n * static_cast<size_t>(appearance_stride()))
    throw std::invalid_argument("GaussianCloud: parameter array length mismatch");
  if (!background.allFinite())
    throw std::invalid_argument("GaussianCloud: non-finite background");
  for (size_t i = 0; i < n; ++i) {
    if (!positions[i].allFinite() || !log_scales[i].allFinite() || !rotations[i].allFinite() ||
        !std::isfinite(opacity_logits[i]))
      throw std::invalid_argument("GaussianCloud: non-finite parameter");
    if (!(rotations[i].norm() > 0.0))
      throw std::invalid_argument("GaussianCloud: zero quaternion");
  }
  for (double v : sh_coeffs)
    if (!std::isfinite(v)) throw std::invalid_argument("GaussianCloud: non-finite SH coefficient");
}

void GaussianCloud::add_point(const Eigen::Vector3d& pos, const Eigen::Vector3d& log_scale,
                              const Eigen::Vector4d& rot, double opacity_logit,
                              std::span<const double> sh) {
  if (sh.size() != static_cast<size_t>(appearance_stride()))
    throw std::invalid_argument("GaussianCloud::add_point: SH length mismatch");
  positions.push_back(pos);
  log_scales.push_back(log_scale);
  rotations.push_back(rot);
  opacity_logits.push_back(opacity_logit);
  sh_coeffs.insert(sh_coeffs.end(), sh.begin(), sh.end());
}

void GaussianCloud::keep_points(std::span<const size_t> indices) {
  GaussianCloud out;
  out.sh_degree = sh_degree;
  out.background = background;
  out.positions.reserve(indices.size());
  for (size_t idx : indices) {
    if (idx >= size()) throw std::invalid_argument("GaussianCloud::keep_points: index out of range");
    out.add_point(positions[idx], log_scales[idx], rotations[idx], opacity_logits[idx],
                  point_sh(idx));
  }
  *this = std::move(out);
}

std::vector<double> gather_structure(const GaussianCloud& cloud) {
  std::vector<double> out(cloud.size() * kStructureStride);
  for (size_t i = 0; i < cloud.size(); ++i) {
    double* p = out.data() + i * kStructureStride;
    for (int k = 0; k < 3; ++k) p[k] = cloud.positions[i][k];
    for (int k = 0; k < 3; ++k) p[3 + k] = cloud.log_scales[i][k];
    for (int k = 0; k < 4; ++k) p[6 + k] = cloud.rotations[i][k];
    p[10] = cloud.opacity_logits[i];
  }
  return out;
}

void scatter_structure(GaussianCloud& cloud, std::span<const double> values) {
  if (values.size() != cloud.size() * kStructureStride)
    throw std::invalid_argument("scatter_structure: length mismatch");
  for (size_t i = 0; i < cloud.size(); ++i) {
    const double* p = values.data() + i * kStructureStride;
    for (int k = 0; k < 3; ++k) cloud.positions[i][k] = p[k];
    for (int k = 0; k < 3; ++k) cloud.log_scales[i][k] = p[3 + k];
    for (int k = 0; k < 4; ++k) cloud.rotations[i][k] = p[6 + k];
    cloud.opacity_logits[i] = p[10];
  }
}

std::vector<double> gather_appearance(const GaussianCloud& cloud) {
  return cloud.sh_coeffs;
}

void scatter_appearance(GaussianCloud& cloud, std::span<const double> values) {
  if (values.size() != cloud.sh_coeffs.size())
    throw std::invalid_argument("scatter_appearance: length mismatch");
  std::copy(values.begin(), values.end(), cloud.sh_coeffs.begin());
}

std::vector<uint8_t> serialize_structure(const GaussianCloud& cloud) {
  const std::vector<double> flat = gather_structure(cloud);
  std::vector<uint8_t> bytes(flat.size() * sizeof(double));
  std::memcpy(bytes.data(), flat.data(), bytes.size());
  return bytes;
}

}  // namespace sgs
