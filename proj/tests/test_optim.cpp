#include <doctest.h>

#include <cmath>
#include <random>

#include "sgs/optim.hpp"

using namespace sgs;

TEST_SUITE_BEGIN("optim");

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  std::vector<double> params = {1.0, -2.0, 0.5};
  std::vector<double> grads = {0.0, 0.0, 0.0};
  AdamState state;
  AdamConfig cfg;
  for (int i = 0; i < 5; ++i) adam_step(params, grads, state, cfg);
  CHECK(params[0] == 1.0);
  CHECK(params[1] == -2.0);
  CHECK(params[2] == 0.5);
  CHECK(state.step_count == 5);
}

TEST_CASE("adam: first step moves by about -lr * sign(gradient)") {
  std::vector<double> params = {1.0, 1.0, 1.0};
  std::vector<double> grads = {0.7, -1.3, 4.0};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(params, grads, state, cfg);
  // Bias correction makes mhat = g and vhat = g^2, so the update is
  // -lr * g / (|g| + eps) ~= -lr * sign(g).
  CHECK(params[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(params[1] == doctest::Approx(1.0 + 0.01).epsilon(1e-6));
  CHECK(params[2] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
}

TEST_CASE("adam: converges on a 1-D quadratic") {
  std::vector<double> x = {1.0};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> g = {2.0 * x[0]};
    adam_step(x, g, state, cfg);
  }
  CHECK(std::abs(x[0]) < 1e-3);
}

TEST_CASE("adam: float parameters follow the double trajectory") {
  std::vector<double> pd = {0.25, -1.5};
  std::vector<float> pf = {0.25f, -1.5f};
  AdamState sd, sf;
  AdamConfig cfg;
  cfg.lr = 0.02;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> g = {gauss(rng), gauss(rng)};
    adam_step(pd, std::span<const double>(g), sd, cfg);
    adam_step(std::span<float>(pf), std::span<const double>(g), sf, cfg);
  }
  CHECK(pf[0] == doctest::Approx(pd[0]).epsilon(1e-4));
  CHECK(pf[1] == doctest::Approx(pd[1]).epsilon(1e-4));

  CHECK_THROWS_AS(adam_step(pd, std::vector<double>{1.0}, sd, cfg), std::invalid_argument);
}

TEST_CASE("adam state filtering keeps moments aligned with surviving rows") {
  std::vector<double> params(6, 0.0);  // three rows of stride 2
  std::vector<double> grads = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  AdamState state;
  AdamConfig cfg;
  adam_step(params, grads, state, cfg);

  const std::vector<double> m_before = state.m;
  const std::vector<size_t> kept = {0, 2};
  state.filter(kept, 2);
  REQUIRE(state.m.size() == 4);
  CHECK(state.m[0] == m_before[0]);
  CHECK(state.m[1] == m_before[1]);
  CHECK(state.m[2] == m_before[4]);
  CHECK(state.m[3] == m_before[5]);
}

TEST_CASE("global norm clipping") {
  std::vector<double> a = {3.0, 0.0};
  std::vector<double> b = {0.0, 4.0};
  std::span<double> blocks[2] = {a, b};
  const double norm = clip_global_norm(blocks, 10.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(a[0] == 3.0);  // under the cap: untouched

  const double clipped = clip_global_norm(blocks, 1.0);
  CHECK(clipped == doctest::Approx(5.0));
  const double after = std::sqrt(a[0] * a[0] + b[1] * b[1]);
  CHECK(after == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> bad = {std::numeric_limits<double>::quiet_NaN()};
  std::span<double> bad_blocks[1] = {bad};
  CHECK_THROWS_AS(clip_global_norm(bad_blocks, 1.0), NumericError);
}

TEST_CASE("cloud step applies per-class learning rates") {
  GaussianCloud cloud;
  cloud.sh_degree = 0;
  cloud.add_point({0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}, 0.0,
                  std::vector<double>(3, 0.0));
  CloudGradients grads(cloud);
  grads.positions[0] = {1.0, 0.0, 0.0};
  grads.log_scales[0] = {0.0, 1.0, 0.0};
  grads.rotations[0] = {0.0, 0.0, 1.0, 0.0};
  grads.opacity_logits[0] = 1.0;
  grads.sh_coeffs[0] = 1.0;

  CloudAdam state(cloud);
  CloudLearningRates lrs;
  cloud_adam_step(cloud, grads, state, lrs);
  CHECK(cloud.positions[0].x() == doctest::Approx(-lrs.position).epsilon(1e-6));
  CHECK(cloud.log_scales[0].y() == doctest::Approx(-lrs.log_scale).epsilon(1e-6));
  CHECK(cloud.rotations[0][2] == doctest::Approx(-lrs.rotation).epsilon(1e-6));
  CHECK(cloud.opacity_logits[0] == doctest::Approx(-lrs.opacity).epsilon(1e-6));
  CHECK(cloud.sh_coeffs[0] == doctest::Approx(-lrs.sh).epsilon(1e-6));
}

TEST_CASE("appearance-only step leaves structure bit-identical") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GaussianCloud cloud;
  cloud.sh_degree = 1;
  for (int i = 0; i < 4; ++i) {
    std::vector<double> sh(cloud.appearance_stride());
    for (double& v : sh) v = 0.3 * gauss(rng);
    cloud.add_point({gauss(rng), gauss(rng), 3.0 + gauss(rng)},
                    {-1.5 + 0.2 * gauss(rng), -1.5, -1.5}, {1.0, 0.1 * gauss(rng), 0.0, 0.0},
                    gauss(rng), sh);
  }
  const std::vector<uint8_t> structure_before = serialize_structure(cloud);
  const std::vector<double> sh_before = cloud.sh_coeffs;

  CloudGradients grads(cloud);
  for (double& v : grads.sh_coeffs) v = gauss(rng);
  for (auto& v : grads.positions) v = {gauss(rng), gauss(rng), gauss(rng)};  // must be ignored

  AdamState state;
  state.resize(cloud.sh_coeffs.size());
  appearance_adam_step(cloud, grads, state, 0.025);

  CHECK(serialize_structure(cloud) == structure_before);
  bool sh_changed = false;
  for (size_t i = 0; i < sh_before.size(); ++i)
    if (cloud.sh_coeffs[i] != sh_before[i]) sh_changed = true;
  CHECK(sh_changed);
}

TEST_CASE("appearance clip touches only SH gradients") {
  GaussianCloud cloud;
  cloud.sh_degree = 0;
  cloud.add_point({0, 0, 0}, {0, 0, 0}, {1, 0, 0, 0}, 0.0, std::vector<double>(3, 0.0));
  CloudGradients grads(cloud);
  grads.sh_coeffs = {30.0, 0.0, 40.0};
  grads.positions[0] = {100.0, 0.0, 0.0};
  const double norm = clip_appearance_gradients(grads, 5.0);
  CHECK(norm == doctest::Approx(50.0));
  CHECK(grads.sh_coeffs[0] == doctest::Approx(3.0));
  CHECK(grads.sh_coeffs[2] == doctest::Approx(4.0));
  CHECK(grads.positions[0].x() == 100.0);
}

TEST_SUITE_END();
