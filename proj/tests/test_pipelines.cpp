#include <doctest.h>

#include <cmath>
#include <random>

#include "sgs/pipelines.hpp"
#include "sgs/synthetic.hpp"
#include "oracles.hpp"

using namespace sgs;
using testutil::random_cloud;
using testutil::test_camera;

TEST_SUITE_BEGIN("pipelines");

namespace {

// Two distinct poses that both keep the oracle cloud (centered near z = 4)
// in frame.
std::vector<Camera> two_poses(int size, double focal) {
  std::vector<Camera> cams;
  cams.push_back(test_camera(size, size, focal));
  cams.push_back(Camera::look_at({0.4, 0.3, -0.3}, {0.0, 0.0, 4.0}, {0.0, 1.0, 0.0}, focal,
                                 focal, size / 2.0, size / 2.0, size, size));
  return cams;
}

PosedViews views_of(const GaussianCloud& cloud, const std::vector<Camera>& cams) {
  PosedViews views;
  views.cameras = cams;
  for (const Camera& cam : cams) views.images.push_back(render(cloud, cam));
  return views;
}

}  // namespace

TEST_CASE("seed initialization is deterministic and mid-gray") {
  std::vector<Eigen::Vector3d> seeds = {
      {0.0, 0.0, 3.0}, {0.5, -0.2, 4.0}, {-0.4, 0.3, 5.0}, {0.1, 0.1, 4.5}, {0.0, -0.5, 3.5}};
  const Eigen::Vector3d bg(0.2, 0.3, 0.4);

  const GaussianCloud a = init_cloud_from_seeds(seeds, 1, bg, 7, 0.05);
  const GaussianCloud b = init_cloud_from_seeds(seeds, 1, bg, 7, 0.05);
  CHECK(serialize_structure(a) == serialize_structure(b));
  CHECK(a.sh_coeffs == b.sh_coeffs);

  REQUIRE(a.size() == seeds.size());
  CHECK(a.sh_degree == 1);
  CHECK((a.background - bg).norm() == 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK((a.positions[i] - seeds[i]).norm() < 0.5);
    CHECK(a.activated_opacity(i) == doctest::Approx(0.5));
    for (int k = 0; k < 3; ++k)
      CHECK(a.log_scales[i][k] == doctest::Approx(std::log(0.05)));
  }
  for (double v : a.sh_coeffs) CHECK(v == 0.0);

  const GaussianCloud c = init_cloud_from_seeds(seeds, 1, bg, 8, 0.05);
  CHECK(serialize_structure(a) != serialize_structure(c));

  CHECK_THROWS_AS(init_cloud_from_seeds({}, 1, bg, 7, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(init_cloud_from_seeds(seeds, 1, bg, 7, 0.0), std::invalid_argument);
}

TEST_CASE("cloud extent is the largest distance from the centroid") {
  GaussianCloud cloud;
  cloud.sh_degree = 0;
  std::vector<double> sh(cloud.appearance_stride(), 0.0);
  for (const Eigen::Vector3d& p :
       {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(2, 0, 0), Eigen::Vector3d(0, 0, 4)})
    cloud.add_point(p, {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}, 0.0, sh);
  // Centroid (2/3, 0, 4/3); the farthest point is (0, 0, 4).
  CHECK(cloud_extent(cloud) == doctest::Approx(std::sqrt(68.0) / 3.0));

  GaussianCloud single;
  single.sh_degree = 0;
  single.add_point({3.0, 1.0, 2.0}, {0.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}, 0.0, sh);
  CHECK(cloud_extent(single) == 1.0);
}

TEST_CASE("reconstruction at the optimum does not drift") {
  std::mt19937_64 rng(11);
  const GaussianCloud gt = random_cloud(rng, 10, 1);
  const auto cams = two_poses(32, 40.0);
  const PosedViews train = views_of(gt, cams);

  Phase1Config cfg;
  cfg.iterations = 6;
  cfg.prune_interval = 0;

  const ReconstructReport report = reconstruct(train, train, gt, cfg, 3);
  for (const LossRow& row : report.history) CHECK(row.total == 0.0);
  CHECK(serialize_structure(report.cloud) == serialize_structure(gt));
  CHECK(report.cloud.sh_coeffs == gt.sh_coeffs);
  CHECK(std::isinf(report.train_psnr));
  CHECK(std::isinf(report.heldout_psnr));
  CHECK(report.pruned_points == 0);
  CHECK(report.extent == doctest::Approx(cloud_extent(gt)));
}

TEST_CASE("reconstruction prunes points that never gain opacity") {
  std::mt19937_64 rng(12);
  const GaussianCloud gt = random_cloud(rng, 8, 1);
  const auto cams = two_poses(32, 40.0);
  const PosedViews train = views_of(gt, cams);

  // The extra point is transparent below the blending floor, so it leaves
  // every render and every gradient untouched until pruning removes it.
  GaussianCloud init = gt;
  std::vector<double> sh(init.appearance_stride(), 0.1);
  init.add_point({0.0, 0.0, 5.0}, {-2.0, -2.0, -2.0}, {1.0, 0.0, 0.0, 0.0}, -10.0, sh);

  Phase1Config cfg;
  cfg.iterations = 5;
  cfg.prune_interval = 2;

  const ReconstructReport report = reconstruct(train, {}, init, cfg, 3);
  CHECK(report.pruned_points == 1);
  CHECK(report.cloud.size() == gt.size());
  CHECK(serialize_structure(report.cloud) == serialize_structure(gt));
  CHECK(report.heldout_psnr == -1.0);
  for (const LossRow& row : report.history) CHECK(row.total == 0.0);
}

TEST_CASE("reconstruction reduces photometric error from a perturbed start") {
  std::mt19937_64 rng(13);
  const GaussianCloud gt = random_cloud(rng, 12, 1, 1.2);
  auto cams = two_poses(32, 40.0);
  cams.push_back(Camera::look_at({-0.5, 0.2, -0.2}, {0.0, 0.0, 4.0}, {0.0, 1.0, 0.0}, 40.0,
                                 40.0, 16.0, 16.0, 32, 32));
  const PosedViews train = views_of(gt, cams);

  GaussianCloud init = gt;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& p : init.positions)
    for (int k = 0; k < 3; ++k) p[k] += 0.05 * gauss(rng);
  for (double& v : init.sh_coeffs) v += 0.1 * gauss(rng);

  Phase1Config cfg;
  cfg.iterations = 200;
  cfg.prune_interval = 0;

  const ReconstructReport report = reconstruct(train, train, init, cfg, 21);
  REQUIRE(report.history.size() == 200);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += report.history[i].total / 10.0;
    last += report.history[190 + i].total / 10.0;
  }
  CHECK(last < 0.5 * first);
  CHECK(report.train_psnr > 20.0);
  CHECK(report.heldout_psnr == doctest::Approx(report.train_psnr));
}

TEST_CASE("reconstruction rejects malformed inputs") {
  std::mt19937_64 rng(14);
  const GaussianCloud gt = random_cloud(rng, 4, 0);
  const auto cams = two_poses(32, 40.0);
  const PosedViews train = views_of(gt, cams);
  const Phase1Config cfg;

  PosedViews single;
  single.images = {train.images[0]};
  single.cameras = {train.cameras[0]};
  CHECK_THROWS_AS(reconstruct(single, {}, gt, cfg, 0), std::invalid_argument);

  CHECK_THROWS_AS(reconstruct(train, {}, GaussianCloud{}, cfg, 0), std::invalid_argument);

  PosedViews mismatched = train;
  mismatched.cameras.pop_back();
  CHECK_THROWS_AS(reconstruct(mismatched, {}, gt, cfg, 0), std::invalid_argument);

  PosedViews wrong_size = train;
  wrong_size.images[1] = ImageBuffer(16, 16);
  CHECK_THROWS_AS(reconstruct(wrong_size, {}, gt, cfg, 0), std::invalid_argument);
}

TEST_CASE("depth predictor training reduces masked error") {
  std::mt19937_64 rng(15);
  const GaussianCloud cloud = random_cloud(rng, 8, 0);
  const auto cams = two_poses(64, 44.8);
  const PosedViews views = views_of(cloud, cams);
  std::vector<DepthBuffer> depths;
  for (const Camera& cam : cams) depths.push_back(render_depth(cloud, cam));

  const DepthTrainReport report = train_depthnet(views, depths, 30, 1e-3, 3);
  REQUIRE(report.loss_history.size() == 30);
  for (double v : report.loss_history) CHECK(std::isfinite(v));
  CHECK(report.loss_history.back() < report.loss_history.front());

  std::vector<DepthBuffer> short_depths = {depths[0]};
  CHECK_THROWS_AS(train_depthnet(views, short_depths, 10, 1e-3, 3), std::invalid_argument);
  CHECK_THROWS_AS(train_depthnet(views, depths, 0, 1e-3, 3), std::invalid_argument);
}

namespace {

struct TransferFixture {
  GaussianCloud cloud;
  std::vector<Camera> cameras;
  std::vector<ImageBuffer> pool;
  TransferNets nets;

  TransferFixture() {
    std::mt19937_64 rng(16);
    cloud = random_cloud(rng, 8, 1);
    cameras = two_poses(64, 44.8);
    const ColorMap recolor = color_map_by_id("recolor");
    for (const Camera& cam : cameras)
      pool.push_back(apply_color_map(render(cloud, cam), recolor));
    nets.extractor = make_extractor(17);
    nets.discriminator = make_discriminator(23);
    nets.depthnet = make_depthnet(29);
  }
};

}  // namespace

TEST_CASE("appearance transfer freezes structure and is deterministic") {
  const TransferFixture fx;
  Phase2Config cfg;
  cfg.iterations = 6;

  const TransferRun run = transfer(fx.cloud, fx.pool, fx.cameras, fx.nets, cfg, 77);
  REQUIRE(run.history.size() == 6);
  CHECK(serialize_structure(run.initial) == serialize_structure(fx.cloud));
  CHECK(run.initial.sh_coeffs == fx.cloud.sh_coeffs);
  CHECK(structure_checksum(run.stylized) == structure_checksum(run.initial));
  CHECK(serialize_structure(run.stylized) == serialize_structure(fx.cloud));
  CHECK(run.stylized.sh_coeffs != fx.cloud.sh_coeffs);

  // Geometry is frozen, so depth renders must match bit for bit.
  for (const Camera& cam : fx.cameras) {
    const DepthBuffer before = render_depth(run.initial, cam);
    const DepthBuffer after = render_depth(run.stylized, cam);
    CHECK(before.data == after.data);
    CHECK(before.mask == after.mask);
  }

  const TransferRun again = transfer(fx.cloud, fx.pool, fx.cameras, fx.nets, cfg, 77);
  CHECK(again.stylized.sh_coeffs == run.stylized.sh_coeffs);
  REQUIRE(again.history.size() == run.history.size());
  for (size_t i = 0; i < run.history.size(); ++i) {
    CHECK(again.history[i].total == run.history[i].total);
    CHECK(again.history[i].style == run.history[i].style);
    CHECK(again.history[i].adv == run.history[i].adv);
    CHECK(again.history[i].content == run.history[i].content);
    CHECK(again.history[i].depth == run.history[i].depth);
  }

  CHECK_THROWS_AS(transfer(fx.cloud, {}, fx.cameras, fx.nets, cfg, 0), std::invalid_argument);
  CHECK_THROWS_AS(transfer(fx.cloud, fx.pool, {}, fx.nets, cfg, 0), std::invalid_argument);
}

TEST_CASE("consistency-only transfer at the fixed point is a no-op") {
  const TransferFixture fx;
  Phase2Config cfg;
  cfg.iterations = 5;
  cfg.weights.style_on = false;
  cfg.weights.adv_on = false;

  // With only the consistency terms active and references built from the
  // input cloud itself, the starting point is already the minimizer.
  const TransferRun run = transfer(fx.cloud, fx.pool, fx.cameras, fx.nets, cfg, 5);
  CHECK(run.stylized.sh_coeffs == fx.cloud.sh_coeffs);
  for (const LossRow& row : run.history) {
    CHECK(row.total == 0.0);
    CHECK(row.style == 0.0);
    CHECK(row.adv == 0.0);
    CHECK(row.content == 0.0);
    CHECK(row.depth == 0.0);
  }
}

TEST_CASE("ablation matrix varies one loss term at a time") {
  const TransferFixture fx;
  Phase2Config cfg;
  cfg.iterations = 3;

  const auto rows = ablation_matrix(fx.cloud, fx.pool, fx.cameras, fx.nets, cfg, 9);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "full");
  CHECK(rows[1].name == "no_style");
  CHECK(rows[2].name == "no_adv");
  CHECK(rows[3].name == "no_structure");

  for (const AblationRow& row : rows) {
    CHECK(row.run.history.size() == 3);
    CHECK(serialize_structure(row.run.stylized) == serialize_structure(fx.cloud));
  }
  CHECK(rows[0].run.history[0].style > 0.0);
  for (const LossRow& row : rows[1].run.history) CHECK(row.style == 0.0);
  for (const LossRow& row : rows[2].run.history) CHECK(row.adv == 0.0);
  for (const LossRow& row : rows[3].run.history) {
    CHECK(row.content == 0.0);
    CHECK(row.depth == 0.0);
  }
}

TEST_SUITE_END();
