#include "sgs/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sgs/common.hpp"
#include "sgs/metrics.hpp"
#include "sgs/optim.hpp"

namespace sgs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Epoch-shuffled index stream: every item appears once per epoch, order
// reshuffled from the shared RNG.
class SampleSchedule {
 public:
  SampleSchedule(size_t count, std::mt19937_64& rng) : order_(count), rng_(rng) {
    std::iota(order_.begin(), order_.end(), size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  size_t next() {
    if (cursor_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

 private:
  std::vector<size_t> order_;
  size_t cursor_ = 0;
  std::mt19937_64& rng_;
};

double mean_psnr(const GaussianCloud& cloud, const PosedViews& views, const RenderOptions& opts) {
  double total = 0.0;
  for (size_t i = 0; i < views.size(); ++i)
    total += psnr(render(cloud, views.cameras[i], opts), views.images[i]);
  return total / static_cast<double>(views.size());
}

}  // namespace

GaussianCloud init_cloud_from_seeds(std::span<const Eigen::Vector3d> seeds, int sh_degree,
                                    const Eigen::Vector3d& background, uint64_t seed,
                                    double jitter_sigma) {
  if (seeds.empty()) throw std::invalid_argument("init_cloud_from_seeds: no seed positions");
  if (!(jitter_sigma > 0.0))
    throw std::invalid_argument("init_cloud_from_seeds: jitter must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  GaussianCloud cloud;
  cloud.sh_degree = sh_degree;
  cloud.background = background;
  const double log_scale = std::log(jitter_sigma);
  std::vector<double> sh(cloud.appearance_stride(), 0.0);
  for (const Eigen::Vector3d& p : seeds) {
    Eigen::Vector3d pos = p;
    for (int k = 0; k < 3; ++k) pos[k] += jitter_sigma * gauss(rng);
    cloud.add_point(pos, Eigen::Vector3d::Constant(log_scale), {1.0, 0.0, 0.0, 0.0},
                    inverse_sigmoid(0.5), sh);
  }
  return cloud;
}

double cloud_extent(const GaussianCloud& cloud) {
  if (cloud.size() == 0) return 1.0;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : cloud.positions) centroid += p;
  centroid /= static_cast<double>(cloud.size());
  double extent = 0.0;
  for (const auto& p : cloud.positions) extent = std::max(extent, (p - centroid).norm());
  return extent > 0.0 ? extent : 1.0;
}

ReconstructReport reconstruct(const PosedViews& train, const PosedViews& heldout,
                              GaussianCloud init, const Phase1Config& config, uint64_t seed,
                              int threads) {
  if (train.images.size() != train.cameras.size() ||
      heldout.images.size() != heldout.cameras.size())
    throw std::invalid_argument("reconstruct: image/camera count mismatch");
  if (train.size() < 2) throw std::invalid_argument("reconstruct: need at least 2 views");
  if (init.size() == 0) throw std::invalid_argument("reconstruct: empty initial cloud");
  for (size_t i = 0; i < train.size(); ++i)
    if (train.images[i].width != train.cameras[i].width ||
        train.images[i].height != train.cameras[i].height)
      throw std::invalid_argument("reconstruct: view size disagrees with camera");

  ReconstructReport report;
  report.cloud = std::move(init);
  report.extent = cloud_extent(report.cloud);
  GaussianCloud& cloud = report.cloud;

  CloudLearningRates lrs = config.lrs;
  lrs.position *= report.extent;

  RenderOptions opts;
  opts.threads = threads;
  CloudAdam adam(cloud);
  std::mt19937_64 rng(seed);
  SampleSchedule schedule(train.size(), rng);
  const size_t initial_points = cloud.size();

  for (int iter = 0; iter < config.iterations; ++iter) {
    const size_t view = schedule.next();
    const ImageBuffer rendered = render(cloud, train.cameras[view], opts);
    auto [loss, grad] = loss_rgb(rendered, train.images[view]);
    if (!std::isfinite(loss)) throw NumericError("reconstruct: non-finite loss");
    CloudGradients grads = render_backward(cloud, train.cameras[view], grad, opts);
    clip_cloud_gradients(grads, config.grad_clip_norm);
    cloud_adam_step(cloud, grads, adam, lrs);
    report.history.push_back({iter, loss, 0.0, 0.0, 0.0, 0.0});

    if (config.prune_interval > 0 && iter > 0 && iter % config.prune_interval == 0) {
      std::vector<size_t> kept;
      for (size_t i = 0; i < cloud.size(); ++i)
        if (cloud.activated_opacity(i) >= config.prune_opacity_threshold) kept.push_back(i);
      if (kept.empty()) throw NumericError("reconstruct: pruning removed every point");
      if (kept.size() < cloud.size()) {
        adam.filter(kept, cloud);
        cloud.keep_points(kept);
      }
    }
  }

  report.pruned_points = initial_points - cloud.size();
  report.train_psnr = mean_psnr(cloud, train, opts);
  if (heldout.size() > 0) report.heldout_psnr = mean_psnr(cloud, heldout, opts);
  return report;
}

DepthTrainReport train_depthnet(const PosedViews& views, std::span<const DepthBuffer> depths,
                                int iterations, double lr, uint64_t seed, int threads) {
  (void)threads;  // forward/backward of the depth net are single-threaded
  if (views.size() == 0 || views.size() != depths.size())
    throw std::invalid_argument("train_depthnet: need aligned nonempty views and depths");
  if (iterations <= 0 || !(lr > 0.0))
    throw std::invalid_argument("train_depthnet: bad training budget");

  std::mt19937_64 rng(seed);
  DepthTrainReport report;
  report.net = make_depthnet(rng());
  NetAdam adam(report.net);
  AdamConfig cfg;
  cfg.lr = lr;
  SampleSchedule schedule(views.size(), rng);
  const int output_layer = static_cast<int>(report.net.layers.size()) - 1;

  for (int iter = 0; iter < iterations; ++iter) {
    const size_t idx = schedule.next();
    const DepthBuffer& target = depths[idx];
    const Activations acts = report.net.forward(to_tensor(views.images[idx]));
    const Tensor3& pred = acts.output();

    // MSE over valid target pixels only.
    size_t valid = 0;
    for (uint8_t m : target.mask) valid += m;
    if (valid == 0) continue;
    Tensor3 grad(pred.channels, pred.height, pred.width);
    double loss = 0.0;
    for (size_t i = 0; i < target.data.size(); ++i) {
      if (target.mask[i] == 0) continue;
      const double diff = pred.data[i] - target.data[i];
      loss += diff * diff;
      grad.data[i] = 2.0 * diff / static_cast<double>(valid);
    }
    loss /= static_cast<double>(valid);
    if (!std::isfinite(loss)) throw NumericError("train_depthnet: non-finite loss");

    NetGradients param_grads;
    TapGradient tap{output_layer, std::move(grad)};
    report.net.backward(acts, {&tap, 1}, &param_grads);
    adam.step(report.net, param_grads, cfg);
    report.loss_history.push_back(loss);
  }
  return report;
}

TransferRun transfer(const GaussianCloud& cloud, std::span<const ImageBuffer> real_pool,
                     std::span<const Camera> cameras, TransferNets nets,
                     const Phase2Config& config, uint64_t seed, int threads) {
  if (real_pool.empty()) throw std::invalid_argument("transfer: empty real pool");
  if (cameras.empty()) throw std::invalid_argument("transfer: no cameras");
  cloud.validate();

  RenderOptions opts;
  opts.threads = threads;

  TransferRun run;
  run.initial = cloud;
  run.stylized = cloud;

  // Frozen per-camera references and pooled style targets.
  std::vector<ViewReference> refs;
  refs.reserve(cameras.size());
  for (const Camera& cam : cameras)
    refs.push_back(build_view_reference(nets, render(cloud, cam, opts)));
  const StyleStats style_target = pool_style_stats(nets.extractor, real_pool);

  AdamState sh_state;
  sh_state.resize(run.stylized.sh_coeffs.size());
  NetAdam disc_state(nets.discriminator);
  AdamConfig disc_cfg;
  disc_cfg.lr = config.disc_lr;

  std::mt19937_64 rng(seed);
  SampleSchedule cam_schedule(cameras.size(), rng);
  std::uniform_int_distribution<size_t> pool_pick(0, real_pool.size() - 1);

  for (int iter = 0; iter < config.iterations; ++iter) {
    const auto gen_start = Clock::now();
    const size_t cam = cam_schedule.next();
    const ImageBuffer generated = render(run.stylized, cameras[cam], opts);
    const LossReport report =
        loss_combined(generated, refs[cam], style_target, nets, config.weights);
    if (!std::isfinite(report.total)) throw NumericError("transfer: non-finite loss");

    CloudGradients grads = render_backward(run.stylized, cameras[cam], report.image_grad, opts);
    clip_appearance_gradients(grads, config.grad_clip_norm);
    appearance_adam_step(run.stylized, grads, sh_state, config.appearance_lr);
    run.generator_seconds += seconds_since(gen_start);

    const auto disc_start = Clock::now();
    loss_disc_step(nets.discriminator, disc_state, real_pool[pool_pick(rng)], generated,
                   disc_cfg);
    run.discriminator_seconds += seconds_since(disc_start);

    run.history.push_back(
        {iter, report.total, report.style, report.adv, report.content, report.depth});
  }

  if (serialize_structure(run.initial) != serialize_structure(run.stylized))
    throw std::logic_error("transfer: structure parameters drifted");
  return run;
}

std::vector<AblationRow> ablation_matrix(const GaussianCloud& cloud,
                                         std::span<const ImageBuffer> real_pool,
                                         std::span<const Camera> cameras,
                                         const TransferNets& nets, const Phase2Config& base,
                                         uint64_t seed, int threads) {
  std::vector<AblationRow> rows;
  const auto run_variant = [&](const std::string& name, auto mutate) {
    Phase2Config config = base;
    mutate(config);
    rows.push_back({name, transfer(cloud, real_pool, cameras, nets, config, seed, threads)});
  };
  run_variant("full", [](Phase2Config&) {});
  run_variant("no_style", [](Phase2Config& c) { c.weights.style_on = false; });
  run_variant("no_adv", [](Phase2Config& c) { c.weights.adv_on = false; });
  run_variant("no_structure", [](Phase2Config& c) {
    c.weights.content_on = false;
    c.weights.depth_on = false;
  });
  return rows;
}

}  // namespace sgs
