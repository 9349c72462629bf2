#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "sgs/config.hpp"
#include "sgs/data_io.hpp"
#include "sgs/gradcheck.hpp"
#include "sgs/metrics.hpp"
#include "sgs/pipelines.hpp"
#include "sgs/synthetic.hpp"

namespace fs = std::filesystem;
using namespace sgs;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string manifest_of(const std::string& scene) {
  fs::path p(scene);
  if (fs::is_directory(p)) p /= "manifest.json";
  return p.string();
}

PosedViews to_views(const std::vector<LoadedFrame>& frames) {
  PosedViews views;
  for (const LoadedFrame& f : frames) {
    views.images.push_back(f.image);
    views.cameras.push_back(f.camera);
  }
  return views;
}

nlohmann::json json_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(path, {reinterpret_cast<const uint8_t*>(text.data()), text.size()});
}

// Deterministic coarse scene estimate with no ground-truth knowledge:
// points along each training camera's optical axis at staggered depths and
// slight lateral offsets.
std::vector<Eigen::Vector3d> frustum_seeds(const std::vector<Camera>& cams, size_t count) {
  std::vector<Eigen::Vector3d> seeds;
  seeds.reserve(count);
  const double lateral[5][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (size_t k = 0; seeds.size() < count; ++k) {
    const Camera& cam = cams[k % cams.size()];
    const size_t layer = k / cams.size();
    const double depth = 0.75 + 0.5 * static_cast<double>(layer % 8);
    const double* off = lateral[(layer / 8) % 5];
    const double spread = 0.25 * depth;
    const Eigen::Vector3d dir =
        cam.rotation * Eigen::Vector3d(off[0] * spread / depth, off[1] * spread / depth, 1.0);
    seeds.push_back(cam.translation + depth * dir);
  }
  return seeds;
}

Eigen::Vector3d mean_color(const ImageBuffer& image) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  const size_t pixels = image.data.size() / 3;
  for (size_t i = 0; i < image.data.size(); i += 3)
    sum += Eigen::Vector3d(image.data[i], image.data[i + 1], image.data[i + 2]);
  return pixels ? Eigen::Vector3d(sum / static_cast<double>(pixels)) : sum;
}

std::vector<ImageBuffer> load_png_dir(const std::string& dir) {
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  std::vector<ImageBuffer> images;
  images.reserve(paths.size());
  for (const fs::path& p : paths) images.push_back(load_png(p.string()));
  return images;
}

struct TransferInputs {
  LoadedScene scene;
  GaussianCloud cloud;
  std::vector<Camera> cameras;
  TransferNets nets;
};

// Shared setup for `transfer` and `ablate`: style pool and cameras from the
// scene manifest, seeded fresh extractor/discriminator, and a depth
// predictor either loaded from disk or pretrained on the input cloud's own
// renders and depth maps.
TransferInputs prepare_transfer(const std::string& scene_dir, const std::string& cloud_path,
                                const std::string& depthnet_path, int depth_iterations,
                                const TrainConfig& cfg, int threads) {
  TransferInputs in;
  in.scene = load_scene(manifest_of(scene_dir));
  if (in.scene.real_pool.empty())
    throw DataError("transfer: the scene manifest lists no real_pool images");
  if (in.scene.train.empty()) throw DataError("transfer: the scene has no train frames");
  in.cloud = load_checkpoint(cloud_path);
  for (const LoadedFrame& f : in.scene.train) in.cameras.push_back(f.camera);

  std::mt19937_64 net_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  in.nets.extractor = make_extractor(net_rng());
  in.nets.discriminator = make_discriminator(net_rng());
  if (!depthnet_path.empty()) {
    in.nets.depthnet = load_net(depthnet_path);
  } else {
    RenderOptions opts;
    opts.threads = threads;
    PosedViews views;
    std::vector<DepthBuffer> depths;
    for (const Camera& cam : in.cameras) {
      views.images.push_back(render(in.cloud, cam, opts));
      views.cameras.push_back(cam);
      depths.push_back(render_depth(in.cloud, cam, opts));
    }
    in.nets.depthnet =
        train_depthnet(views, depths, depth_iterations, 1e-3, cfg.seed, threads).net;
  }
  return in;
}

std::vector<LossRow> depth_loss_rows(const std::vector<double>& history) {
  std::vector<LossRow> rows;
  rows.reserve(history.size());
  for (size_t i = 0; i < history.size(); ++i)
    rows.push_back({static_cast<int64_t>(i), history[i], 0.0, 0.0, 0.0, 0.0});
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-phase stylized gaussian splatting toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  uint64_t seed_flag = 0;
  int threads = 1;
  app.add_option("--config", config_path, "JSON training-config file");
  auto* seed_opt = app.add_option("--seed", seed_flag, "Seed overriding the config value");
  app.add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads")->capture_default_str();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic posed scene");
  std::string synth_layout = "tube", synth_scheme = "warm", synth_pool_map;
  int synth_points = 200, synth_train = 20, synth_test = 5, synth_w = 128, synth_h = 128;
  synth->add_option("--spec", synth_layout, "Scene layout: tube or sphere")
      ->capture_default_str();
  synth->add_option("--scheme", synth_scheme, "Albedo scheme: warm or cool")
      ->capture_default_str();
  synth->add_option("--points", synth_points, "Gaussian count target")->capture_default_str();
  synth->add_option("--train", synth_train, "Training view count")->capture_default_str();
  synth->add_option("--test", synth_test, "Held-out view count")->capture_default_str();
  synth->add_option("--width", synth_w, "Image width")->capture_default_str();
  synth->add_option("--height", synth_h, "Image height")->capture_default_str();
  synth->add_option("--pool-map", synth_pool_map,
                    "Color map id; when set, writes a recolored style pool");

  auto* reconstruct_cmd = app.add_subcommand("reconstruct", "Fit a cloud to posed images");
  std::string rec_scene, rec_init;
  size_t rec_init_count = 1000;
  double rec_init_jitter = 0.05;
  int rec_sh_degree = 2;
  reconstruct_cmd->add_option("--scene", rec_scene, "Scene directory or manifest path")
      ->required();
  reconstruct_cmd->add_option("--init", rec_init,
                              "Checkpoint whose positions seed the new cloud");
  reconstruct_cmd->add_option("--init-count", rec_init_count,
                              "Seed count when no --init checkpoint is given")
      ->capture_default_str();
  reconstruct_cmd->add_option("--init-jitter", rec_init_jitter, "Seed position jitter")
      ->capture_default_str();
  reconstruct_cmd->add_option("--sh-degree", rec_sh_degree, "Spherical-harmonic degree")
      ->capture_default_str();

  auto* train_depth = app.add_subcommand("train-depth", "Pretrain the depth predictor");
  std::string td_scene;
  int td_iterations = 300;
  double td_lr = 1e-3;
  train_depth->add_option("--scene", td_scene, "Scene directory or manifest path")->required();
  train_depth->add_option("--iterations", td_iterations, "Training steps")
      ->capture_default_str();
  train_depth->add_option("--lr", td_lr, "Learning rate")->capture_default_str();

  auto* transfer_cmd = app.add_subcommand("transfer", "Appearance-only style transfer");
  std::string tr_scene, tr_cloud, tr_depthnet;
  int tr_depth_iterations = 200;
  transfer_cmd->add_option("--scene", tr_scene, "Scene directory or manifest path")
      ->required();
  transfer_cmd->add_option("--cloud", tr_cloud, "Input cloud checkpoint")->required();
  transfer_cmd->add_option("--depthnet", tr_depthnet, "Pretrained depth-net weights");
  transfer_cmd->add_option("--depth-iterations", tr_depth_iterations,
                           "Depth pretraining steps when no --depthnet is given")
      ->capture_default_str();

  auto* render_cmd = app.add_subcommand("render", "Render a cloud at scene poses");
  std::string rd_cloud, rd_scene, rd_split = "test";
  bool rd_depth = false, rd_bench = false;
  render_cmd->add_option("--cloud", rd_cloud, "Cloud checkpoint")->required();
  render_cmd->add_option("--scene", rd_scene, "Scene directory or manifest path")->required();
  render_cmd->add_option("--split", rd_split, "Pose split: train or test")
      ->capture_default_str();
  render_cmd->add_flag("--depth", rd_depth, "Also write depth maps");
  render_cmd->add_flag("--bench", rd_bench, "Measure renders/second, 100 frames at 512x512");

  auto* eval_cmd = app.add_subcommand("eval", "Metrics between two image folders");
  std::string ev_a, ev_b, ev_extractor, ev_report;
  eval_cmd->add_option("--a", ev_a, "First image folder")->required();
  eval_cmd->add_option("--b", ev_b, "Second image folder")->required();
  eval_cmd->add_option("--extractor", ev_extractor, "Feature-extractor weights (.ssnw)");
  eval_cmd->add_option("--report", ev_report, "JSON report path (default out-dir/metrics.json)");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  int gc_scenes = 3;
  gradcheck_cmd->add_option("--scenes", gc_scenes, "Random scenes for the render check")
      ->capture_default_str();

  auto* ablate_cmd = app.add_subcommand("ablate", "Transfer once per loss configuration");
  std::string ab_scene, ab_cloud, ab_depthnet;
  int ab_depth_iterations = 200;
  ablate_cmd->add_option("--scene", ab_scene, "Scene directory or manifest path")->required();
  ablate_cmd->add_option("--cloud", ab_cloud, "Input cloud checkpoint")->required();
  ablate_cmd->add_option("--depthnet", ab_depthnet, "Pretrained depth-net weights");
  ablate_cmd->add_option("--depth-iterations", ab_depth_iterations,
                         "Depth pretraining steps when no --depthnet is given")
      ->capture_default_str();

  for (CLI::App* sub :
       {synth, reconstruct_cmd, train_depth, transfer_cmd, render_cmd, eval_cmd, gradcheck_cmd,
        ablate_cmd})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    TrainConfig cfg;
    if (!config_path.empty()) cfg = load_train_config(config_path);
    if (seed_opt->count() > 0) cfg.seed = seed_flag;
    cfg.validate();
    if (threads < 1) throw std::invalid_argument("--threads must be positive");
    fs::create_directories(out_dir);
    RenderOptions opts;
    opts.threads = threads;

    if (app.got_subcommand(synth)) {
      SyntheticSceneSpec spec;
      spec.layout = synth_layout;
      spec.scheme = synth_scheme;
      spec.point_target = synth_points;
      spec.train_count = synth_train;
      spec.test_count = synth_test;
      spec.width = synth_w;
      spec.height = synth_h;
      spec.seed = cfg.seed;
      spec.pool_map = synth_pool_map;
      const GaussianCloud gt = generate_synthetic(spec, out_dir, threads);
      CheckpointMeta meta;
      meta.phase = 0;
      meta.seed = cfg.seed;
      save_checkpoint((fs::path(out_dir) / "gt.ssgc").string(), gt, meta);
      std::cout << "scene: " << gt.size() << " gaussians, " << synth_train << " train / "
                << synth_test << " test views -> " << out_dir << "\n";
    } else if (app.got_subcommand(reconstruct_cmd)) {
      const LoadedScene scene = load_scene(manifest_of(rec_scene));
      const PosedViews train = to_views(scene.train);
      const PosedViews heldout = to_views(scene.test);
      if (train.size() < 2) throw DataError("reconstruct: need at least 2 train frames");

      std::vector<Eigen::Vector3d> seeds;
      Eigen::Vector3d background;
      if (!rec_init.empty()) {
        const GaussianCloud init_cloud = load_checkpoint(rec_init);
        seeds = init_cloud.positions;
        background = init_cloud.background;
      } else {
        if (rec_init_count == 0)
          throw std::invalid_argument("reconstruct: --init-count must be positive");
        seeds = frustum_seeds(train.cameras, rec_init_count);
        background = mean_color(train.images.front());
      }
      const GaussianCloud init =
          init_cloud_from_seeds(seeds, rec_sh_degree, background, cfg.seed, rec_init_jitter);

      const auto start = Clock::now();
      const ReconstructReport rep =
          reconstruct(train, heldout, init, cfg.phase1, cfg.seed, threads);
      const double elapsed = seconds_since(start);

      CheckpointMeta meta;
      meta.phase = 1;
      meta.iteration = static_cast<uint64_t>(cfg.phase1.iterations);
      meta.seed = cfg.seed;
      meta.config_hash = config_hash(cfg);
      save_checkpoint((fs::path(out_dir) / "cloud.ssgc").string(), rep.cloud, meta);
      write_loss_csv((fs::path(out_dir) / "loss.csv").string(), rep.history);

      nlohmann::json j;
      j["points"] = rep.cloud.size();
      j["pruned_points"] = rep.pruned_points;
      j["extent"] = rep.extent;
      j["train_psnr_db"] = json_number(rep.train_psnr);
      j["heldout_psnr_db"] = json_number(rep.heldout_psnr);
      j["iterations_per_second"] = elapsed > 0 ? cfg.phase1.iterations / elapsed : 0.0;
      write_json((fs::path(out_dir) / "report.json").string(), j);

      std::cout << "reconstructed " << rep.cloud.size() << " gaussians (pruned "
                << rep.pruned_points << ")\n"
                << "train PSNR: " << rep.train_psnr << " dB";
      if (rep.heldout_psnr >= 0) std::cout << ", held-out PSNR: " << rep.heldout_psnr << " dB";
      std::cout << "\niterations/s: " << (elapsed > 0 ? cfg.phase1.iterations / elapsed : 0.0)
                << "\n";
    } else if (app.got_subcommand(train_depth)) {
      const LoadedScene scene = load_scene(manifest_of(td_scene));
      PosedViews views;
      std::vector<DepthBuffer> depths;
      for (const LoadedFrame& f : scene.train) {
        if (!f.depth) continue;
        views.images.push_back(f.image);
        views.cameras.push_back(f.camera);
        depths.push_back(*f.depth);
      }
      if (depths.empty()) throw DataError("train-depth: the scene has no depth maps");
      const DepthTrainReport rep =
          train_depthnet(views, depths, td_iterations, td_lr, cfg.seed, threads);
      save_net((fs::path(out_dir) / "depthnet.ssnw").string(), rep.net);
      const auto rows = depth_loss_rows(rep.loss_history);
      write_loss_csv((fs::path(out_dir) / "depth_loss.csv").string(), rows);
      std::cout << "depth loss: " << rep.loss_history.front() << " -> "
                << rep.loss_history.back() << " over " << td_iterations << " steps\n";
    } else if (app.got_subcommand(transfer_cmd)) {
      TransferInputs in = prepare_transfer(tr_scene, tr_cloud, tr_depthnet,
                                           tr_depth_iterations, cfg, threads);
      const auto start = Clock::now();
      const TransferRun run = transfer(in.cloud, in.scene.real_pool, in.cameras, in.nets,
                                       cfg.phase2, cfg.seed, threads);
      const double elapsed = seconds_since(start);

      const std::string before = structure_checksum(run.initial);
      const std::string after = structure_checksum(run.stylized);
      CheckpointMeta meta;
      meta.phase = 2;
      meta.iteration = static_cast<uint64_t>(cfg.phase2.iterations);
      meta.seed = cfg.seed;
      meta.config_hash = config_hash(cfg);
      save_checkpoint((fs::path(out_dir) / "stylized.ssgc").string(), run.stylized, meta);
      write_loss_csv((fs::path(out_dir) / "loss.csv").string(), run.history);

      nlohmann::json j;
      j["structure_checksum_before"] = before;
      j["structure_checksum_after"] = after;
      j["structure_frozen"] = before == after;
      j["generator_seconds"] = run.generator_seconds;
      j["discriminator_seconds"] = run.discriminator_seconds;
      j["iterations_per_second"] = elapsed > 0 ? cfg.phase2.iterations / elapsed : 0.0;
      write_json((fs::path(out_dir) / "report.json").string(), j);

      std::cout << "structure checksum before: " << before << "\n"
                << "structure checksum after:  " << after << "\n"
                << (before == after ? "structure frozen: yes" : "structure frozen: NO")
                << "\nfinal loss: " << run.history.back().total << "\n";
    } else if (app.got_subcommand(render_cmd)) {
      const GaussianCloud cloud = load_checkpoint(rd_cloud);
      const LoadedScene scene = load_scene(manifest_of(rd_scene));
      if (rd_split != "train" && rd_split != "test")
        throw std::invalid_argument("render: --split must be train or test");
      const auto& frames = rd_split == "train" ? scene.train : scene.test;

      if (rd_bench) {
        Camera cam = frames.empty() ? scene.train.front().camera : frames.front().camera;
        const double sx = 512.0 / cam.width, sy = 512.0 / cam.height;
        cam.fx *= sx;
        cam.cx *= sx;
        cam.fy *= sy;
        cam.cy *= sy;
        cam.width = cam.height = 512;
        const auto start = Clock::now();
        for (int i = 0; i < 100; ++i) render(cloud, cam, opts);
        const double elapsed = seconds_since(start);
        MetricReport rep;
        rep.renders_per_second = 100.0 / elapsed;
        std::cout << "renders/s: " << rep.renders_per_second << " (100 frames at 512x512)\n";
        return 0;
      }

      if (frames.empty()) throw DataError("render: the requested split has no frames");
      for (size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "render_%03zu.png", i);
        save_png((fs::path(out_dir) / name).string(), render(cloud, frames[i].camera, opts));
        if (rd_depth) {
          std::snprintf(name, sizeof(name), "depth_%03zu.f32d", i);
          save_depth((fs::path(out_dir) / name).string(),
                     render_depth(cloud, frames[i].camera, opts));
        }
      }
      std::cout << "wrote " << frames.size() << " renders to " << out_dir << "\n";
    } else if (app.got_subcommand(eval_cmd)) {
      const std::vector<ImageBuffer> a = load_png_dir(ev_a);
      const std::vector<ImageBuffer> b = load_png_dir(ev_b);
      if (a.empty() || b.empty()) throw DataError("eval: a folder contains no .png images");
      if (a.size() != b.size()) throw DataError("eval: folder image counts differ");
      const ConvNet extractor =
          ev_extractor.empty() ? make_extractor(cfg.seed) : load_net(ev_extractor);
      const MetricReport rep = evaluate_image_sets(a, b, &extractor);
      std::cout << format_metric_report(rep);

      nlohmann::json j;
      j["psnr_db"] = nlohmann::json::array();
      j["ssim"] = nlohmann::json::array();
      for (double v : rep.psnr_db) j["psnr_db"].push_back(json_number(v));
      for (double v : rep.ssim_value) j["ssim"].push_back(json_number(v));
      j["mean_psnr_db"] = json_number(rep.mean_psnr_db);
      j["mean_ssim"] = json_number(rep.mean_ssim);
      j["feature_distance"] = rep.feature_dist;
      const std::string report_path =
          ev_report.empty() ? (fs::path(out_dir) / "metrics.json").string() : ev_report;
      write_json(report_path, j);
    } else if (app.got_subcommand(gradcheck_cmd)) {
      if (gc_scenes < 1) throw std::invalid_argument("gradcheck: --scenes must be positive");
      const GradCheckReport cloud_report = check_cloud_gradients(cfg.seed, gc_scenes);
      const GradCheckReport net_report = check_net_gradients(cfg.seed + 1);
      const GradCheckReport loss_report = check_loss_gradients(cfg.seed + 2);
      std::cout << "rendering gradients:\n" << format_gradcheck(cloud_report)
                << "layer gradients:\n" << format_gradcheck(net_report)
                << "loss image-gradients:\n" << format_gradcheck(loss_report);
      if (!cloud_report.all_pass() || !net_report.all_pass() || !loss_report.all_pass())
        throw NumericError("gradcheck: at least one check exceeded tolerance");
      std::cout << "all gradient checks passed\n";
    } else if (app.got_subcommand(ablate_cmd)) {
      TransferInputs in = prepare_transfer(ab_scene, ab_cloud, ab_depthnet,
                                           ab_depth_iterations, cfg, threads);
      const auto rows =
          ablation_matrix(in.cloud, in.scene.real_pool, in.cameras, in.nets, cfg.phase2,
                          cfg.seed, threads);

      std::vector<Camera> eval_cams;
      for (const LoadedFrame& f : in.scene.test) eval_cams.push_back(f.camera);
      if (eval_cams.empty()) eval_cams = in.cameras;

      nlohmann::json j = nlohmann::json::array();
      std::cout << "  variant        final loss   pool feature distance\n";
      for (const AblationRow& row : rows) {
        std::vector<ImageBuffer> renders;
        for (const Camera& cam : eval_cams)
          renders.push_back(render(row.run.stylized, cam, opts));
        const double fd = feature_distance(renders, in.scene.real_pool, in.nets.extractor);
        save_checkpoint((fs::path(out_dir) / (row.name + ".ssgc")).string(),
                        row.run.stylized);
        write_loss_csv((fs::path(out_dir) / (row.name + "_loss.csv")).string(),
                       row.run.history);
        std::cout << "  " << row.name;
        for (size_t i = row.name.size(); i < 15; ++i) std::cout << ' ';
        std::cout << row.run.history.back().total << "   " << fd << "\n";
        j.push_back({{"name", row.name},
                     {"final_loss", row.run.history.back().total},
                     {"pool_feature_distance", fd}});
      }
      write_json((fs::path(out_dir) / "ablation.json").string(), j);
    }
    return 0;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
