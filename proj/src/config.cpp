#include "sgs/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sgs/common.hpp"

namespace sgs {

namespace {

using nlohmann::json;

void require_positive(double v, const char* name) {
  if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
}

// Applies `object` onto known keys, rejecting unrecognized ones so config
// typos fail loudly instead of silently keeping a default.
void check_keys(const json& object, const std::set<std::string>& known, const char* section) {
  for (const auto& [key, value] : object.items()) {
    (void)value;
    if (!known.contains(key))
      throw DataError(std::string("config: unknown key '") + key + "' in " + section);
  }
}

void parse_phase1(const json& j, Phase1Config& out) {
  check_keys(j,
             {"iterations", "feature_lr", "position_lr", "opacity_lr", "scale_lr", "rotation_lr",
              "prune_interval", "prune_opacity_threshold", "densify_enabled", "grad_clip_norm"},
             "phase1");
  if (j.contains("iterations")) out.iterations = j.at("iterations").get<int>();
  if (j.contains("feature_lr")) out.lrs.sh = j.at("feature_lr").get<double>();
  if (j.contains("position_lr")) out.lrs.position = j.at("position_lr").get<double>();
  if (j.contains("opacity_lr")) out.lrs.opacity = j.at("opacity_lr").get<double>();
  if (j.contains("scale_lr")) out.lrs.log_scale = j.at("scale_lr").get<double>();
  if (j.contains("rotation_lr")) out.lrs.rotation = j.at("rotation_lr").get<double>();
  if (j.contains("prune_interval")) out.prune_interval = j.at("prune_interval").get<int>();
  if (j.contains("prune_opacity_threshold"))
    out.prune_opacity_threshold = j.at("prune_opacity_threshold").get<double>();
  if (j.contains("densify_enabled")) out.densify_enabled = j.at("densify_enabled").get<bool>();
  if (j.contains("grad_clip_norm")) out.grad_clip_norm = j.at("grad_clip_norm").get<double>();
}

void parse_phase2(const json& j, Phase2Config& out) {
  check_keys(j,
             {"iterations", "appearance_lr", "disc_lr", "w_style", "w_adv", "w_content",
              "w_depth", "style_on", "adv_on", "content_on", "depth_on", "grad_clip_norm"},
             "phase2");
  if (j.contains("iterations")) out.iterations = j.at("iterations").get<int>();
  if (j.contains("appearance_lr")) out.appearance_lr = j.at("appearance_lr").get<double>();
  if (j.contains("disc_lr")) out.disc_lr = j.at("disc_lr").get<double>();
  if (j.contains("w_style")) out.weights.style = j.at("w_style").get<double>();
  if (j.contains("w_adv")) out.weights.adv = j.at("w_adv").get<double>();
  if (j.contains("w_content")) out.weights.content = j.at("w_content").get<double>();
  if (j.contains("w_depth")) out.weights.depth = j.at("w_depth").get<double>();
  if (j.contains("style_on")) out.weights.style_on = j.at("style_on").get<bool>();
  if (j.contains("adv_on")) out.weights.adv_on = j.at("adv_on").get<bool>();
  if (j.contains("content_on")) out.weights.content_on = j.at("content_on").get<bool>();
  if (j.contains("depth_on")) out.weights.depth_on = j.at("depth_on").get<bool>();
  if (j.contains("grad_clip_norm")) out.grad_clip_norm = j.at("grad_clip_norm").get<double>();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (phase1.iterations <= 0 || phase2.iterations <= 0)
    throw std::invalid_argument("iteration budgets must be positive");
  require_positive(phase1.lrs.sh, "phase1.feature_lr");
  require_positive(phase1.lrs.position, "phase1.position_lr");
  require_positive(phase1.lrs.opacity, "phase1.opacity_lr");
  require_positive(phase1.lrs.log_scale, "phase1.scale_lr");
  require_positive(phase1.lrs.rotation, "phase1.rotation_lr");
  require_positive(phase2.appearance_lr, "phase2.appearance_lr");
  require_positive(phase2.disc_lr, "phase2.disc_lr");
  if (phase1.prune_interval <= 0)
    throw std::invalid_argument("phase1.prune_interval must be positive");
  if (phase1.densify_enabled)
    throw std::invalid_argument("densification is reserved and not implemented");
}

TrainConfig train_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config parse error: ") + e.what());
  }
  TrainConfig config;
  try {
    check_keys(j, {"phase1", "phase2", "seed"}, "config root");
    if (j.contains("phase1")) parse_phase1(j.at("phase1"), config.phase1);
    if (j.contains("phase2")) parse_phase2(j.at("phase2"), config.phase2);
    if (j.contains("seed")) config.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("config schema error: ") + e.what());
  }
  config.validate();
  return config;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return train_config_from_json_text(text.str());
}

std::string config_to_json(const TrainConfig& c) {
  std::ostringstream out;
  out << "{\"phase1\":{\"iterations\":" << c.phase1.iterations
      << ",\"feature_lr\":" << fmt(c.phase1.lrs.sh)
      << ",\"position_lr\":" << fmt(c.phase1.lrs.position)
      << ",\"opacity_lr\":" << fmt(c.phase1.lrs.opacity)
      << ",\"scale_lr\":" << fmt(c.phase1.lrs.log_scale)
      << ",\"rotation_lr\":" << fmt(c.phase1.lrs.rotation)
      << ",\"prune_interval\":" << c.phase1.prune_interval
      << ",\"prune_opacity_threshold\":" << fmt(c.phase1.prune_opacity_threshold)
      << ",\"densify_enabled\":" << (c.phase1.densify_enabled ? "true" : "false")
      << ",\"grad_clip_norm\":" << fmt(c.phase1.grad_clip_norm) << "},\"phase2\":{"
      << "\"iterations\":" << c.phase2.iterations
      << ",\"appearance_lr\":" << fmt(c.phase2.appearance_lr)
      << ",\"disc_lr\":" << fmt(c.phase2.disc_lr) << ",\"w_style\":" << fmt(c.phase2.weights.style)
      << ",\"w_adv\":" << fmt(c.phase2.weights.adv)
      << ",\"w_content\":" << fmt(c.phase2.weights.content)
      << ",\"w_depth\":" << fmt(c.phase2.weights.depth)
      << ",\"style_on\":" << (c.phase2.weights.style_on ? "true" : "false")
      << ",\"adv_on\":" << (c.phase2.weights.adv_on ? "true" : "false")
      << ",\"content_on\":" << (c.phase2.weights.content_on ? "true" : "false")
      << ",\"depth_on\":" << (c.phase2.weights.depth_on ? "true" : "false")
      << ",\"grad_clip_norm\":" << fmt(c.phase2.grad_clip_norm) << "},\"seed\":" << c.seed << "}";
  return out.str();
}

uint64_t config_hash(const TrainConfig& config) {
  const std::string text = config_to_json(config);
  uint64_t hash = 14695981039346656037ull;
  for (const char ch : text) {
    hash ^= static_cast<uint8_t>(ch);
    hash *= 1099511628211ull;
  }
  return hash;
}

}  // namespace sgs
