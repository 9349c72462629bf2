#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgs/camera.hpp"
#include "sgs/image.hpp"
#include "sgs/scene.hpp"

namespace sgs {

// Hex digest of the SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const uint8_t> bytes);

// Hex digest of the serialized structure parameters (position, log-scale,
// rotation, opacity logit per point). Appearance changes never affect it.
std::string structure_checksum(const GaussianCloud& cloud);

// 8-bit RGB PNG. Values are clamped to [0, 1] and rounded on save; loads
// map back to k/255, so a save/load/save cycle is byte-stable.
ImageBuffer load_png(const std::string& path);
void save_png(const std::string& path, const ImageBuffer& image);

// Raw float32 depth container "F32D": 16-byte header (magic, version u32,
// width u32, height u32), then row-major float32 samples, little-endian.
// Masked-out pixels are stored as quiet NaN.
DepthBuffer load_depth(const std::string& path);
void save_depth(const std::string& path, const DepthBuffer& depth);

// Training-stage provenance carried inside cloud checkpoints.
struct CheckpointMeta {
  uint32_t phase = 0;  // 0 unknown, 1 reconstruction, 2 transfer
  uint64_t iteration = 0;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
};

// Binary cloud checkpoint "SSGC": all parameters as little-endian float64,
// bitwise lossless round-trip.
void save_checkpoint(const std::string& path, const GaussianCloud& cloud,
                     const CheckpointMeta& meta = {});
GaussianCloud load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

// One posed frame of a scene on disk.
struct LoadedFrame {
  ImageBuffer image;
  Camera camera;
  std::optional<DepthBuffer> depth;
};

struct LoadedScene {
  std::vector<LoadedFrame> train;
  std::vector<LoadedFrame> test;
  std::vector<ImageBuffer> real_pool;
};

// Frame entry used when writing a manifest; paths are relative to the
// manifest directory.
struct ManifestFrame {
  std::string image_path;
  std::string depth_path;  // empty when absent
  Camera camera;
  bool is_test = false;
};

// JSON manifest schema (version 1):
//   { "version": 1,
//     "intrinsics": {"fx","fy","cx","cy","width","height"},
//     "frames": [{"image", "depth"?, "camera_to_world": [16 row-major],
//                 "split": "train"|"test"}, ...],
//     "real_pool": ["path", ...]? }
// Poses are camera-to-world with +z forward and +y down. All frames share
// the manifest intrinsics.
void save_scene_manifest(const std::string& path, std::span<const ManifestFrame> frames,
                         std::span<const std::string> real_pool_paths);

// Loads a manifest plus every referenced file. Validation problems across
// frames (missing files, non-orthonormal or reflected rotations) are
// aggregated into a single DataError.
LoadedScene load_scene(const std::string& manifest_path);

// Per-iteration loss values. CSV columns: iteration,total,style,adv,
// content,depth. Deterministic formatting; no timing columns, so a fixed
// seed reproduces the file byte-for-byte.
struct LossRow {
  int64_t iteration = 0;
  double total = 0.0, style = 0.0, adv = 0.0, content = 0.0, depth = 0.0;
};
void write_loss_csv(const std::string& path, std::span<const LossRow> rows);

// Whole-file helpers.
std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes);

}  // namespace sgs
