#include "sgs/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>
#include <png.h>

#include "sgs/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary formats are written via memcpy on a little-endian host");

namespace sgs {

namespace {

using nlohmann::json;

// Serialization cursor over a byte vector; bounds-checked reads.
struct ByteReader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;
  std::string context;

  void read(void* out, size_t n) {
    if (pos + n > bytes.size()) throw DataError(context + ": truncated file");
    std::memcpy(out, bytes.data() + pos, n);
    pos += n;
  }
  template <typename T>
  T get() {
    T value;
    read(&value, sizeof(T));
    return value;
  }
  void expect_end() {
    if (pos != bytes.size()) throw DataError(context + ": trailing bytes after payload");
  }
};

template <typename T>
void append(std::vector<uint8_t>& out, const T& value) {
  const auto* p = reinterpret_cast<const uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

void append_doubles(std::vector<uint8_t>& out, std::span<const double> values) {
  const auto* p = reinterpret_cast<const uint8_t*>(values.data());
  out.insert(out.end(), p, p + values.size() * sizeof(double));
}

struct PngReadCtx {
  FILE* file = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadCtx() {
    if (png != nullptr) png_destroy_read_struct(&png, info != nullptr ? &info : nullptr, nullptr);
    if (file != nullptr) std::fclose(file);
  }
};

struct PngWriteCtx {
  FILE* file = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteCtx() {
    if (png != nullptr) png_destroy_write_struct(&png, info != nullptr ? &info : nullptr);
    if (file != nullptr) std::fclose(file);
  }
};

Camera camera_from_manifest(const json& intr, const json& frame, const std::string& where) {
  const auto& m = frame.at("camera_to_world");
  if (!m.is_array() || m.size() != 16)
    throw DataError(where + ": camera_to_world must hold 16 numbers");
  Eigen::Matrix4d cw;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) cw(r, c) = m.at(r * 4 + c).get<double>();
  if ((cw.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
    throw DataError(where + ": last row must be [0 0 0 1]");

  Camera cam;
  cam.fx = intr.at("fx").get<double>();
  cam.fy = intr.at("fy").get<double>();
  cam.cx = intr.at("cx").get<double>();
  cam.cy = intr.at("cy").get<double>();
  cam.width = intr.at("width").get<int>();
  cam.height = intr.at("height").get<int>();
  cam.rotation = cw.block<3, 3>(0, 0);
  cam.translation = cw.block<3, 1>(0, 3);
  try {
    cam.validate();
  } catch (const std::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  return cam;
}

json camera_to_world_json(const Camera& cam) {
  Eigen::Matrix4d cw = Eigen::Matrix4d::Identity();
  cw.block<3, 3>(0, 0) = cam.rotation;
  cw.block<3, 1>(0, 3) = cam.translation;
  json out = json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out.push_back(cw(r, c));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string sha256_hex(std::span<const uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericError("sha256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string structure_checksum(const GaussianCloud& cloud) {
  const std::vector<uint8_t> bytes = serialize_structure(cloud);
  return sha256_hex(bytes);
}

ImageBuffer load_png(const std::string& path) {
  PngReadCtx ctx;
  ctx.file = std::fopen(path.c_str(), "rb");
  if (ctx.file == nullptr) throw DataError("cannot open image: " + path);

  uint8_t header[8];
  if (std::fread(header, 1, 8, ctx.file) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw DataError("not a PNG file: " + path);

  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (ctx.png == nullptr) throw DataError("png reader allocation failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (ctx.info == nullptr) throw DataError("png info allocation failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("corrupt PNG: " + path);

  png_init_io(ctx.png, ctx.file);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  // Normalize every input layout to 8-bit RGB.
  png_set_expand(ctx.png);
  png_set_strip_16(ctx.png);
  png_set_strip_alpha(ctx.png);
  if (png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const int width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  const int height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  if (png_get_rowbytes(ctx.png, ctx.info) != static_cast<size_t>(width) * 3)
    throw DataError("unsupported PNG layout: " + path);

  std::vector<uint8_t> raw(static_cast<size_t>(width) * height * 3);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + static_cast<size_t>(y) * width * 3;
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);

  ImageBuffer img(width, height);
  for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
  return img;
}

void save_png(const std::string& path, const ImageBuffer& image) {
  PngWriteCtx ctx;
  ctx.file = std::fopen(path.c_str(), "wb");
  if (ctx.file == nullptr) throw DataError("cannot write image: " + path);

  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (ctx.png == nullptr) throw DataError("png writer allocation failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (ctx.info == nullptr) throw DataError("png info allocation failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("PNG write failed: " + path);

  png_init_io(ctx.png, ctx.file);
  png_set_IHDR(ctx.png, ctx.info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  // Fixed encoder settings keep outputs reproducible across runs.
  png_set_compression_level(ctx.png, 6);
  png_write_info(ctx.png, ctx.info);

  std::vector<uint8_t> raw(static_cast<size_t>(image.width) * image.height * 3);
  for (size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(image.data[i], 0.0, 1.0);
    raw[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y)
    rows[y] = raw.data() + static_cast<size_t>(y) * image.width * 3;
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

DepthBuffer load_depth(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  ByteReader in{bytes, 0, "depth file " + path};

  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "F32D", 4) != 0) throw DataError(in.context + ": bad magic");
  if (in.get<uint32_t>() != 1) throw DataError(in.context + ": unsupported version");
  const uint32_t width = in.get<uint32_t>();
  const uint32_t height = in.get<uint32_t>();
  if (width == 0 || height == 0 || width > 1u << 16 || height > 1u << 16)
    throw DataError(in.context + ": implausible dimensions");

  DepthBuffer depth(static_cast<int>(width), static_cast<int>(height));
  for (size_t i = 0; i < depth.data.size(); ++i) {
    const float v = in.get<float>();
    if (std::isnan(v)) {
      depth.data[i] = 0.0;
      depth.mask[i] = 0;
    } else {
      depth.data[i] = v;
      depth.mask[i] = 1;
    }
  }
  in.expect_end();
  return depth;
}

void save_depth(const std::string& path, const DepthBuffer& depth) {
  std::vector<uint8_t> out;
  out.reserve(16 + depth.data.size() * 4);
  out.insert(out.end(), {'F', '3', '2', 'D'});
  append<uint32_t>(out, 1);
  append<uint32_t>(out, static_cast<uint32_t>(depth.width));
  append<uint32_t>(out, static_cast<uint32_t>(depth.height));
  for (size_t i = 0; i < depth.data.size(); ++i) {
    const float v =
        depth.mask[i] != 0 ? static_cast<float>(depth.data[i]) : std::nanf("");
    append(out, v);
  }
  write_file_bytes(path, out);
}

void save_checkpoint(const std::string& path, const GaussianCloud& cloud,
                     const CheckpointMeta& meta) {
  cloud.validate();
  std::vector<uint8_t> out;
  out.insert(out.end(), {'S', 'S', 'G', 'C'});
  append<uint32_t>(out, 1);
  append<uint32_t>(out, static_cast<uint32_t>(cloud.sh_degree));
  append<uint64_t>(out, cloud.size());
  append_doubles(out, std::span<const double>(cloud.background.data(), 3));
  append<uint32_t>(out, meta.phase);
  append<uint64_t>(out, meta.iteration);
  append<uint64_t>(out, meta.seed);
  append<uint64_t>(out, meta.config_hash);
  for (const auto& p : cloud.positions) append_doubles(out, {p.data(), 3});
  for (const auto& s : cloud.log_scales) append_doubles(out, {s.data(), 3});
  for (const auto& q : cloud.rotations) append_doubles(out, {q.data(), 4});
  append_doubles(out, cloud.opacity_logits);
  append_doubles(out, cloud.sh_coeffs);
  write_file_bytes(path, out);
}

GaussianCloud load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  ByteReader in{bytes, 0, "checkpoint " + path};

  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "SSGC", 4) != 0) throw DataError(in.context + ": bad magic");
  if (in.get<uint32_t>() != 1) throw DataError(in.context + ": unsupported version");
  const uint32_t sh_degree = in.get<uint32_t>();
  if (sh_degree > static_cast<uint32_t>(kMaxShDegree))
    throw DataError(in.context + ": unsupported sh degree");
  const uint64_t count = in.get<uint64_t>();
  if (count > (1ull << 32)) throw DataError(in.context + ": implausible point count");

  GaussianCloud cloud;
  cloud.sh_degree = static_cast<int>(sh_degree);
  in.read(cloud.background.data(), 3 * sizeof(double));

  CheckpointMeta loaded;
  loaded.phase = in.get<uint32_t>();
  loaded.iteration = in.get<uint64_t>();
  loaded.seed = in.get<uint64_t>();
  loaded.config_hash = in.get<uint64_t>();
  if (meta != nullptr) *meta = loaded;

  cloud.positions.resize(count);
  cloud.log_scales.resize(count);
  cloud.rotations.resize(count);
  cloud.opacity_logits.resize(count);
  cloud.sh_coeffs.resize(count * cloud.appearance_stride());
  for (auto& p : cloud.positions) in.read(p.data(), 3 * sizeof(double));
  for (auto& s : cloud.log_scales) in.read(s.data(), 3 * sizeof(double));
  for (auto& q : cloud.rotations) in.read(q.data(), 4 * sizeof(double));
  in.read(cloud.opacity_logits.data(), count * sizeof(double));
  in.read(cloud.sh_coeffs.data(), cloud.sh_coeffs.size() * sizeof(double));
  in.expect_end();
  cloud.validate();
  return cloud;
}

void save_scene_manifest(const std::string& path, std::span<const ManifestFrame> frames,
                         std::span<const std::string> real_pool_paths) {
  if (frames.empty()) throw std::invalid_argument("save_scene_manifest: no frames");
  const Camera& first = frames[0].camera;
  json manifest;
  manifest["version"] = 1;
  manifest["intrinsics"] = {{"fx", first.fx}, {"fy", first.fy},         {"cx", first.cx},
                            {"cy", first.cy}, {"width", first.width},   {"height", first.height}};
  json jframes = json::array();
  for (const ManifestFrame& frame : frames) {
    json jf;
    jf["image"] = frame.image_path;
    if (!frame.depth_path.empty()) jf["depth"] = frame.depth_path;
    jf["camera_to_world"] = camera_to_world_json(frame.camera);
    jf["split"] = frame.is_test ? "test" : "train";
    jframes.push_back(std::move(jf));
  }
  manifest["frames"] = std::move(jframes);
  if (!real_pool_paths.empty()) {
    json pool = json::array();
    for (const std::string& p : real_pool_paths) pool.push_back(p);
    manifest["real_pool"] = std::move(pool);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << manifest.dump(2) << "\n";
}

LoadedScene load_scene(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest: " + manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("manifest parse error in " + manifest_path + ": " + e.what());
  }

  std::vector<std::string> errors;
  LoadedScene scene;
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw DataError("manifest " + manifest_path + ": unsupported version");
    }
    const json& intr = manifest.at("intrinsics");
    const json& frames = manifest.at("frames");
    for (size_t i = 0; i < frames.size(); ++i) {
      const json& jf = frames.at(i);
      const std::string where = "frame " + std::to_string(i);
      try {
        LoadedFrame frame;
        frame.camera = camera_from_manifest(intr, jf, where);
        frame.image = load_png((base / jf.at("image").get<std::string>()).string());
        if (frame.image.width != frame.camera.width || frame.image.height != frame.camera.height)
          throw DataError(where + ": image size disagrees with intrinsics");
        if (jf.contains("depth"))
          frame.depth = load_depth((base / jf.at("depth").get<std::string>()).string());
        const std::string split = jf.at("split").get<std::string>();
        if (split == "train")
          scene.train.push_back(std::move(frame));
        else if (split == "test")
          scene.test.push_back(std::move(frame));
        else
          throw DataError(where + ": unknown split '" + split + "'");
      } catch (const std::exception& e) {
        errors.emplace_back(e.what());
      }
    }
    if (manifest.contains("real_pool")) {
      for (const auto& jp : manifest.at("real_pool")) {
        try {
          scene.real_pool.push_back(load_png((base / jp.get<std::string>()).string()));
        } catch (const std::exception& e) {
          errors.emplace_back(e.what());
        }
      }
    }
  } catch (const json::exception& e) {
    throw DataError("manifest schema error in " + manifest_path + ": " + e.what());
  }

  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "scene validation failed (" << errors.size() << " problem"
        << (errors.size() == 1 ? "" : "s") << "):";
    for (const std::string& e : errors) msg << "\n  - " << e;
    throw DataError(msg.str());
  }
  if (scene.train.empty()) throw DataError("manifest " + manifest_path + ": no training frames");
  return scene;
}

void write_loss_csv(const std::string& path, std::span<const LossRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write loss history: " + path);
  out << "iteration,total,style,adv,content,depth\n";
  for (const LossRow& row : rows) {
    out << row.iteration << ',' << format_double(row.total) << ',' << format_double(row.style)
        << ',' << format_double(row.adv) << ',' << format_double(row.content) << ','
        << format_double(row.depth) << '\n';
  }
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write: " + path);
}

}  // namespace sgs
