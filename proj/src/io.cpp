#include "tangentfuse/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <sstream>

#include "tangentfuse/errors.hpp"

namespace tfuse {

namespace {

std::uint32_t byte_swap(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

std::string read_token(std::istream& in) {
  std::string tok;
  in >> tok;
  if (!in) throw std::runtime_error("truncated PFM header");
  return tok;
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Json vec_json(Vec3 v) { return Json::array({v.x, v.y, v.z}); }

}  // namespace

void write_pfm(const fs::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << (img.channels == 3 ? "PF" : "Pf") << '\n'
      << img.width << ' ' << img.height << '\n'
      << "-1.0\n";

  std::vector<std::uint32_t> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const float f = img.valid(x, y) ? static_cast<float>(img.at(x, y, c))
                                        : std::numeric_limits<float>::quiet_NaN();
        std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
        if constexpr (std::endian::native == std::endian::big) bits = byte_swap(bits);
        row[static_cast<std::size_t>(x) * img.channels + c] = bits;
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Image read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  const std::string magic = read_token(in);
  int channels = 0;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else {
    throw std::runtime_error(path.string() + ": not a PFM file");
  }
  const int width = std::stoi(read_token(in));
  const int height = std::stoi(read_token(in));
  const double scale = std::stod(read_token(in));
  in.get();  // single whitespace byte before the raster
  if (width < 1 || height < 1) throw std::runtime_error(path.string() + ": bad PFM dimensions");
  const bool little = scale < 0;

  Image img(width, height, channels, 0.0, true);
  std::vector<std::uint32_t> row(static_cast<std::size_t>(width) * channels);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(std::uint32_t)));
    if (!in) throw std::runtime_error(path.string() + ": truncated PFM raster");
    for (int x = 0; x < width; ++x) {
      bool valid = true;
      for (int c = 0; c < channels; ++c) {
        std::uint32_t bits = row[static_cast<std::size_t>(x) * channels + c];
        const bool swap = little != (std::endian::native == std::endian::little);
        if (swap) bits = byte_swap(bits);
        const float f = std::bit_cast<float>(bits);
        valid = valid && std::isfinite(f);
        img.at(x, y, c) = std::isfinite(f) ? f : 0.0;
      }
      img.set_valid(x, y, valid);
    }
  }
  return img;
}

Image read_float_image(const fs::path& path) {
  if (lower_extension(path) == ".pfm") {
    Image img = read_pfm(path);
    if (img.channels == 1) return img;
    Image first(img.width, img.height, 1);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      first.values[i] = img.values[i * 3];
      first.mask[i] = img.mask[i];
    }
    return first;
  }
  // OpenCV only decodes EXR when asked to through the environment.
  setenv("OPENCV_IO_ENABLE_OPENEXR", "1", 0);
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
  if (m.empty()) throw std::runtime_error("cannot decode float image " + path.string());
  cv::Mat f;
  m.convertTo(f, CV_64F);
  Image img(f.cols, f.rows, 1);
  for (int y = 0; y < f.rows; ++y) {
    const double* src = f.ptr<double>(y);
    for (int x = 0; x < f.cols; ++x) {
      const double v = src[static_cast<std::size_t>(x) * f.channels()];
      img.at(x, y) = std::isfinite(v) ? v : 0.0;
      img.set_valid(x, y, std::isfinite(v));
    }
  }
  return img;
}

Image read_color_image(const fs::path& path) {
  if (lower_extension(path) == ".pfm") {
    Image img = read_pfm(path);
    if (img.channels == 3) return img;
    Image rgb(img.width, img.height, 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      for (int c = 0; c < 3; ++c) rgb.values[i * 3 + c] = img.values[i];
      rgb.mask[i] = img.mask[i];
    }
    return rgb;
  }
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("cannot decode image " + path.string());
  const double range = m.depth() == CV_16U ? 65535.0 : 255.0;
  cv::Mat f;
  m.convertTo(f, CV_64F, 1.0 / range);
  Image img(f.cols, f.rows, 3);
  for (int y = 0; y < f.rows; ++y) {
    const auto* src = f.ptr<cv::Vec3d>(y);
    for (int x = 0; x < f.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = src[x][2 - c];  // BGR -> RGB
  }
  return img;
}

void write_color_png(const fs::path& path, const Image& img) {
  cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    auto* dst = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        const double v = img.valid(x, y) ? std::clamp(img.at(x, y, c), 0.0, 1.0) : 0.0;
        // OpenCV stores BGR.
        const int dc = img.channels == 3 ? 2 - c : 0;
        dst[static_cast<std::size_t>(x) * img.channels + dc] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write " + path.string());
}

VisualizationRange write_visualization_png(const fs::path& path, const Image& img) {
  VisualizationRange range{std::numeric_limits<double>::infinity(),
                           -std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    if (!img.mask[i]) continue;
    const double v = img.values[i * img.channels];
    range.min = std::min(range.min, v);
    range.max = std::max(range.max, v);
  }
  if (range.min > range.max) range = {0, 0};
  const double span = range.max > range.min ? range.max - range.min : 1.0;

  cv::Mat m(img.height, img.width, CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    auto* dst = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      dst[x] = img.valid(x, y)
                   ? static_cast<std::uint8_t>(std::lround(255.0 * (img.at(x, y) - range.min) / span))
                   : 0;
    }
  }
  if (!cv::imwrite(path.string(), m)) throw std::runtime_error("cannot write " + path.string());
  return range;
}

Json layout_to_json(const IcosahedronLayout& layout) {
  Json cams = Json::array();
  for (const TangentCamera& c : layout.cameras) {
    cams.push_back({
        {"face", c.face_index},
        {"tangent_lon", c.tangent_point.lon},
        {"tangent_lat", c.tangent_point.lat},
        {"half_extent_x", c.half_extent_x},
        {"half_extent_y", c.half_extent_y},
        {"width", c.width_px},
        {"height", c.height_px},
        {"forward", vec_json(c.forward)},
        {"right", vec_json(c.right)},
        {"up", vec_json(c.up)},
    });
  }
  return {
      {"format", "tangentfuse-layout/1"},
      {"padding", layout.padding},
      {"tangent_width", layout.cameras.empty() ? 0 : layout.cameras.front().width_px},
      {"tangent_height", layout.cameras.empty() ? 0 : layout.cameras.front().height_px},
      {"conventions",
       {{"direction", "x = cos(lat) cos(lon), y = cos(lat) sin(lon), z = sin(lat); radians"},
        {"plane", "x = d.right / d.forward, y = d.up / d.forward"},
        {"pixel", "column c, row r center at x = -hx + (c + 0.5) * 2hx / width, "
                  "y = hy - (r + 0.5) * 2hy / height; row 0 at the top"},
        {"disparity", "perspective: 1 / z along forward"}}},
      {"cameras", cams},
  };
}

IcosahedronLayout layout_from_json(const Json& j) {
  IcosahedronLayout layout;
  layout.padding = j.at("padding").get<double>();
  for (const Json& c : j.at("cameras")) {
    layout.cameras.push_back(make_tangent_camera(
        SphericalCoord::normalized(c.at("tangent_lon").get<double>(),
                                   c.at("tangent_lat").get<double>()),
        c.at("half_extent_x").get<double>(), c.at("half_extent_y").get<double>(),
        c.at("width").get<int>(), c.at("height").get<int>(), layout.padding,
        c.at("face").get<int>()));
  }
  return layout;
}

std::string layout_json_text(const IcosahedronLayout& layout) {
  return layout_to_json(layout).dump(2) + "\n";
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

Json grids_to_json(const std::vector<DeformationGrid>& grids, int stage) {
  Json arr = Json::array();
  for (const DeformationGrid& g : grids) {
    arr.push_back({{"face", g.face_index},
                   {"cols", g.cols},
                   {"rows", g.rows},
                   {"scales", g.scales},
                   {"offsets", g.offsets}});
  }
  return {{"stage", stage}, {"grids", arr}};
}

std::vector<DeformationGrid> grids_from_json(const Json& j) {
  std::vector<DeformationGrid> grids;
  for (const Json& g : j.at("grids")) {
    DeformationGrid grid = DeformationGrid::identity(
        g.at("face").get<int>(), {g.at("cols").get<int>(), g.at("rows").get<int>()});
    grid.scales = g.at("scales").get<std::vector<double>>();
    grid.offsets = g.at("offsets").get<std::vector<double>>();
    if (grid.scales.size() != grid.point_count() || grid.offsets.size() != grid.point_count())
      throw ParameterError("grid checkpoint has inconsistent sizes");
    grids.push_back(std::move(grid));
  }
  return grids;
}

Json ProviderManifest::to_json() const {
  Json faces = Json::array();
  for (std::size_t i = 0; i < files.size(); ++i)
    faces.push_back({{"face", static_cast<int>(i)}, {"file", files[i]}});
  return {{"layout_hash", layout_hash},
          {"model", {{"id", model_id}, {"version", model_version}}},
          {"tangent_width", tangent_width},
          {"tangent_height", tangent_height},
          {"faces", faces}};
}

ProviderManifest ProviderManifest::from_json(const Json& j) {
  ProviderManifest m;
  m.layout_hash = j.at("layout_hash").get<std::string>();
  if (j.contains("model")) {
    m.model_id = j["model"].value("id", "");
    m.model_version = j["model"].value("version", "");
  }
  m.tangent_width = j.at("tangent_width").get<int>();
  m.tangent_height = j.at("tangent_height").get<int>();
  for (const Json& f : j.at("faces")) {
    const int face = f.at("face").get<int>();
    if (face < 0 || face >= 256) throw ParameterError("manifest face index out of range");
    if (static_cast<std::size_t>(face) >= m.files.size())
      m.files.resize(static_cast<std::size_t>(face) + 1);
    m.files[static_cast<std::size_t>(face)] = f.at("file").get<std::string>();
  }
  return m;
}

std::string face_file_name(const std::string& stem, int face, const std::string& extension) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02d.%s", stem.c_str(), face, extension.c_str());
  return buf;
}

ProviderManifest read_manifest(const fs::path& dir) {
  return ProviderManifest::from_json(read_json_file(dir / kManifestName));
}

void write_manifest(const fs::path& dir, const ProviderManifest& manifest) {
  write_text_file(dir / kManifestName, manifest.to_json().dump(2) + "\n");
}

std::vector<std::string> check_provider_directory(const fs::path& dir,
                                                  const IcosahedronLayout& layout) {
  std::vector<std::string> problems;
  if (!fs::is_directory(dir)) return {"provider directory " + dir.string() + " does not exist"};

  ProviderManifest manifest;
  try {
    manifest = read_manifest(dir);
  } catch (const std::exception& e) {
    return {std::string("manifest: ") + e.what()};
  }

  const std::string expected_hash = sha256_hex(layout_json_text(layout));
  if (manifest.layout_hash != expected_hash)
    problems.push_back("manifest layout_hash " + manifest.layout_hash +
                       " does not match layout " + expected_hash);
  const TangentCamera& cam0 = layout[0];
  if (manifest.tangent_width != cam0.width_px || manifest.tangent_height != cam0.height_px)
    problems.push_back("manifest tangent resolution " + std::to_string(manifest.tangent_width) +
                       "x" + std::to_string(manifest.tangent_height) + " differs from layout " +
                       std::to_string(cam0.width_px) + "x" + std::to_string(cam0.height_px));

  for (int face = 0; face < layout.size(); ++face) {
    const std::string tag = "face " + std::to_string(face) + ": ";
    if (static_cast<std::size_t>(face) >= manifest.files.size() ||
        manifest.files[static_cast<std::size_t>(face)].empty()) {
      problems.push_back(tag + "missing from manifest");
      continue;
    }
    const fs::path file = dir / manifest.files[static_cast<std::size_t>(face)];
    if (!fs::exists(file)) {
      problems.push_back(tag + "file " + file.string() + " not found");
      continue;
    }
    try {
      const Image img = read_pfm(file);
      if (img.channels != 1) problems.push_back(tag + "expected a single-channel PFM");
      if (img.width != layout[face].width_px || img.height != layout[face].height_px)
        problems.push_back(tag + "resolution " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + " does not match the layout");
      if (img.valid_count() != img.pixel_count())
        problems.push_back(tag + std::to_string(img.pixel_count() - img.valid_count()) +
                           " non-finite values");
    } catch (const std::exception& e) {
      problems.push_back(tag + e.what());
    }
  }
  if (manifest.files.size() > static_cast<std::size_t>(layout.size()))
    problems.push_back("manifest lists more faces than the layout");
  return problems;
}

std::vector<DisparityMap> load_provider_maps(const fs::path& dir,
                                             const IcosahedronLayout& layout) {
  ProviderManifest manifest;
  try {
    manifest = read_manifest(dir);
  } catch (const std::exception& e) {
    throw ProviderError(-1, std::string("cannot read provider manifest: ") + e.what());
  }
  if (manifest.layout_hash != sha256_hex(layout_json_text(layout)))
    throw ProviderError(-1, "provider manifest was produced for a different camera layout");

  std::vector<DisparityMap> maps;
  for (int face = 0; face < layout.size(); ++face) {
    if (static_cast<std::size_t>(face) >= manifest.files.size() ||
        manifest.files[static_cast<std::size_t>(face)].empty())
      throw ProviderError(face, "missing from provider manifest");
    const fs::path file = dir / manifest.files[static_cast<std::size_t>(face)];
    if (!fs::exists(file)) throw ProviderError(face, "missing disparity file " + file.string());
    Image img;
    try {
      img = read_pfm(file);
    } catch (const std::exception& e) {
      throw ProviderError(face, e.what());
    }
    if (img.channels != 1) throw ProviderError(face, "expected a single-channel PFM");
    if (img.width != layout[face].width_px || img.height != layout[face].height_px)
      throw ProviderError(face, "resolution does not match the camera layout");

    DisparityMap m;
    m.image = TangentImage(layout[face]);
    m.image.values = std::move(img.values);
    m.image.mask = std::move(img.mask);
    m.semantics = DisparitySemantics::perspective;
    maps.push_back(std::move(m));
  }
  return maps;
}

Json metrics_to_json(const MetricReport& r) {
  return {{"abs_rel", r.abs_rel},   {"mae", r.mae},
          {"rmse", r.rmse},         {"rmse_log", r.rmse_log},
          {"delta1", r.delta1},     {"delta2", r.delta2},
          {"delta3", r.delta3},     {"n_pixels", r.n_pixels},
          {"n_negative_depth", r.n_negative_depth}};
}

Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Json::parse(in);
}

void write_text_file(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace tfuse
