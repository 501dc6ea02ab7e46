#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "tangentfuse/alignment.hpp"
#include "tangentfuse/evaluation.hpp"
#include "tangentfuse/image.hpp"

namespace tfuse {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Raster files

/// Portable float map, little-endian (scale -1.0), rows stored bottom-up.
/// Masked pixels are written as NaN; non-finite pixels read back masked.
void write_pfm(const fs::path& path, const Image& img);
Image read_pfm(const fs::path& path);

/// PFM, or EXR when OpenCV was built with OpenEXR support. First channel only.
Image read_float_image(const fs::path& path);

/// 8- or 16-bit PNG (or any format OpenCV decodes) as RGB in [0, 1].
Image read_color_image(const fs::path& path);
/// 8-bit PNG; expects values in [0, 1]. Masked pixels are black.
void write_color_png(const fs::path& path, const Image& img);

struct VisualizationRange {
  double min = 0;
  double max = 0;
};
/// 8-bit grayscale PNG with min-max normalization over valid pixels:
/// gray = round(255 * (v - min) / (max - min)), masked pixels 0.
VisualizationRange write_visualization_png(const fs::path& path, const Image& img);

// ---------------------------------------------------------------------------
// Camera layout

Json layout_to_json(const IcosahedronLayout& layout);
IcosahedronLayout layout_from_json(const Json& j);
/// Canonical text of the layout JSON; the provider handshake hashes these bytes.
std::string layout_json_text(const IcosahedronLayout& layout);
std::string sha256_hex(const std::string& bytes);

// ---------------------------------------------------------------------------
// Deformation grid checkpoints

Json grids_to_json(const std::vector<DeformationGrid>& grids, int stage);
std::vector<DeformationGrid> grids_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Provider directory: 20 single-channel PFMs plus manifest.json.

inline constexpr const char* kManifestName = "manifest.json";

struct ProviderManifest {
  std::string layout_hash;
  std::string model_id;
  std::string model_version;
  int tangent_width = 0;
  int tangent_height = 0;
  std::vector<std::string> files;  // indexed by face

  Json to_json() const;
  static ProviderManifest from_json(const Json& j);
};

std::string face_file_name(const std::string& stem, int face, const std::string& extension);

ProviderManifest read_manifest(const fs::path& dir);
void write_manifest(const fs::path& dir, const ProviderManifest& manifest);

/// Every contract violation found in a provider directory (empty when valid).
std::vector<std::string> check_provider_directory(const fs::path& dir,
                                                  const IcosahedronLayout& layout);

/// Loads the 20 perspective disparity maps. Throws ProviderError naming the
/// face on missing or malformed files and on layout-hash mismatch.
std::vector<DisparityMap> load_provider_maps(const fs::path& dir, const IcosahedronLayout& layout);

// ---------------------------------------------------------------------------

Json metrics_to_json(const MetricReport& report);

Json read_json_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);

}  // namespace tfuse
