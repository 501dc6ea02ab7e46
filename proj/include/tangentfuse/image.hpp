#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tangentfuse/sphere_geometry.hpp"

namespace tfuse {

/// Row-major raster of `channels` interleaved doubles with a per-pixel validity mask.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;  // 1 = valid

  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0, bool valid = true);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }

  double& at(int x, int y, int c = 0) { return values[index(x, y) * channels + c]; }
  double at(int x, int y, int c = 0) const { return values[index(x, y) * channels + c]; }
  bool valid(int x, int y) const { return mask[index(x, y)] != 0; }
  void set_valid(int x, int y, bool v) { mask[index(x, y)] = v ? 1 : 0; }

  std::size_t valid_count() const;
};

/// Equirectangular image; width is always twice the height.
struct ErpImage : Image {
  ErpImage() = default;
  ErpImage(int width, int height, int channels = 1, double fill = 0.0, bool valid = true);
};

/// Image rendered on a tangent plane; dimensions follow the camera.
struct TangentImage : Image {
  TangentCamera camera;

  TangentImage() = default;
  explicit TangentImage(const TangentCamera& camera, int channels = 1, double fill = 0.0,
                        bool valid = true);
};

}  // namespace tfuse
