#include "tangentfuse/resampling.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace tfuse {

namespace {

int wrap_index(int i, int n) {
  i %= n;
  return i < 0 ? i + n : i;
}

}  // namespace

bool sample_image(const Image& img, double col, double row, bool wrap_x, Filter filter,
                  double* out) {
  const int channels = img.channels;

  if (filter == Filter::nearest) {
    int x = static_cast<int>(std::floor(col + 0.5));
    int y = static_cast<int>(std::floor(row + 0.5));
    y = std::clamp(y, 0, img.height - 1);
    if (wrap_x) {
      x = wrap_index(x, img.width);
    } else {
      x = std::clamp(x, 0, img.width - 1);
    }
    if (!img.valid(x, y)) return false;
    for (int c = 0; c < channels; ++c) out[c] = img.at(x, y, c);
    return true;
  }

  const double fx = std::floor(col);
  const double fy = std::floor(row);
  const double tx = col - fx;
  const double ty = row - fy;
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);

  std::array<double, 3> acc{0, 0, 0};
  double weight_sum = 0;
  for (int dy = 0; dy < 2; ++dy) {
    const double wy = dy ? ty : 1 - ty;
    if (wy == 0) continue;
    int y = y0 + dy;
    if (wrap_x) {
      y = std::clamp(y, 0, img.height - 1);
    } else if (y < 0 || y >= img.height) {
      continue;
    }
    for (int dx = 0; dx < 2; ++dx) {
      const double wx = dx ? tx : 1 - tx;
      if (wx == 0) continue;
      int x = x0 + dx;
      if (wrap_x) {
        x = wrap_index(x, img.width);
      } else if (x < 0 || x >= img.width) {
        continue;
      }
      if (!img.valid(x, y)) continue;
      const double w = wx * wy;
      weight_sum += w;
      for (int c = 0; c < channels; ++c) acc[c] += w * img.at(x, y, c);
    }
  }
  if (weight_sum <= 0) return false;
  for (int c = 0; c < channels; ++c) out[c] = acc[c] / weight_sum;
  return true;
}

bool sample_erp(const ErpImage& erp, Vec3 direction, Filter filter, double* out) {
  const PixelPoint p =
      spherical_to_erp_pixel(SphericalCoord::from_unit_vector(direction), erp.width, erp.height);
  return sample_image(erp, p.u, p.v, true, filter, out);
}

bool sample_tangent(const TangentImage& img, double x, double y, Filter filter, double* out) {
  if (!img.camera.contains(x, y)) return false;
  const PixelPoint p = img.camera.plane_to_pixel(x, y);
  return sample_image(img, p.u, p.v, false, filter, out);
}

TangentImage erp_to_tangent(const ErpImage& erp, const TangentCamera& camera, Filter filter) {
  TangentImage out(camera, erp.channels, 0.0, false);
  for (int row = 0; row < camera.height_px; ++row) {
    for (int col = 0; col < camera.width_px; ++col) {
      const PlanePoint p = camera.pixel_center(col, row);
      const Vec3 dir = gnomonic_inverse_vector(camera, p.x, p.y);
      double* dst = &out.at(col, row);
      out.set_valid(col, row, sample_erp(erp, dir, filter, dst));
    }
  }
  return out;
}

ErpImage tangent_to_erp(const TangentImage& img, int erp_width, int erp_height, Filter filter) {
  ErpImage out(erp_width, erp_height, img.channels, 0.0, false);
  const std::vector<Vec3> dirs = erp_directions(erp_width, erp_height);
  for (int v = 0; v < erp_height; ++v) {
    for (int u = 0; u < erp_width; ++u) {
      const PlanePoint p = gnomonic_forward(img.camera, dirs[out.index(u, v)]);
      if (!p.valid) continue;
      out.set_valid(u, v, sample_tangent(img, p.x, p.y, filter, &out.at(u, v)));
    }
  }
  return out;
}

ErpImage mean_recombine(std::span<const TangentImage> tangents, int erp_width, int erp_height,
                        Filter filter) {
  const int channels = tangents.empty() ? 1 : tangents.front().channels;
  ErpImage out(erp_width, erp_height, channels, 0.0, false);
  std::vector<int> counts(out.pixel_count(), 0);
  const std::vector<Vec3> dirs = erp_directions(erp_width, erp_height);
  std::array<double, 3> sample{};
  for (const TangentImage& img : tangents) {
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      const PlanePoint p = gnomonic_forward(img.camera, dirs[i]);
      if (!p.valid || !sample_tangent(img, p.x, p.y, filter, sample.data())) continue;
      for (int c = 0; c < channels; ++c) out.values[i * channels + c] += sample[c];
      ++counts[i];
    }
  }
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    for (int c = 0; c < channels; ++c) out.values[i * channels + c] /= counts[i];
    out.mask[i] = 1;
  }
  return out;
}

}  // namespace tfuse
