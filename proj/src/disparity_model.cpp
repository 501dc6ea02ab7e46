#include "tangentfuse/disparity_model.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tangentfuse/errors.hpp"

namespace tfuse {

MedianMad median_and_mad(std::span<const double> values) {
  if (values.empty()) throw ParameterError("median_and_mad: empty input");

  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t mid = (sorted.size() - 1) / 2;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid),
                   sorted.end());
  const double median = sorted[mid];

  double sum = 0;
  for (double v : values) sum += std::abs(v - median);
  return {median, sum / static_cast<double>(values.size())};
}

DisparityMap standardize(const DisparityMap& map) {
  const Image& img = map.image;
  std::vector<double> valid;
  valid.reserve(img.pixel_count());
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    if (img.mask[i]) valid.push_back(img.values[i]);
  if (valid.empty())
    throw DegenerateInputError("face " + std::to_string(map.face()) +
                               ": no valid pixels to standardize");

  const MedianMad stats = median_and_mad(valid);
  if (stats.mad < 1e-12)
    throw DegenerateInputError("face " + std::to_string(map.face()) +
                               ": disparity map is constant, cannot standardize");

  DisparityMap out = map;
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    if (img.mask[i]) out.image.values[i] = (img.values[i] - stats.median) / stats.mad;
  out.standardized = true;
  return out;
}

DisparityMap convert_to_spherical(const DisparityMap& map) {
  if (map.semantics != DisparitySemantics::perspective)
    throw MisuseError("convert_to_spherical expects a perspective disparity map");

  DisparityMap out = map;
  const TangentCamera& cam = map.image.camera;
  for (int row = 0; row < cam.height_px; ++row) {
    for (int col = 0; col < cam.width_px; ++col) {
      if (!map.image.valid(col, row)) continue;
      const PlanePoint p = cam.pixel_center(col, row);
      out.image.at(col, row) *= 1.0 / std::sqrt(1.0 + p.x * p.x + p.y * p.y);
    }
  }
  out.semantics = DisparitySemantics::spherical;
  return out;
}

}  // namespace tfuse
