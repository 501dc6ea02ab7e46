#pragma once

#include <span>

#include "tangentfuse/image.hpp"

namespace tfuse {

enum class DisparitySemantics {
  perspective,  // inverse depth along the tangent camera's optical axis
  spherical,    // inverse radial distance from the shared center of projection
};

/// Single-channel disparity over one tangent image.
struct DisparityMap {
  TangentImage image;
  DisparitySemantics semantics = DisparitySemantics::perspective;
  bool standardized = false;

  int face() const { return image.camera.face_index; }
};

struct MedianMad {
  double median = 0;
  double mad = 0;  // mean absolute deviation about the median
};

/// Lower median for even counts. Throws ParameterError on empty input.
MedianMad median_and_mad(std::span<const double> values);

/// (D - median) / MAD over valid pixels. Throws DegenerateInputError when the
/// MAD is below 1e-12 or no pixel is valid.
DisparityMap standardize(const DisparityMap& map);

/// Multiplies each pixel by the cosine between its ray and the optical axis.
/// Throws MisuseError unless the map carries perspective semantics.
DisparityMap convert_to_spherical(const DisparityMap& map);

}  // namespace tfuse
