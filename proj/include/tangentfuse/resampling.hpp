#pragma once

#include <span>

#include "tangentfuse/image.hpp"

namespace tfuse {

enum class Filter { nearest, bilinear };

/// Samples `img` at continuous pixel index coordinates (integers are pixel
/// centers) and writes `img.channels` values to `out`. Bilinear samples
/// renormalize over valid corners; returns false when no valid corner carries
/// weight. With `wrap_x`, columns wrap around; rows are clamped to the image.
/// Without it, corners outside the image count as masked.
bool sample_image(const Image& img, double col, double row, bool wrap_x, Filter filter,
                  double* out);

/// Samples an ERP image along a direction (longitude seam wraps).
bool sample_erp(const ErpImage& erp, Vec3 direction, Filter filter, double* out);

/// Samples a tangent image at plane coordinates; false outside the rectangle.
bool sample_tangent(const TangentImage& img, double x, double y, Filter filter, double* out);

TangentImage erp_to_tangent(const ErpImage& erp, const TangentCamera& camera,
                            Filter filter = Filter::bilinear);

/// Pixels outside the camera footprint come back masked.
ErpImage tangent_to_erp(const TangentImage& img, int erp_width, int erp_height,
                        Filter filter = Filter::bilinear);

/// Projects to every camera and averages valid samples per ERP pixel.
ErpImage mean_recombine(std::span<const TangentImage> tangents, int erp_width, int erp_height,
                        Filter filter = Filter::bilinear);

}  // namespace tfuse
