#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tangentfuse/image.hpp"
#include "tangentfuse/resampling.hpp"

namespace tfuse {

enum class BlendScheme { nn, mean, radial, frustum };

std::string to_string(BlendScheme scheme);
/// Throws ParameterError for unknown names.
BlendScheme parse_blend_scheme(const std::string& name);

struct BlendConfig {
  double lambda_fidelity = 0.1;
  double radial_decay_start_deg = 15.0;
  double frustum_decay_start = 0.3;  // fraction of each corner-to-center diagonal
  double solver_tolerance = 1e-8;    // relative residual ||r|| / ||b||
  int solver_max_iterations = 20000;
  /// Pixels inside these polar caps are copied from D_NN instead of solved.
  double pole_exclusion_deg = 0.0;

  void validate() const;
};

/// Sparse per-pixel (face, value) lists over an ERP grid, faces ascending.
/// Holds all aligned tangent maps in ERP space without 20 dense layers.
struct ErpStack {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> offsets;  // pixel_count + 1 entries
  std::vector<std::uint8_t> faces;
  std::vector<double> values;

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t begin(std::size_t pixel) const { return offsets[pixel]; }
  std::size_t end(std::size_t pixel) const { return offsets[pixel + 1]; }
  /// Dense single-face layer; pixels without an entry are masked.
  ErpImage layer(int face) const;
};

/// Resamples every tangent map onto the ERP grid. Entries exist where the
/// footprint covers the pixel and the resampled value is valid.
ErpStack stack_from_tangents(std::span<const TangentImage> maps, int erp_width, int erp_height,
                             Filter filter = Filter::bilinear);

/// Layer i carries face id i.
ErpStack stack_from_layers(std::span<const ErpImage> layers);

/// Per-face weights in the same sparse layout as ErpStack. For mean, radial
/// and frustum the weights of each covered pixel sum to 1; for nn exactly one
/// face has weight 1.
struct BlendWeights {
  BlendScheme scheme = BlendScheme::frustum;
  ErpStack field;

  ErpImage layer(int face) const { return field.layer(face); }
};

/// Unnormalized weight of `camera` for a direction; 0 outside the footprint.
/// For nn this is the cosine of the angle to the tangent point.
double raw_weight(const TangentCamera& camera, BlendScheme scheme, Vec3 direction,
                  const BlendConfig& config);

BlendWeights compute_weights(std::span<const TangentCamera> cameras, BlendScheme scheme,
                             int erp_width, int erp_height, const BlendConfig& config);

/// Copies the value of the nn-winning face; falls back to the highest-weight
/// face that has a value. Pixels without entries are masked.
ErpImage stitch_nn(const ErpStack& aligned, const BlendWeights& nn_weights);

/// Sum of w_a * D_a, renormalized over faces that carry a value.
ErpImage blend_weighted(const ErpStack& aligned, const BlendWeights& weights);

struct PoissonResult {
  ErpImage image;
  bool converged = false;
  int iterations = 0;
  double relative_residual = 0;
  std::size_t unknowns = 0;
};

/// Gradient-domain blend: minimizes
///   sum_a sum_x w_a(x) |grad B(x) - grad D_a(x)|^2 + lambda * sum_x (B(x) - D_NN(x))^2
/// with forward differences (wrapping in longitude, none across the poles).
/// Solved with preconditioned conjugate gradients from the D_NN start.
PoissonResult blend_poisson(const ErpStack& aligned, const BlendWeights& weights,
                            const ErpImage& d_nn, const BlendConfig& config);

}  // namespace tfuse
