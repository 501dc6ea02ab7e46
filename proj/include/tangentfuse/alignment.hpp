#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tangentfuse/disparity_model.hpp"
#include "tangentfuse/lbfgs.hpp"

namespace tfuse {

struct GridSize {
  int cols = 0;  // grid points across the tangent image
  int rows = 0;  // grid points down the tangent image

  friend bool operator==(const GridSize&, const GridSize&) = default;
};

/// Lattice of (scale, offset) pairs spanning the padded tangent image; corner
/// points sit on the image corners. Storage is row-major.
struct DeformationGrid {
  int face_index = 0;
  int cols = 0;
  int rows = 0;
  std::vector<double> scales;
  std::vector<double> offsets;

  static DeformationGrid identity(int face_index, GridSize size);
  static DeformationGrid uniform(int face_index, GridSize size, double scale, double offset);

  std::size_t point_count() const { return scales.size(); }
  std::size_t index(int col, int row) const { return static_cast<std::size_t>(row) * cols + col; }
};

/// Bilinear weights of the four grid points around a normalized image
/// position (u, v) in [0, 1]^2, u across and v down.
struct BilinearStencil {
  std::array<std::uint32_t, 4> index{};
  std::array<double, 4> weight{};
};

BilinearStencil grid_stencil(GridSize size, double u, double v);

/// One ERP pixel seen by both faces of a pair.
struct OverlapSample {
  SphericalCoord direction;
  double value_a = 0;
  double value_b = 0;
  PlanePoint tangent_a;  // plane coordinates in face a
  PlanePoint tangent_b;
  std::array<double, 2> unit_a{};  // normalized image coordinates in face a
  std::array<double, 2> unit_b{};
};

struct OverlapSet {
  int face_a = 0;  // face_a < face_b
  int face_b = 0;
  std::size_t overlap_pixels = 0;  // |Omega(a, b)| before sampling
  std::vector<OverlapSample> samples;
};

struct AlignmentConfig {
  double lambda_smoothness = 40.0;
  double lambda_scale = 0.007;
  double sample_fraction = 0.01;
  int iterations_per_scale = 50;
  std::vector<GridSize> grid_schedule{{4, 3}, {8, 7}, {16, 14}};
  double pole_exclusion_deg = 0.0;
  std::uint64_t rng_seed = 0;

  /// Throws ParameterError on an invalid configuration. An empty schedule is
  /// allowed and means "standardize only".
  void validate() const;
};

inline constexpr double kMinScale = 1e-6;

/// s(x) * D(x) + o(x) with (s, o) interpolated bilinearly from the grid.
DisparityMap apply_deformation(const DisparityMap& map, const DeformationGrid& grid);

/// Enumerates Omega(a, b) on an erp_width x erp_height grid for every pair
/// a < b, skipping pole caps, and keeps a seeded uniform sample of
/// ceil(sample_fraction * |Omega|) pixels per pair. Pairs with no overlap are
/// omitted. `maps` holds one spherical map per camera.
std::vector<OverlapSet> build_overlap_sets(std::span<const DisparityMap> maps,
                                           const AlignmentConfig& config, int erp_width,
                                           int erp_height, std::uint64_t seed);

struct EnergyTerms {
  double total = 0;
  double alignment = 0;
  double smoothness = 0;
  double scale = 0;
};

struct GridGradient {
  int face_index = 0;
  std::vector<double> d_scales;
  std::vector<double> d_offsets;
};

/// All grids must share one size; overlaps may only refer to faces present in
/// `grids`. Throws DomainError on a non-positive scale.
EnergyTerms energy(std::span<const DeformationGrid> grids, std::span<const OverlapSet> overlaps,
                   const AlignmentConfig& config);

std::vector<GridGradient> energy_gradient(std::span<const DeformationGrid> grids,
                                          std::span<const OverlapSet> overlaps,
                                          const AlignmentConfig& config);

struct ScaleOptimization {
  std::vector<DeformationGrid> grids;
  LbfgsResult solver;
};

/// Runs `config.iterations_per_scale` L-BFGS iterations (fewer when the
/// gradient vanishes). Never throws on line-search failure; inspect
/// `solver.status` instead.
ScaleOptimization optimize_scale(std::span<const DeformationGrid> grids,
                                 std::span<const OverlapSet> overlaps,
                                 const AlignmentConfig& config);

struct ScaleReport {
  GridSize size;
  std::size_t sample_count = 0;
  EnergyTerms initial;
  EnergyTerms final;
  LbfgsResult solver;
};

struct AlignmentResult {
  std::vector<DisparityMap> aligned;  // spherical, deformed by every stage
  std::vector<std::vector<DeformationGrid>> grids_per_scale;
  std::vector<ScaleReport> reports;
};

/// Standardizes every map once, then runs one deformation stage per schedule
/// entry on the output of the previous stage. Overlap samples are redrawn
/// per stage with seed rng_seed + stage index.
AlignmentResult align_multiscale(std::span<const DisparityMap> maps, const AlignmentConfig& config,
                                 int erp_width, int erp_height);

/// sqrt(mean (D_a - D_b)^2) over every sample of every pair.
double overlap_rms_disagreement(std::span<const OverlapSet> overlaps);

}  // namespace tfuse
