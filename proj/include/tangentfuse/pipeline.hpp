#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tangentfuse/alignment.hpp"
#include "tangentfuse/blending.hpp"
#include "tangentfuse/evaluation.hpp"
#include "tangentfuse/io.hpp"
#include "tangentfuse/synthetic.hpp"

namespace tfuse {

enum class ProviderKind { files, synthetic };

/// Final merge step: a weighting scheme, or gradient-domain blending on top of
/// frustum weights.
enum class BlendMode { nn, mean, radial, frustum, poisson };

std::string to_string(BlendMode mode);
BlendMode parse_blend_mode(const std::string& name);

inline constexpr double kMatterportPoleCapDeg = 25.0;

struct PipelineConfig {
  int erp_width = 2048;
  int erp_height = 1024;
  double padding = 0.3;
  int tangent_width = 400;
  int tangent_height = 346;
  AlignmentConfig alignment;
  BlendMode blend_mode = BlendMode::poisson;
  BlendConfig blend;
  ProviderKind provider = ProviderKind::synthetic;
  fs::path provider_dir;
  SceneConfig scene;
  /// Excludes 25 degree polar caps from alignment, Poisson solve and evaluation.
  bool matterport_mode = false;
  std::uint64_t rng_seed = 0;
  fs::path output_dir;
  bool dump_intermediates = false;
  /// Optional ground-truth depth for the files provider.
  fs::path gt_depth;

  /// Sub-configs with the pipeline-level seed and pole settings applied.
  AlignmentConfig effective_alignment() const;
  BlendConfig effective_blend() const;
  SceneConfig effective_scene() const;
  void validate() const;

  Json to_json() const;
  /// Keys absent from `j` keep their current values.
  void merge_json(const Json& j);
};

/// Perspective maps -> spherical maps, in place order.
std::vector<DisparityMap> convert_all_to_spherical(const std::vector<DisparityMap>& maps);

/// Aligned maps rounded to float32, which is what the PFM dumps hold. Blending
/// from these makes a re-blend of the dumped maps bit-identical.
std::vector<DisparityMap> quantize_to_float(const std::vector<DisparityMap>& maps);

struct BlendOutput {
  ErpImage disparity;
  ErpImage d_nn;
  std::optional<PoissonResult> poisson;
};

/// RMS disagreement over every overlapping ERP pixel after dividing all maps by
/// one pooled MAD (about the pooled median). A single global factor leaves the
/// relative alignment untouched but makes runs with different overall scale
/// drift comparable.
double normalized_overlap_rms(const std::vector<DisparityMap>& maps, const AlignmentConfig& config,
                              int erp_width, int erp_height);

BlendOutput blend_aligned_maps(const std::vector<DisparityMap>& aligned, BlendMode mode,
                               const BlendConfig& config, int erp_width, int erp_height);

struct PipelineResult {
  IcosahedronLayout layout;
  ErpImage disparity;
  ErpImage d_nn;
  AlignmentResult alignment;
  std::optional<PoissonResult> poisson;
  std::optional<ErpImage> gt_depth;
  std::optional<MetricReport> metrics;
  std::vector<FaceCorruption> corruption;  // synthetic provider only
  double align_seconds = 0;
  double blend_seconds = 0;
};

/// Loads or synthesizes the tangent disparities, converts, aligns, blends and
/// (when ground truth exists) evaluates. Writes outputs when output_dir is set.
PipelineResult run_pipeline(const PipelineConfig& config);

/// Writes disparity.pfm, disparity.png and, with dumps enabled, all
/// intermediate artifacts.
void write_pipeline_outputs(const PipelineConfig& config, const PipelineResult& result);

struct AblationRow {
  std::string alignment;  // "no-align", "4x3", ..., "multi-scale"
  BlendMode blend = BlendMode::poisson;
  MetricReport metrics;
  double overlap_rms = 0;  // normalized_overlap_rms of the aligned maps
};

struct AblationSpec {
  std::string label;
  std::vector<GridSize> schedule;
};

/// Reads aligned/layout.json and aligned/aligned_XX.pfm as written with
/// dump_intermediates; the maps come back spherical and standardized.
std::vector<DisparityMap> load_aligned_maps(const fs::path& dir);

/// Modes of the alignment ablation: no alignment, each single grid, multi-scale.
std::vector<AblationSpec> default_ablation_schedules();

/// Runs every alignment mode x blend mode on one provider input.
std::vector<AblationRow> run_ablation(const PipelineConfig& config,
                                      const std::vector<AblationSpec>& schedules,
                                      const std::vector<BlendMode>& blends);

}  // namespace tfuse
