#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tangentfuse/image.hpp"

namespace tfuse {

struct MetricReport {
  double abs_rel = 0;
  double mae = 0;
  double rmse = 0;
  double rmse_log = 0;
  double delta1 = 0;  // fraction with max(z / z*, z* / z) < 1.25
  double delta2 = 0;  // < 1.25^2
  double delta3 = 0;  // < 1.25^3
  std::size_t n_pixels = 0;
  std::size_t n_negative_depth = 0;
};

struct AffineFit {
  double scale = 1;
  double offset = 0;
};

/// Least-squares (scale, offset) mapping `pred` disparity onto 1 / gt_depth
/// over pixels valid in both images, with gt > 0 and inside `mask` (when
/// non-empty). Throws DegenerateInputError with fewer than two pixels or a
/// constant prediction.
AffineFit fit_affine_disparity(const Image& pred, const Image& gt_depth,
                               std::span<const std::uint8_t> mask = {});

/// Depth metrics over pixels valid in both images, with gt > 0 and inside
/// `mask` (when non-empty). Predictions z <= 0 count in n_negative_depth and
/// are excluded from RMSE-log and the delta ratios. Throws
/// DegenerateInputError when no pixel qualifies.
MetricReport compute_metrics(const Image& pred_depth, const Image& gt_depth,
                             std::span<const std::uint8_t> mask = {});

/// Fits the prediction in disparity space, inverts it to depth and scores it.
MetricReport evaluate_pipeline(const Image& pred_disparity, const Image& gt_depth,
                               std::span<const std::uint8_t> mask = {});

/// 1 outside circular caps of `cap_deg` around both poles.
std::vector<std::uint8_t> pole_cap_mask(int erp_width, int erp_height, double cap_deg);

/// Aligned plain-text table, one row per (label, report).
std::string format_metric_table(std::span<const std::pair<std::string, MetricReport>> rows);

}  // namespace tfuse
