#include "tangentfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "tangentfuse/errors.hpp"

namespace tfuse {

namespace {

void check_same_shape(const Image& a, const Image& b, std::span<const std::uint8_t> mask) {
  if (a.width != b.width || a.height != b.height || a.channels != 1 || b.channels != 1)
    throw ParameterError("prediction and ground truth must be single-channel with equal size");
  if (!mask.empty() && mask.size() != a.pixel_count())
    throw ParameterError("evaluation mask size mismatch");
}

bool usable(const Image& pred, const Image& gt, std::span<const std::uint8_t> mask,
            std::size_t i) {
  return pred.mask[i] && gt.mask[i] && gt.values[i] > 0 && (mask.empty() || mask[i]) &&
         std::isfinite(pred.values[i]) && std::isfinite(gt.values[i]);
}

}  // namespace

AffineFit fit_affine_disparity(const Image& pred, const Image& gt_depth,
                               std::span<const std::uint8_t> mask) {
  check_same_shape(pred, gt_depth, mask);
  // Normal equations of min sum (s * p + o - t)^2, accumulated about the means.
  std::size_t n = 0;
  double mean_p = 0, mean_t = 0;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    if (!usable(pred, gt_depth, mask, i)) continue;
    ++n;
    mean_p += pred.values[i];
    mean_t += 1.0 / gt_depth.values[i];
  }
  if (n < 2) throw DegenerateInputError("affine fit needs at least two valid pixels");
  mean_p /= static_cast<double>(n);
  mean_t /= static_cast<double>(n);

  double spp = 0, spt = 0;
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    if (!usable(pred, gt_depth, mask, i)) continue;
    const double dp = pred.values[i] - mean_p;
    spp += dp * dp;
    spt += dp * (1.0 / gt_depth.values[i] - mean_t);
  }
  if (!(spp > 1e-24 * static_cast<double>(n) * (mean_p * mean_p + 1)))
    throw DegenerateInputError("affine fit: prediction is constant");
  const double scale = spt / spp;
  return {scale, mean_t - scale * mean_p};
}

MetricReport compute_metrics(const Image& pred_depth, const Image& gt_depth,
                             std::span<const std::uint8_t> mask) {
  check_same_shape(pred_depth, gt_depth, mask);
  MetricReport r;
  double abs_rel = 0, abs_err = 0, sq_err = 0, sq_log = 0;
  std::size_t positive = 0, d1 = 0, d2 = 0, d3 = 0;
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;

  for (std::size_t i = 0; i < pred_depth.pixel_count(); ++i) {
    if (!usable(pred_depth, gt_depth, mask, i)) continue;
    const double z = pred_depth.values[i];
    const double gt = gt_depth.values[i];
    ++r.n_pixels;
    const double err = z - gt;
    abs_rel += std::abs(err) / gt;
    abs_err += std::abs(err);
    sq_err += err * err;
    if (z <= 0) {
      ++r.n_negative_depth;
      continue;
    }
    ++positive;
    const double dl = std::log10(z) - std::log10(gt);
    sq_log += dl * dl;
    const double ratio = std::max(z / gt, gt / z);
    d1 += ratio < t1;
    d2 += ratio < t2;
    d3 += ratio < t3;
  }
  if (r.n_pixels == 0) throw DegenerateInputError("no pixels to evaluate");

  const auto n = static_cast<double>(r.n_pixels);
  r.abs_rel = abs_rel / n;
  r.mae = abs_err / n;
  r.rmse = std::sqrt(sq_err / n);
  if (positive > 0) {
    const auto np = static_cast<double>(positive);
    r.rmse_log = std::sqrt(sq_log / np);
    r.delta1 = static_cast<double>(d1) / np;
    r.delta2 = static_cast<double>(d2) / np;
    r.delta3 = static_cast<double>(d3) / np;
  } else {
    r.rmse_log = std::numeric_limits<double>::infinity();
  }
  return r;
}

MetricReport evaluate_pipeline(const Image& pred_disparity, const Image& gt_depth,
                               std::span<const std::uint8_t> mask) {
  const AffineFit fit = fit_affine_disparity(pred_disparity, gt_depth, mask);
  Image depth = pred_disparity;
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    if (!depth.mask[i]) continue;
    const double d = fit.scale * pred_disparity.values[i] + fit.offset;
    // Zero disparity has no finite depth; it is scored as a non-positive depth.
    depth.values[i] = d != 0 ? 1.0 / d : 0.0;
  }
  return compute_metrics(depth, gt_depth, mask);
}

std::vector<std::uint8_t> pole_cap_mask(int erp_width, int erp_height, double cap_deg) {
  check_erp_dimensions(erp_width, erp_height);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(erp_width) * erp_height, 1);
  for (int v = 0; v < erp_height; ++v) {
    const double lat = rad_to_deg(kPi / 2 - (v + 0.5) / erp_height * kPi);
    if (std::abs(lat) <= 90.0 - cap_deg) continue;
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(v) * erp_width, erp_width, 0);
  }
  return mask;
}

std::string format_metric_table(std::span<const std::pair<std::string, MetricReport>> rows) {
  std::size_t label_width = 6;
  for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());

  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s %8s %8s %8s %8s\n",
                static_cast<int>(label_width), "Method", "AbsRel", "MAE", "RMSE", "RMSElog",
                "d<1.25", "d<1.25^2", "d<1.25^3");
  out << buf;
  for (const auto& [label, m] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                  static_cast<int>(label_width), label.c_str(), m.abs_rel, m.mae, m.rmse,
                  m.rmse_log, m.delta1, m.delta2, m.delta3);
    out << buf;
  }
  return out.str();
}

}  // namespace tfuse
