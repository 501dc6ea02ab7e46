#include "tangentfuse/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "tangentfuse/errors.hpp"
#include "tangentfuse/resampling.hpp"

namespace tfuse {

DeformationGrid DeformationGrid::identity(int face_index, GridSize size) {
  return uniform(face_index, size, 1.0, 0.0);
}

DeformationGrid DeformationGrid::uniform(int face_index, GridSize size, double scale,
                                         double offset) {
  if (size.cols < 2 || size.rows < 2)
    throw ParameterError("deformation grids need at least 2x2 points");
  DeformationGrid g;
  g.face_index = face_index;
  g.cols = size.cols;
  g.rows = size.rows;
  const auto n = static_cast<std::size_t>(size.cols) * size.rows;
  g.scales.assign(n, scale);
  g.offsets.assign(n, offset);
  return g;
}

BilinearStencil grid_stencil(GridSize size, double u, double v) {
  const double gx = std::clamp(u, 0.0, 1.0) * (size.cols - 1);
  const double gy = std::clamp(v, 0.0, 1.0) * (size.rows - 1);
  const int c0 = std::min(static_cast<int>(gx), size.cols - 2);
  const int r0 = std::min(static_cast<int>(gy), size.rows - 2);
  const double tx = gx - c0;
  const double ty = gy - r0;
  const auto at = [&](int c, int r) { return static_cast<std::uint32_t>(r * size.cols + c); };
  BilinearStencil s;
  s.index = {at(c0, r0), at(c0 + 1, r0), at(c0, r0 + 1), at(c0 + 1, r0 + 1)};
  s.weight = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  return s;
}

void AlignmentConfig::validate() const {
  if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
    throw ParameterError("sample_fraction must lie in (0, 1]");
  if (iterations_per_scale < 0) throw ParameterError("iterations_per_scale must be >= 0");
  if (!(lambda_smoothness >= 0) || !(lambda_scale >= 0))
    throw ParameterError("alignment weights must be non-negative");
  if (!(pole_exclusion_deg >= 0 && pole_exclusion_deg < 90))
    throw ParameterError("pole_exclusion_deg must lie in [0, 90)");
  for (std::size_t i = 0; i < grid_schedule.size(); ++i) {
    const GridSize& g = grid_schedule[i];
    if (g.cols < 2 || g.rows < 2) throw ParameterError("grid schedule entries need >= 2x2 points");
    if (i > 0 && (g.cols < grid_schedule[i - 1].cols || g.rows < grid_schedule[i - 1].rows))
      throw ParameterError("grid schedule must be non-decreasing");
  }
}

DisparityMap apply_deformation(const DisparityMap& map, const DeformationGrid& grid) {
  if (map.face() != grid.face_index)
    throw MisuseError("deformation grid for face " + std::to_string(grid.face_index) +
                      " applied to face " + std::to_string(map.face()));
  if (map.semantics != DisparitySemantics::spherical)
    throw MisuseError("deformation grids apply to spherical disparity maps");

  DisparityMap out = map;
  const TangentImage& img = map.image;
  const GridSize size{grid.cols, grid.rows};
  for (int row = 0; row < img.height; ++row) {
    const double v = (row + 0.5) / img.height;
    for (int col = 0; col < img.width; ++col) {
      if (!img.valid(col, row)) continue;
      const BilinearStencil st = grid_stencil(size, (col + 0.5) / img.width, v);
      double s = 0, o = 0;
      for (int k = 0; k < 4; ++k) {
        s += st.weight[k] * grid.scales[st.index[k]];
        o += st.weight[k] * grid.offsets[st.index[k]];
      }
      out.image.at(col, row) = s * img.at(col, row) + o;
    }
  }
  return out;
}

std::vector<OverlapSet> build_overlap_sets(std::span<const DisparityMap> maps,
                                           const AlignmentConfig& config, int erp_width,
                                           int erp_height, std::uint64_t seed) {
  config.validate();
  const int n = static_cast<int>(maps.size());
  for (int i = 0; i < n; ++i) {
    if (maps[i].semantics != DisparitySemantics::spherical)
      throw MisuseError("overlap sets are built from spherical disparity maps");
    if (i > 0 && maps[i].face() <= maps[i - 1].face())
      throw ParameterError("disparity maps must be ordered by increasing face index");
  }

  const std::vector<Vec3> dirs = erp_directions(erp_width, erp_height);
  const double cap_z = std::cos(deg_to_rad(config.pole_exclusion_deg));
  const bool exclude_poles = config.pole_exclusion_deg > 0;

  // Omega(a, b) as ERP pixel indices, bucketed by slot pair.
  std::vector<std::vector<std::uint32_t>> buckets(static_cast<std::size_t>(n) * n);
  std::vector<int> seen;
  double value = 0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (exclude_poles && std::abs(dirs[i].z) > cap_z) continue;
    seen.clear();
    for (int k = 0; k < n; ++k) {
      const PlanePoint p = gnomonic_forward(maps[k].image.camera, dirs[i]);
      if (p.valid && sample_tangent(maps[k].image, p.x, p.y, Filter::bilinear, &value))
        seen.push_back(k);
    }
    for (std::size_t a = 0; a < seen.size(); ++a)
      for (std::size_t b = a + 1; b < seen.size(); ++b)
        buckets[static_cast<std::size_t>(seen[a]) * n + seen[b]].push_back(
            static_cast<std::uint32_t>(i));
  }

  std::mt19937_64 rng(seed);
  std::vector<OverlapSet> sets;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      std::vector<std::uint32_t>& omega = buckets[static_cast<std::size_t>(a) * n + b];
      if (omega.empty()) continue;

      const std::size_t total = omega.size();
      auto keep = static_cast<std::size_t>(
          std::ceil(config.sample_fraction * static_cast<double>(total) * (1 - 1e-12)));
      keep = std::clamp<std::size_t>(keep, 1, total);
      if (keep < total) {
        for (std::size_t i = 0; i < keep; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, total - 1);
          std::swap(omega[i], omega[pick(rng)]);
        }
        omega.resize(keep);
        std::sort(omega.begin(), omega.end());
      }

      OverlapSet set;
      set.face_a = maps[a].face();
      set.face_b = maps[b].face();
      set.overlap_pixels = total;
      set.samples.reserve(omega.size());
      const TangentImage& ia = maps[a].image;
      const TangentImage& ib = maps[b].image;
      for (std::uint32_t pix : omega) {
        OverlapSample s;
        s.direction = SphericalCoord::from_unit_vector(dirs[pix]);
        s.tangent_a = gnomonic_forward(ia.camera, dirs[pix]);
        s.tangent_b = gnomonic_forward(ib.camera, dirs[pix]);
        sample_tangent(ia, s.tangent_a.x, s.tangent_a.y, Filter::bilinear, &s.value_a);
        sample_tangent(ib, s.tangent_b.x, s.tangent_b.y, Filter::bilinear, &s.value_b);
        s.unit_a = ia.camera.plane_to_unit(s.tangent_a.x, s.tangent_a.y);
        s.unit_b = ib.camera.plane_to_unit(s.tangent_b.x, s.tangent_b.y);
        set.samples.push_back(s);
      }
      sets.push_back(std::move(set));
    }
  }
  return sets;
}

namespace {

// The full alignment energy over a flat parameter vector laid out per grid slot as
// [scales..., offsets...].
class AlignmentProblem {
public:
  AlignmentProblem(std::span<const DeformationGrid> grids, std::span<const OverlapSet> overlaps,
                   const AlignmentConfig& config)
      : config_(config) {
    if (grids.empty()) throw ParameterError("no deformation grids");
    size_ = {grids.front().cols, grids.front().rows};
    points_ = grids.front().point_count();
    for (std::size_t k = 0; k < grids.size(); ++k) {
      const DeformationGrid& g = grids[k];
      if (g.cols != size_.cols || g.rows != size_.rows || g.scales.size() != points_ ||
          g.offsets.size() != points_)
        throw ParameterError("all deformation grids must share one size");
      if (g.face_index < 0) throw ParameterError("negative face index");
      if (static_cast<std::size_t>(g.face_index) >= slot_of_face_.size())
        slot_of_face_.resize(static_cast<std::size_t>(g.face_index) + 1, -1);
      slot_of_face_[static_cast<std::size_t>(g.face_index)] = static_cast<int>(k);
      faces_.push_back(g.face_index);
    }

    for (const OverlapSet& set : overlaps) {
      const int sa = slot(set.face_a);
      const int sb = slot(set.face_b);
      for (const OverlapSample& s : set.samples) {
        terms_.push_back({static_cast<std::uint32_t>(sa), static_cast<std::uint32_t>(sb),
                          grid_stencil(size_, s.unit_a[0], s.unit_a[1]),
                          grid_stencil(size_, s.unit_b[0], s.unit_b[1]), s.value_a, s.value_b});
      }
    }
  }

  std::size_t parameter_count() const { return faces_.size() * 2 * points_; }

  std::vector<double> pack(std::span<const DeformationGrid> grids) const {
    std::vector<double> x(parameter_count());
    for (std::size_t k = 0; k < grids.size(); ++k) {
      std::copy(grids[k].scales.begin(), grids[k].scales.end(), x.begin() + scale_base(k));
      std::copy(grids[k].offsets.begin(), grids[k].offsets.end(), x.begin() + offset_base(k));
    }
    return x;
  }

  std::vector<DeformationGrid> unpack(std::span<const double> x) const {
    std::vector<DeformationGrid> grids;
    for (std::size_t k = 0; k < faces_.size(); ++k) {
      DeformationGrid g = DeformationGrid::identity(faces_[k], size_);
      std::copy_n(x.begin() + scale_base(k), points_, g.scales.begin());
      std::copy_n(x.begin() + offset_base(k), points_, g.offsets.begin());
      grids.push_back(std::move(g));
    }
    return grids;
  }

  bool feasible(std::span<const double> x) const {
    for (std::size_t k = 0; k < faces_.size(); ++k)
      for (std::size_t i = 0; i < points_; ++i)
        if (!(x[scale_base(k) + i] > kMinScale)) return false;
    return true;
  }

  // Writes the gradient when `grad` is non-empty.
  EnergyTerms evaluate(std::span<const double> x, std::span<double> grad) const {
    const bool want_grad = !grad.empty();
    if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
    EnergyTerms e;

    if (!terms_.empty()) {
      const double inv_z = 1.0 / static_cast<double>(terms_.size());
      double sum = 0;
      for (const Term& t : terms_) {
        const std::size_t sa = scale_base(t.slot_a), oa = offset_base(t.slot_a);
        const std::size_t sb = scale_base(t.slot_b), ob = offset_base(t.slot_b);
        double scale_a = 0, offset_a = 0, scale_b = 0, offset_b = 0;
        for (int k = 0; k < 4; ++k) {
          scale_a += t.stencil_a.weight[k] * x[sa + t.stencil_a.index[k]];
          offset_a += t.stencil_a.weight[k] * x[oa + t.stencil_a.index[k]];
          scale_b += t.stencil_b.weight[k] * x[sb + t.stencil_b.index[k]];
          offset_b += t.stencil_b.weight[k] * x[ob + t.stencil_b.index[k]];
        }
        const double r = (scale_a * t.value_a + offset_a) - (scale_b * t.value_b + offset_b);
        sum += r * r;
        if (want_grad) {
          const double c = 2 * r * inv_z;
          for (int k = 0; k < 4; ++k) {
            const double wa = c * t.stencil_a.weight[k];
            const double wb = c * t.stencil_b.weight[k];
            grad[sa + t.stencil_a.index[k]] += wa * t.value_a;
            grad[oa + t.stencil_a.index[k]] += wa;
            grad[sb + t.stencil_b.index[k]] -= wb * t.value_b;
            grad[ob + t.stencil_b.index[k]] -= wb;
          }
        }
      }
      e.alignment = sum * inv_z;
    }

    const double inv_zs = 1.0 / static_cast<double>(faces_.size() * points_);
    const double smooth_grad = 2 * config_.lambda_smoothness * inv_zs;
    double smooth = 0;
    for (std::size_t k = 0; k < faces_.size(); ++k) {
      for (std::size_t base : {scale_base(k), offset_base(k)}) {
        const auto pair = [&](std::size_t i, std::size_t j) {
          const double d = x[base + i] - x[base + j];
          smooth += d * d;
          if (want_grad) {
            grad[base + i] += smooth_grad * d;
            grad[base + j] -= smooth_grad * d;
          }
        };
        for (int r = 0; r < size_.rows; ++r)
          for (int c = 0; c < size_.cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * size_.cols + c;
            if (c + 1 < size_.cols) pair(i, i + 1);
            if (r + 1 < size_.rows) pair(i, i + static_cast<std::size_t>(size_.cols));
          }
      }
    }
    e.smoothness = smooth * inv_zs;

    double inv_sum = 0;
    for (std::size_t k = 0; k < faces_.size(); ++k) {
      for (std::size_t i = 0; i < points_; ++i) {
        const double s = x[scale_base(k) + i];
        if (!(s > 0)) throw DomainError("deformation scale must be positive");
        inv_sum += 1.0 / s;
        if (want_grad) grad[scale_base(k) + i] -= config_.lambda_scale / (s * s);
      }
    }
    e.scale = inv_sum;

    e.total = e.alignment + config_.lambda_smoothness * e.smoothness + config_.lambda_scale * e.scale;
    return e;
  }

private:
  struct Term {
    std::uint32_t slot_a;
    std::uint32_t slot_b;
    BilinearStencil stencil_a;
    BilinearStencil stencil_b;
    double value_a;
    double value_b;
  };

  int slot(int face) const {
    if (face < 0 || static_cast<std::size_t>(face) >= slot_of_face_.size() ||
        slot_of_face_[static_cast<std::size_t>(face)] < 0)
      throw ParameterError("overlap refers to face " + std::to_string(face) +
                           " without a deformation grid");
    return slot_of_face_[static_cast<std::size_t>(face)];
  }
  std::size_t scale_base(std::size_t slot) const { return slot * 2 * points_; }
  std::size_t offset_base(std::size_t slot) const { return slot * 2 * points_ + points_; }

  AlignmentConfig config_;
  GridSize size_;
  std::size_t points_ = 0;
  std::vector<int> slot_of_face_;
  std::vector<int> faces_;
  std::vector<Term> terms_;
};

}  // namespace

EnergyTerms energy(std::span<const DeformationGrid> grids, std::span<const OverlapSet> overlaps,
                   const AlignmentConfig& config) {
  const AlignmentProblem problem(grids, overlaps, config);
  return problem.evaluate(problem.pack(grids), {});
}

std::vector<GridGradient> energy_gradient(std::span<const DeformationGrid> grids,
                                          std::span<const OverlapSet> overlaps,
                                          const AlignmentConfig& config) {
  const AlignmentProblem problem(grids, overlaps, config);
  std::vector<double> grad(problem.parameter_count());
  problem.evaluate(problem.pack(grids), grad);

  std::vector<GridGradient> out;
  const std::size_t points = grids.front().point_count();
  for (std::size_t k = 0; k < grids.size(); ++k) {
    GridGradient g;
    g.face_index = grids[k].face_index;
    const auto base = grad.begin() + static_cast<std::ptrdiff_t>(k * 2 * points);
    g.d_scales.assign(base, base + static_cast<std::ptrdiff_t>(points));
    g.d_offsets.assign(base + static_cast<std::ptrdiff_t>(points),
                       base + static_cast<std::ptrdiff_t>(2 * points));
    out.push_back(std::move(g));
  }
  return out;
}

ScaleOptimization optimize_scale(std::span<const DeformationGrid> grids,
                                 std::span<const OverlapSet> overlaps,
                                 const AlignmentConfig& config) {
  const AlignmentProblem problem(grids, overlaps, config);
  std::vector<double> x = problem.pack(grids);
  if (!problem.feasible(x)) throw DomainError("initial deformation scales must exceed 1e-6");

  LbfgsOptions options;
  options.max_iterations = config.iterations_per_scale;
  ScaleOptimization out;
  out.solver = minimize_lbfgs(
      [&](std::span<const double> p, std::span<double> g) { return problem.evaluate(p, g).total; },
      [&](std::span<const double> p) { return problem.feasible(p); }, x, options);
  out.grids = problem.unpack(x);
  return out;
}

AlignmentResult align_multiscale(std::span<const DisparityMap> maps, const AlignmentConfig& config,
                                 int erp_width, int erp_height) {
  config.validate();
  AlignmentResult result;
  result.aligned.reserve(maps.size());
  for (const DisparityMap& m : maps) {
    if (m.semantics != DisparitySemantics::spherical)
      throw MisuseError("face " + std::to_string(m.face()) +
                        ": alignment expects spherical disparity maps");
    result.aligned.push_back(standardize(m));
  }

  for (std::size_t stage = 0; stage < config.grid_schedule.size(); ++stage) {
    const GridSize size = config.grid_schedule[stage];
    const std::vector<OverlapSet> overlaps =
        build_overlap_sets(result.aligned, config, erp_width, erp_height, config.rng_seed + stage);

    std::vector<DeformationGrid> initial;
    for (const DisparityMap& m : result.aligned)
      initial.push_back(DeformationGrid::identity(m.face(), size));

    ScaleReport report;
    report.size = size;
    for (const OverlapSet& s : overlaps) report.sample_count += s.samples.size();
    report.initial = energy(initial, overlaps, config);
    ScaleOptimization opt = optimize_scale(initial, overlaps, config);
    report.final = energy(opt.grids, overlaps, config);
    report.solver = opt.solver;

    for (std::size_t k = 0; k < result.aligned.size(); ++k)
      result.aligned[k] = apply_deformation(result.aligned[k], opt.grids[k]);
    result.grids_per_scale.push_back(std::move(opt.grids));
    result.reports.push_back(std::move(report));
  }
  return result;
}

double overlap_rms_disagreement(std::span<const OverlapSet> overlaps) {
  double sum = 0;
  std::size_t count = 0;
  for (const OverlapSet& set : overlaps) {
    for (const OverlapSample& s : set.samples) {
      const double d = s.value_a - s.value_b;
      sum += d * d;
    }
    count += set.samples.size();
  }
  return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0;
}

}  // namespace tfuse
