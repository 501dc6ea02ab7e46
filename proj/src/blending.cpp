#include "tangentfuse/blending.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>

#include "tangentfuse/errors.hpp"

namespace tfuse {

std::string to_string(BlendScheme scheme) {
  switch (scheme) {
    case BlendScheme::nn: return "nn";
    case BlendScheme::mean: return "mean";
    case BlendScheme::radial: return "radial";
    case BlendScheme::frustum: return "frustum";
  }
  return "unknown";
}

BlendScheme parse_blend_scheme(const std::string& name) {
  if (name == "nn") return BlendScheme::nn;
  if (name == "mean") return BlendScheme::mean;
  if (name == "radial") return BlendScheme::radial;
  if (name == "frustum") return BlendScheme::frustum;
  throw ParameterError("unknown blend scheme '" + name + "'");
}

void BlendConfig::validate() const {
  if (!(lambda_fidelity > 0)) throw ParameterError("lambda_fidelity must be positive");
  if (!(radial_decay_start_deg > 0)) throw ParameterError("radial_decay_start_deg must be positive");
  if (!(frustum_decay_start > 0 && frustum_decay_start < 1))
    throw ParameterError("frustum_decay_start must lie in (0, 1)");
  if (!(solver_tolerance > 0)) throw ParameterError("solver_tolerance must be positive");
  if (solver_max_iterations < 1) throw ParameterError("solver_max_iterations must be positive");
  if (!(pole_exclusion_deg >= 0 && pole_exclusion_deg < 90))
    throw ParameterError("pole_exclusion_deg must lie in [0, 90)");
}

ErpImage ErpStack::layer(int face) const {
  ErpImage out(width, height, 1, 0.0, false);
  for (std::size_t p = 0; p < pixel_count(); ++p) {
    for (std::size_t e = begin(p); e < end(p); ++e) {
      if (faces[e] != face) continue;
      out.values[p] = values[e];
      out.mask[p] = 1;
    }
  }
  return out;
}

namespace {

ErpStack empty_stack(int width, int height) {
  check_erp_dimensions(width, height);
  ErpStack s;
  s.width = width;
  s.height = height;
  s.offsets.reserve(s.pixel_count() + 1);
  s.offsets.push_back(0);
  return s;
}

void close_pixel(ErpStack& s) { s.offsets.push_back(static_cast<std::uint32_t>(s.faces.size())); }

// Weight of `face` at `pixel`, 0 when absent.
double weight_at(const ErpStack& w, std::size_t pixel, int face) {
  for (std::size_t e = w.begin(pixel); e < w.end(pixel); ++e)
    if (w.faces[e] == face) return w.values[e];
  return 0.0;
}

// Value of `face` at `pixel`, or nullptr.
const double* value_at(const ErpStack& s, std::size_t pixel, int face) {
  for (std::size_t e = s.begin(pixel); e < s.end(pixel); ++e)
    if (s.faces[e] == face) return &s.values[e];
  return nullptr;
}

void check_same_grid(const ErpStack& a, const ErpStack& b) {
  if (a.width != b.width || a.height != b.height)
    throw ParameterError("blend inputs must share one ERP grid");
}

}  // namespace

ErpStack stack_from_tangents(std::span<const TangentImage> maps, int erp_width, int erp_height,
                             Filter filter) {
  ErpStack s = empty_stack(erp_width, erp_height);
  const std::vector<Vec3> dirs = erp_directions(erp_width, erp_height);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    for (const TangentImage& img : maps) {
      if (img.channels != 1) throw ParameterError("stacked maps must be single-channel");
      const PlanePoint p = gnomonic_forward(img.camera, dirs[i]);
      double v = 0;
      if (p.valid && sample_tangent(img, p.x, p.y, filter, &v)) {
        s.faces.push_back(static_cast<std::uint8_t>(img.camera.face_index));
        s.values.push_back(v);
      }
    }
    close_pixel(s);
  }
  return s;
}

ErpStack stack_from_layers(std::span<const ErpImage> layers) {
  if (layers.empty()) throw ParameterError("no layers to stack");
  ErpStack s = empty_stack(layers.front().width, layers.front().height);
  for (const ErpImage& l : layers)
    if (l.width != s.width || l.height != s.height || l.channels != 1)
      throw ParameterError("stacked layers must be single-channel on one ERP grid");
  for (std::size_t p = 0; p < s.pixel_count(); ++p) {
    for (std::size_t f = 0; f < layers.size(); ++f) {
      if (!layers[f].mask[p]) continue;
      s.faces.push_back(static_cast<std::uint8_t>(f));
      s.values.push_back(layers[f].values[p]);
    }
    close_pixel(s);
  }
  return s;
}

double raw_weight(const TangentCamera& camera, BlendScheme scheme, Vec3 direction,
                  const BlendConfig& config) {
  const PlanePoint p = gnomonic_forward(camera, direction);
  if (!p.valid || !camera.contains(p.x, p.y)) return 0.0;

  switch (scheme) {
    case BlendScheme::nn:
      return direction.dot(camera.forward);
    case BlendScheme::mean:
      return 1.0;
    case BlendScheme::radial: {
      const double rho = std::hypot(p.x, p.y);
      const double start = deg_to_rad(config.radial_decay_start_deg);
      const double angle = std::atan(rho);
      if (angle <= start) return 1.0;
      // Angular radius of the footprint boundary along this azimuth.
      const double boundary_rho = std::min(
          p.x != 0 ? camera.half_extent_x * rho / std::abs(p.x) : INFINITY,
          p.y != 0 ? camera.half_extent_y * rho / std::abs(p.y) : INFINITY);
      const double boundary = std::atan(boundary_rho);
      if (boundary <= start) return 0.0;
      return std::clamp((boundary - angle) / (boundary - start), 0.0, 1.0);
    }
    case BlendScheme::frustum: {
      const double t =
          std::max(std::abs(p.x) / camera.half_extent_x, std::abs(p.y) / camera.half_extent_y);
      const double inner = 1.0 - config.frustum_decay_start;
      if (t <= inner) return 1.0;
      return std::clamp((1.0 - t) / config.frustum_decay_start, 0.0, 1.0);
    }
  }
  return 0.0;
}

BlendWeights compute_weights(std::span<const TangentCamera> cameras, BlendScheme scheme,
                             int erp_width, int erp_height, const BlendConfig& config) {
  config.validate();
  BlendWeights out;
  out.scheme = scheme;
  out.field = empty_stack(erp_width, erp_height);
  ErpStack& s = out.field;
  const std::vector<Vec3> dirs = erp_directions(erp_width, erp_height);

  std::vector<std::uint8_t> faces;
  std::vector<double> raw;
  for (const Vec3& dir : dirs) {
    faces.clear();
    raw.clear();
    for (const TangentCamera& cam : cameras) {
      if (!footprint_contains(cam, dir)) continue;
      faces.push_back(static_cast<std::uint8_t>(cam.face_index));
      raw.push_back(raw_weight(cam, scheme, dir, config));
    }
    if (!faces.empty()) {
      if (scheme == BlendScheme::nn) {
        const auto best = std::max_element(raw.begin(), raw.end()) - raw.begin();
        for (std::size_t k = 0; k < raw.size(); ++k)
          raw[k] = static_cast<std::ptrdiff_t>(k) == best ? 1.0 : 0.0;
      } else {
        double sum = 0;
        for (double w : raw) sum += w;
        // On the exact rim of every footprint fall back to uniform weights.
        if (sum <= 0) {
          std::fill(raw.begin(), raw.end(), 1.0);
          sum = static_cast<double>(raw.size());
        }
        for (double& w : raw) w /= sum;
      }
      s.faces.insert(s.faces.end(), faces.begin(), faces.end());
      s.values.insert(s.values.end(), raw.begin(), raw.end());
    }
    close_pixel(s);
  }
  return out;
}

ErpImage stitch_nn(const ErpStack& aligned, const BlendWeights& nn_weights) {
  check_same_grid(aligned, nn_weights.field);
  ErpImage out(aligned.width, aligned.height, 1, 0.0, false);
  for (std::size_t p = 0; p < aligned.pixel_count(); ++p) {
    double best_w = -1;
    for (std::size_t e = aligned.begin(p); e < aligned.end(p); ++e) {
      const double w = weight_at(nn_weights.field, p, aligned.faces[e]);
      if (w > best_w) {
        best_w = w;
        out.values[p] = aligned.values[e];
        out.mask[p] = 1;
      }
    }
  }
  return out;
}

ErpImage blend_weighted(const ErpStack& aligned, const BlendWeights& weights) {
  check_same_grid(aligned, weights.field);
  ErpImage out(aligned.width, aligned.height, 1, 0.0, false);
  for (std::size_t p = 0; p < aligned.pixel_count(); ++p) {
    const std::size_t b = aligned.begin(p), e = aligned.end(p);
    if (b == e) continue;
    double acc = 0, wsum = 0;
    for (std::size_t k = b; k < e; ++k) {
      const double w = weight_at(weights.field, p, aligned.faces[k]);
      acc += w * aligned.values[k];
      wsum += w;
    }
    if (wsum <= 0) {
      acc = 0;
      for (std::size_t k = b; k < e; ++k) acc += aligned.values[k];
      wsum = static_cast<double>(e - b);
    }
    out.values[p] = acc / wsum;
    out.mask[p] = 1;
  }
  return out;
}

PoissonResult blend_poisson(const ErpStack& aligned, const BlendWeights& weights,
                            const ErpImage& d_nn, const BlendConfig& config) {
  config.validate();
  check_same_grid(aligned, weights.field);
  if (d_nn.width != aligned.width || d_nn.height != aligned.height || d_nn.channels != 1)
    throw ParameterError("D_NN must be single-channel on the blend grid");

  const int width = aligned.width;
  const int height = aligned.height;
  const std::size_t n_pixels = aligned.pixel_count();

  // Pixels inside the polar caps pass D_NN through and act as Dirichlet values.
  const double cap = config.pole_exclusion_deg > 0 ? config.pole_exclusion_deg : -1;
  std::vector<std::int64_t> unknown(n_pixels, -1);
  std::vector<std::uint8_t> fixed(n_pixels, 0);
  std::size_t n_unknowns = 0;
  for (int v = 0; v < height; ++v) {
    const double lat = rad_to_deg(kPi / 2 - (v + 0.5) / height * kPi);
    const bool in_cap = cap > 0 && std::abs(lat) > 90.0 - cap;
    for (int u = 0; u < width; ++u) {
      const std::size_t p = d_nn.index(u, v);
      if (!d_nn.mask[p]) continue;
      if (in_cap) {
        fixed[p] = 1;
      } else {
        unknown[p] = static_cast<std::int64_t>(n_unknowns++);
      }
    }
  }

  PoissonResult result;
  result.image = ErpImage(width, height, 1, 0.0, false);
  result.unknowns = n_unknowns;
  for (std::size_t p = 0; p < n_pixels; ++p) {
    if (!d_nn.mask[p]) continue;
    result.image.values[p] = d_nn.values[p];
    result.image.mask[p] = 1;
  }
  if (n_unknowns == 0) {
    result.converged = true;
    return result;
  }

  using Triplet = Eigen::Triplet<double, std::int64_t>;
  std::vector<Triplet> triplets;
  triplets.reserve(n_unknowns * 5);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_unknowns));
  Eigen::VectorXd guess(static_cast<Eigen::Index>(n_unknowns));
  std::vector<double> diagonal(n_unknowns, config.lambda_fidelity);
  for (std::size_t p = 0; p < n_pixels; ++p) {
    if (unknown[p] < 0) continue;
    rhs[unknown[p]] = config.lambda_fidelity * d_nn.values[p];
    guess[unknown[p]] = d_nn.values[p];
  }

  // One forward-difference edge p -> q.
  const auto add_edge = [&](std::size_t p, std::size_t q) {
    const bool p_free = unknown[p] >= 0, q_free = unknown[q] >= 0;
    if (!(p_free || fixed[p]) || !(q_free || fixed[q]) || (!p_free && !q_free)) return;
    double w_sum = 0, target = 0;
    for (std::size_t e = aligned.begin(p); e < aligned.end(p); ++e) {
      const int face = aligned.faces[e];
      const double* vq = value_at(aligned, q, face);
      if (!vq) continue;
      const double w = weight_at(weights.field, p, face);
      w_sum += w;
      target += w * (*vq - aligned.values[e]);
    }
    if (w_sum <= 0) return;
    if (p_free) {
      diagonal[static_cast<std::size_t>(unknown[p])] += w_sum;
      rhs[unknown[p]] -= target;
    }
    if (q_free) {
      diagonal[static_cast<std::size_t>(unknown[q])] += w_sum;
      rhs[unknown[q]] += target;
    }
    if (p_free && q_free) {
      triplets.emplace_back(unknown[p], unknown[q], -w_sum);
      triplets.emplace_back(unknown[q], unknown[p], -w_sum);
    } else if (p_free) {
      rhs[unknown[p]] += w_sum * d_nn.values[q];
    } else {
      rhs[unknown[q]] += w_sum * d_nn.values[p];
    }
  };

  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const std::size_t p = d_nn.index(u, v);
      add_edge(p, d_nn.index((u + 1) % width, v));
      if (v + 1 < height) add_edge(p, d_nn.index(u, v + 1));
    }
  }
  for (std::size_t i = 0; i < n_unknowns; ++i)
    triplets.emplace_back(static_cast<std::int64_t>(i), static_cast<std::int64_t>(i), diagonal[i]);

  Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t> system(
      static_cast<std::int64_t>(n_unknowns), static_cast<std::int64_t>(n_unknowns));
  system.setFromTriplets(triplets.begin(), triplets.end());
  triplets = {};

  Eigen::ConjugateGradient<decltype(system), Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      solver;
  solver.setTolerance(config.solver_tolerance);
  solver.setMaxIterations(config.solver_max_iterations);
  solver.compute(system);
  const Eigen::VectorXd solution = solver.solveWithGuess(rhs, guess);

  result.iterations = static_cast<int>(solver.iterations());
  result.relative_residual = solver.error();
  result.converged = solver.info() == Eigen::Success;
  for (std::size_t p = 0; p < n_pixels; ++p)
    if (unknown[p] >= 0) result.image.values[p] = solution[unknown[p]];
  return result;
}

}  // namespace tfuse
