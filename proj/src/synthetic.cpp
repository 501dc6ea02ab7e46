#include "tangentfuse/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "tangentfuse/errors.hpp"

namespace tfuse {

namespace {

// Uniform in [0, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double component(Vec3 v, int axis) { return axis == 0 ? v.x : axis == 1 ? v.y : v.z; }

double box_distance(const SceneConfig& scene, Vec3 d, int* hit_axis = nullptr) {
  double t = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double di = component(d, axis);
    double ti = std::numeric_limits<double>::infinity();
    if (di > 0) ti = component(scene.room_max, axis) / di;
    if (di < 0) ti = component(scene.room_min, axis) / di;
    if (ti < t) {
      t = ti;
      if (hit_axis) *hit_axis = axis;
    }
  }
  return t;
}

double sphere_distance(const SceneConfig& scene, Vec3 d) {
  // |t d - c|^2 = R^2 with |d| = 1.
  const double b = d.dot(scene.sphere_center);
  const double c = scene.sphere_center.dot(scene.sphere_center) -
                   scene.sphere_radius * scene.sphere_radius;
  const double disc = b * b - c;
  if (disc < 0) return std::numeric_limits<double>::infinity();
  const double t = b - std::sqrt(disc);
  return t > 0 ? t : std::numeric_limits<double>::infinity();
}

}  // namespace

std::string to_string(SceneKind kind) {
  return kind == SceneKind::box_room ? "box_room" : "sphere_in_room";
}

SceneKind parse_scene_kind(const std::string& name) {
  if (name == "box_room" || name == "box") return SceneKind::box_room;
  if (name == "sphere_in_room" || name == "sphere") return SceneKind::sphere_in_room;
  throw ParameterError("unknown scene kind '" + name + "'");
}

void SceneConfig::validate() const {
  if (!(room_min.x < 0 && room_min.y < 0 && room_min.z < 0 && room_max.x > 0 && room_max.y > 0 &&
        room_max.z > 0))
    throw ParameterError("the camera (origin) must lie strictly inside the room");
  if (kind == SceneKind::sphere_in_room) {
    if (!(sphere_radius > 0)) throw ParameterError("sphere radius must be positive");
    if (sphere_center.norm() <= sphere_radius)
      throw ParameterError("the camera must lie outside the sphere");
  }
  if (!(scale_min > 0 && scale_max >= scale_min))
    throw ParameterError("corruption scales must be positive with min <= max");
  if (!(offset_max >= offset_min)) throw ParameterError("offset range is empty");
  if (!(smooth_amplitude >= 0 && smooth_amplitude < 1))
    throw ParameterError("smooth_amplitude must lie in [0, 1)");
}

double scene_depth(const SceneConfig& scene, Vec3 direction) {
  double t = box_distance(scene, direction);
  if (scene.kind == SceneKind::sphere_in_room) t = std::min(t, sphere_distance(scene, direction));
  return t;
}

std::vector<FaceCorruption> draw_corruption(const SceneConfig& scene, int faces) {
  std::mt19937_64 rng(scene.seed);
  std::vector<FaceCorruption> out;
  for (int f = 0; f < faces; ++f) {
    FaceCorruption c;
    c.face = f;
    // Always draw all four numbers so the table does not depend on flags.
    const double us = unit_uniform(rng), uo = unit_uniform(rng);
    c.smooth_phase_u = 2 * kPi * unit_uniform(rng);
    c.smooth_phase_v = 2 * kPi * unit_uniform(rng);
    if (scene.corrupt) {
      c.scale = scene.scale_min + (scene.scale_max - scene.scale_min) * us;
      c.offset = scene.offset_min + (scene.offset_max - scene.offset_min) * uo;
    }
    out.push_back(c);
  }
  return out;
}

SyntheticData generate_synthetic(const SceneConfig& scene, const IcosahedronLayout& layout,
                                 int erp_width, int erp_height) {
  scene.validate();
  SyntheticData data;
  data.gt_depth = ErpImage(erp_width, erp_height, 1);
  const std::vector<Vec3> dirs = erp_directions(erp_width, erp_height);
  for (std::size_t i = 0; i < dirs.size(); ++i) data.gt_depth.values[i] = scene_depth(scene, dirs[i]);

  data.corruption = draw_corruption(scene, layout.size());
  for (const TangentCamera& cam : layout.cameras) {
    const FaceCorruption& c = data.corruption[static_cast<std::size_t>(cam.face_index)];
    DisparityMap m;
    m.image = TangentImage(cam);
    m.semantics = DisparitySemantics::perspective;
    for (int row = 0; row < cam.height_px; ++row) {
      for (int col = 0; col < cam.width_px; ++col) {
        const PlanePoint p = cam.pixel_center(col, row);
        const Vec3 dir = gnomonic_inverse_vector(cam, p.x, p.y);
        const double z = scene_depth(scene, dir) * dir.dot(cam.forward);
        double scale = c.scale;
        if (scene.smooth_amplitude > 0) {
          const double u = (col + 0.5) / cam.width_px, v = (row + 0.5) / cam.height_px;
          scale *= 1 + scene.smooth_amplitude * std::sin(kPi * u + c.smooth_phase_u) *
                           std::cos(kPi * v + c.smooth_phase_v);
        }
        m.image.at(col, row) = scale / z + c.offset;
      }
    }
    data.maps.push_back(std::move(m));
  }
  return data;
}

ErpImage render_scene_texture(const SceneConfig& scene, int erp_width, int erp_height) {
  ErpImage out(erp_width, erp_height, 3);
  const std::vector<Vec3> dirs = erp_directions(erp_width, erp_height);
  const std::array<std::array<double, 3>, 4> palette{{{0.85, 0.55, 0.35},
                                                      {0.35, 0.6, 0.85},
                                                      {0.5, 0.8, 0.45},
                                                      {0.9, 0.85, 0.5}}};
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    int axis = 0;
    double t = box_distance(scene, dirs[i], &axis);
    int tint = axis;
    if (scene.kind == SceneKind::sphere_in_room) {
      const double ts = sphere_distance(scene, dirs[i]);
      if (ts < t) {
        t = ts;
        tint = 3;
      }
    }
    const Vec3 hit = t * dirs[i];
    const int checker = (static_cast<int>(std::floor(hit.x * 2)) +
                         static_cast<int>(std::floor(hit.y * 2)) +
                         static_cast<int>(std::floor(hit.z * 2))) & 1;
    const double shade = checker ? 1.0 : 0.55;
    for (int c = 0; c < 3; ++c) out.values[i * 3 + c] = shade * palette[static_cast<std::size_t>(tint)][static_cast<std::size_t>(c)];
  }
  return out;
}

}  // namespace tfuse
