#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tangentfuse/disparity_model.hpp"

namespace tfuse {

enum class SceneKind { box_room, sphere_in_room };

std::string to_string(SceneKind kind);
SceneKind parse_scene_kind(const std::string& name);

/// Analytic indoor scene around a camera at the origin.
struct SceneConfig {
  SceneKind kind = SceneKind::box_room;
  Vec3 room_min{-1.6, -2.3, -1.5};
  Vec3 room_max{3.8, 1.9, 1.3};
  Vec3 sphere_center{1.3, -0.8, -0.5};
  double sphere_radius = 0.45;

  // Per-face affine corruption D -> s * D + o of the perspective disparity.
  bool corrupt = true;
  double scale_min = 0.5;
  double scale_max = 2.0;
  double offset_min = -0.5;
  double offset_max = 0.5;
  /// Relative amplitude of an extra low-frequency multiplicative field; 0 disables it.
  double smooth_amplitude = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Radial distance from the origin to the first surface along a unit direction.
double scene_depth(const SceneConfig& scene, Vec3 direction);

struct FaceCorruption {
  int face = 0;
  double scale = 1;
  double offset = 0;
  double smooth_phase_u = 0;
  double smooth_phase_v = 0;
};

struct SyntheticData {
  ErpImage gt_depth;
  std::vector<DisparityMap> maps;  // perspective, corrupted, one per camera
  std::vector<FaceCorruption> corruption;
};

/// Corruption parameters drawn deterministically from scene.seed.
std::vector<FaceCorruption> draw_corruption(const SceneConfig& scene, int faces);

SyntheticData generate_synthetic(const SceneConfig& scene, const IcosahedronLayout& layout,
                                 int erp_width, int erp_height);

/// Checker-textured RGB rendering of the scene, for projection demos.
ErpImage render_scene_texture(const SceneConfig& scene, int erp_width, int erp_height);

}  // namespace tfuse
