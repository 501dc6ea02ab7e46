#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace tfuse {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  double dot(Vec3 o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(Vec3 o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const { return (1.0 / norm()) * *this; }
};

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Direction on the unit sphere. Longitude grows eastward (x toward y), latitude
/// is positive in the northern hemisphere (+z).
struct SphericalCoord {
  double lon = 0;  // [-pi, pi)
  double lat = 0;  // [-pi/2, pi/2]

  /// Wraps lon into [-pi, pi) and clamps lat into [-pi/2, pi/2].
  static SphericalCoord normalized(double lon, double lat);
  static SphericalCoord from_unit_vector(Vec3 v);
  Vec3 to_unit_vector() const;
};

double angular_distance(const SphericalCoord& a, const SphericalCoord& b);

/// Continuous gnomonic-plane coordinates. `valid` is false on the far hemisphere.
struct PlanePoint {
  double x = 0;
  double y = 0;
  bool valid = false;
};

/// Continuous pixel index coordinates; integers are pixel centers.
struct PixelPoint {
  double u = 0;
  double v = 0;
};

/// A gnomonic tangent image. The image rectangle is centered on the tangent
/// point and spans [-half_extent_x, half_extent_x] x [-half_extent_y, half_extent_y]
/// in the tangent plane (unit distance from the sphere center). Row 0 is the
/// top of the image (+y), column 0 the left (-x).
struct TangentCamera {
  SphericalCoord tangent_point;
  double half_extent_x = 0;
  double half_extent_y = 0;
  int width_px = 0;
  int height_px = 0;
  double padding = 0;
  int face_index = 0;

  // Orthonormal frame: forward is the tangent point, up points toward the north
  // pole, right = up x forward.
  Vec3 forward;
  Vec3 right;
  Vec3 up;

  bool contains(double x, double y) const {
    return std::abs(x) <= half_extent_x && std::abs(y) <= half_extent_y;
  }
  /// Plane coordinates of the center of pixel (col, row).
  PlanePoint pixel_center(int col, int row) const;
  /// Continuous pixel coordinates of a plane point.
  PixelPoint plane_to_pixel(double x, double y) const;
  /// Normalized rectangle coordinates: (0, 0) is the top-left corner, (1, 1) bottom-right.
  std::array<double, 2> plane_to_unit(double x, double y) const {
    return {(x + half_extent_x) / (2 * half_extent_x), (half_extent_y - y) / (2 * half_extent_y)};
  }
};

/// Builds a camera tangent at `tangent_point` with the given extents.
TangentCamera make_tangent_camera(const SphericalCoord& tangent_point, double half_extent_x,
                                  double half_extent_y, int width_px, int height_px,
                                  double padding = 0, int face_index = 0);

PlanePoint gnomonic_forward(const TangentCamera& camera, const SphericalCoord& point);
PlanePoint gnomonic_forward(const TangentCamera& camera, Vec3 direction);
SphericalCoord gnomonic_inverse(const TangentCamera& camera, double x, double y);
Vec3 gnomonic_inverse_vector(const TangentCamera& camera, double x, double y);

struct IcosahedronLayout {
  std::vector<TangentCamera> cameras;
  double padding = 0;

  int size() const { return static_cast<int>(cameras.size()); }
  const TangentCamera& operator[](int i) const { return cameras[static_cast<std::size_t>(i)]; }
};

inline constexpr int kIcosahedronFaces = 20;

/// Unit-sphere vertices of face `face` (0..19). Faces 0-4 touch the north pole,
/// 5-9 and 10-14 form the equatorial band, 15-19 touch the south pole.
std::array<Vec3, 3> icosahedron_face_vertices(int face);

IcosahedronLayout build_icosahedron_layout(double padding, int width_px, int height_px);

SphericalCoord erp_pixel_to_spherical(double u, double v, int width, int height);
/// Continuous pixel coordinates of a direction; u is wrapped into [0, width).
PixelPoint spherical_to_erp_pixel(const SphericalCoord& point, int width, int height);
/// Validates the 2:1 ERP aspect and returns normally, throws ParameterError otherwise.
void check_erp_dimensions(int width, int height);

/// Direction of each ERP pixel center, row-major.
std::vector<Vec3> erp_directions(int width, int height);

/// Per-pixel count of padded footprints containing the pixel direction, row-major.
std::vector<int> coverage_map(const IcosahedronLayout& layout, int erp_width, int erp_height);

/// Footprint test on the padded image rectangle.
bool footprint_contains(const TangentCamera& camera, Vec3 direction);

}  // namespace tfuse
