#include "tangentfuse/sphere_geometry.hpp"

#include <algorithm>
#include <string>

#include "tangentfuse/errors.hpp"

namespace tfuse {

namespace {

// cos(angular distance) threshold below which a direction is treated as lying
// on the far hemisphere of a tangent plane.
constexpr double kMinForwardCosine = 1e-9;

double wrap_longitude(double lon) {
  double wrapped = std::fmod(lon + kPi, 2 * kPi);
  if (wrapped < 0) wrapped += 2 * kPi;
  wrapped -= kPi;
  // fmod can land exactly on +pi after the shift back.
  if (wrapped >= kPi) wrapped -= 2 * kPi;
  return wrapped;
}

}  // namespace

SphericalCoord SphericalCoord::normalized(double lon, double lat) {
  return {wrap_longitude(lon), std::clamp(lat, -kPi / 2, kPi / 2)};
}

SphericalCoord SphericalCoord::from_unit_vector(Vec3 v) {
  const double lon = std::atan2(v.y, v.x);
  const double lat = std::atan2(v.z, std::hypot(v.x, v.y));
  return normalized(lon, lat);
}

Vec3 SphericalCoord::to_unit_vector() const {
  const double c = std::cos(lat);
  return {c * std::cos(lon), c * std::sin(lon), std::sin(lat)};
}

double angular_distance(const SphericalCoord& a, const SphericalCoord& b) {
  const Vec3 va = a.to_unit_vector();
  const Vec3 vb = b.to_unit_vector();
  return std::atan2(va.cross(vb).norm(), va.dot(vb));
}

PlanePoint TangentCamera::pixel_center(int col, int row) const {
  const double x = -half_extent_x + (col + 0.5) * (2 * half_extent_x / width_px);
  const double y = half_extent_y - (row + 0.5) * (2 * half_extent_y / height_px);
  return {x, y, true};
}

PixelPoint TangentCamera::plane_to_pixel(double x, double y) const {
  return {(x + half_extent_x) / (2 * half_extent_x) * width_px - 0.5,
          (half_extent_y - y) / (2 * half_extent_y) * height_px - 0.5};
}

TangentCamera make_tangent_camera(const SphericalCoord& tangent_point, double half_extent_x,
                                  double half_extent_y, int width_px, int height_px,
                                  double padding, int face_index) {
  if (!(half_extent_x > 0) || !(half_extent_y > 0))
    throw ParameterError("tangent camera half extents must be positive");
  if (width_px < 2 || height_px < 2)
    throw ParameterError("tangent camera needs at least 2x2 pixels");

  TangentCamera cam;
  cam.tangent_point = tangent_point;
  cam.half_extent_x = half_extent_x;
  cam.half_extent_y = half_extent_y;
  cam.width_px = width_px;
  cam.height_px = height_px;
  cam.padding = padding;
  cam.face_index = face_index;

  cam.forward = tangent_point.to_unit_vector();
  const Vec3 north{0, 0, 1};
  Vec3 up = north - cam.forward.dot(north) * cam.forward;
  if (up.norm() < 1e-9) {
    // Tangent point on a pole: fix the frame to the lon = 0 meridian.
    up = cam.forward.z > 0 ? Vec3{-1, 0, 0} : Vec3{1, 0, 0};
  }
  cam.up = up.normalized();
  cam.right = cam.up.cross(cam.forward);
  return cam;
}

PlanePoint gnomonic_forward(const TangentCamera& camera, Vec3 direction) {
  const double c = direction.dot(camera.forward);
  if (c <= kMinForwardCosine) return {0, 0, false};
  return {direction.dot(camera.right) / c, direction.dot(camera.up) / c, true};
}

PlanePoint gnomonic_forward(const TangentCamera& camera, const SphericalCoord& point) {
  return gnomonic_forward(camera, point.to_unit_vector());
}

Vec3 gnomonic_inverse_vector(const TangentCamera& camera, double x, double y) {
  return (camera.forward + x * camera.right + y * camera.up).normalized();
}

SphericalCoord gnomonic_inverse(const TangentCamera& camera, double x, double y) {
  return SphericalCoord::from_unit_vector(gnomonic_inverse_vector(camera, x, y));
}

bool footprint_contains(const TangentCamera& camera, Vec3 direction) {
  const PlanePoint p = gnomonic_forward(camera, direction);
  return p.valid && camera.contains(p.x, p.y);
}

std::array<Vec3, 3> icosahedron_face_vertices(int face) {
  if (face < 0 || face >= kIcosahedronFaces)
    throw ParameterError("icosahedron face index out of range: " + std::to_string(face));

  const double ring_lat = std::atan(0.5);
  auto upper = [&](int k) {
    return SphericalCoord::normalized(deg_to_rad(72.0 * (k % 5)), ring_lat).to_unit_vector();
  };
  auto lower = [&](int k) {
    return SphericalCoord::normalized(deg_to_rad(36.0 + 72.0 * (k % 5)), -ring_lat)
        .to_unit_vector();
  };
  const Vec3 north{0, 0, 1};
  const Vec3 south{0, 0, -1};

  const int k = face % 5;
  switch (face / 5) {
    case 0: return {north, upper(k), upper(k + 1)};
    case 1: return {upper(k), upper(k + 1), lower(k)};
    case 2: return {lower(k), lower(k + 1), upper(k + 1)};
    default: return {south, lower(k + 1), lower(k)};
  }
}

IcosahedronLayout build_icosahedron_layout(double padding, int width_px, int height_px) {
  if (!(padding >= 0.0 && padding <= 1.0))
    throw ParameterError("padding must lie in [0, 1]");
  if (width_px < 2 || height_px < 2)
    throw ParameterError("tangent resolution must be at least 2x2");

  IcosahedronLayout layout;
  layout.padding = padding;
  layout.cameras.reserve(kIcosahedronFaces);
  for (int face = 0; face < kIcosahedronFaces; ++face) {
    const auto vertices = icosahedron_face_vertices(face);
    const Vec3 centroid = (1.0 / 3.0) * (vertices[0] + vertices[1] + vertices[2]);
    const SphericalCoord tangent = SphericalCoord::from_unit_vector(centroid.normalized());

    // Frame first with unit extents, then fit the face triangle.
    TangentCamera cam = make_tangent_camera(tangent, 1, 1, width_px, height_px, padding, face);
    double max_x = 0, max_y = 0;
    for (const Vec3& v : vertices) {
      const PlanePoint p = gnomonic_forward(cam, v);
      max_x = std::max(max_x, std::abs(p.x));
      max_y = std::max(max_y, std::abs(p.y));
    }
    cam.half_extent_x = max_x * (1 + padding);
    cam.half_extent_y = max_y * (1 + padding);
    layout.cameras.push_back(cam);
  }
  return layout;
}

void check_erp_dimensions(int width, int height) {
  if (height < 1 || width != 2 * height)
    throw ParameterError("ERP grid must satisfy width = 2 * height (got " + std::to_string(width) +
                         "x" + std::to_string(height) + ")");
}

SphericalCoord erp_pixel_to_spherical(double u, double v, int width, int height) {
  check_erp_dimensions(width, height);
  const double lon = (u + 0.5) / width * 2 * kPi - kPi;
  const double lat = kPi / 2 - (v + 0.5) / height * kPi;
  return SphericalCoord::normalized(lon, lat);
}

PixelPoint spherical_to_erp_pixel(const SphericalCoord& point, int width, int height) {
  check_erp_dimensions(width, height);
  double u = (point.lon + kPi) / (2 * kPi) * width - 0.5;
  u = std::fmod(u, static_cast<double>(width));
  if (u < 0) u += width;
  const double v = (kPi / 2 - point.lat) / kPi * height - 0.5;
  return {u, v};
}

std::vector<Vec3> erp_directions(int width, int height) {
  check_erp_dimensions(width, height);
  std::vector<Vec3> dirs(static_cast<std::size_t>(width) * height);
  std::vector<double> cos_lon(width), sin_lon(width);
  for (int u = 0; u < width; ++u) {
    const double lon = (u + 0.5) / width * 2 * kPi - kPi;
    cos_lon[u] = std::cos(lon);
    sin_lon[u] = std::sin(lon);
  }
  for (int v = 0; v < height; ++v) {
    const double lat = kPi / 2 - (v + 0.5) / height * kPi;
    const double cl = std::cos(lat), sl = std::sin(lat);
    Vec3* row = dirs.data() + static_cast<std::size_t>(v) * width;
    for (int u = 0; u < width; ++u) row[u] = {cl * cos_lon[u], cl * sin_lon[u], sl};
  }
  return dirs;
}

std::vector<int> coverage_map(const IcosahedronLayout& layout, int erp_width, int erp_height) {
  const std::vector<Vec3> dirs = erp_directions(erp_width, erp_height);
  std::vector<int> counts(dirs.size(), 0);
  for (const TangentCamera& cam : layout.cameras) {
    for (std::size_t i = 0; i < dirs.size(); ++i)
      if (footprint_contains(cam, dirs[i])) ++counts[i];
  }
  return counts;
}

}  // namespace tfuse
