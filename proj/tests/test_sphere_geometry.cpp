#include <algorithm>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "tangentfuse/errors.hpp"
#include "tangentfuse/sphere_geometry.hpp"

using namespace tfuse;

namespace {

// Textbook gnomonic equations in terms of latitude/longitude, with x east and
// y toward north. Written independently of the vector form in the library.
PlanePoint textbook_gnomonic(double lon0, double lat0, double lon, double lat) {
  const double cos_c =
      std::sin(lat0) * std::sin(lat) + std::cos(lat0) * std::cos(lat) * std::cos(lon - lon0);
  PlanePoint p;
  p.valid = cos_c > 0;
  p.x = std::cos(lat) * std::sin(lon - lon0) / cos_c;
  p.y = (std::cos(lat0) * std::sin(lat) - std::sin(lat0) * std::cos(lat) * std::cos(lon - lon0)) /
        cos_c;
  return p;
}

// Rodrigues rotation about a unit axis.
Vec3 rotate(Vec3 v, Vec3 axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return c * v + s * axis.cross(v) + ((1 - c) * axis.dot(v)) * axis;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("spherical coordinates round trip through unit vectors") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
      const Vec3 d = testing::random_direction(rng);
      const Vec3 back = SphericalCoord::from_unit_vector(d).to_unit_vector();
      CHECK((back - d).norm() < 1e-14);
    }
    const SphericalCoord wrapped = SphericalCoord::normalized(3 * kPi, 2.0);
    CHECK(wrapped.lon == doctest::Approx(-kPi));
    CHECK(wrapped.lat == doctest::Approx(kPi / 2));
  }

  TEST_CASE("gnomonic forward matches the textbook equations") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 500; ++i) {
      const double lon0 = testing::uniform(rng, -kPi, kPi);
      const double lat0 = testing::uniform(rng, -1.4, 1.4);
      const TangentCamera cam = make_tangent_camera({lon0, lat0}, 1, 1, 10, 10);
      const double lon = lon0 + testing::uniform(rng, -0.8, 0.8);
      const double lat = std::clamp(lat0 + testing::uniform(rng, -0.8, 0.8), -1.5, 1.5);
      const PlanePoint expected = textbook_gnomonic(lon0, lat0, lon, lat);
      const PlanePoint got = gnomonic_forward(cam, SphericalCoord::normalized(lon, lat));
      REQUIRE(got.valid == expected.valid);
      if (!expected.valid) continue;
      CHECK(got.x == doctest::Approx(expected.x).epsilon(1e-10));
      CHECK(got.y == doctest::Approx(expected.y).epsilon(1e-10));
    }
  }

  TEST_CASE("gnomonic special points") {
    const TangentCamera cam = make_tangent_camera({0, 0}, 1, 1, 10, 10);
    const PlanePoint center = gnomonic_forward(cam, SphericalCoord{0, 0});
    CHECK(center.valid);
    CHECK(center.x == 0);
    CHECK(center.y == 0);

    const double theta = 0.01;
    const PlanePoint east = gnomonic_forward(cam, SphericalCoord{theta, 0});
    CHECK(east.x == doctest::Approx(std::tan(theta)).epsilon(1e-14));
    CHECK(std::abs(east.y) < 1e-15);

    CHECK_FALSE(gnomonic_forward(cam, SphericalCoord{-kPi, 0}).valid);
    CHECK_FALSE(gnomonic_forward(cam, SphericalCoord{kPi / 2, 0}).valid);

    const SphericalCoord p = gnomonic_inverse(cam, std::tan(deg_to_rad(36)), 0);
    CHECK(rad_to_deg(p.lon) == doctest::Approx(36).epsilon(1e-12));
    CHECK(std::abs(p.lat) < 1e-15);
    const SphericalCoord origin = gnomonic_inverse(cam, 0, 0);
    CHECK(std::abs(origin.lon) < 1e-15);
    CHECK(std::abs(origin.lat) < 1e-15);
  }

  TEST_CASE("forward and inverse are mutual inverses") {
    std::mt19937_64 rng(3);
    const IcosahedronLayout layout = build_icosahedron_layout(0.3, 400, 346);
    double worst = 0;
    for (int i = 0; i < 10000; ++i) {
      const TangentCamera& cam = layout[i % 20];
      const double x = testing::uniform(rng, -3, 3), y = testing::uniform(rng, -3, 3);
      const PlanePoint back = gnomonic_forward(cam, gnomonic_inverse_vector(cam, x, y));
      REQUIRE(back.valid);
      worst = std::max({worst, std::abs(back.x - x), std::abs(back.y - y)});
    }
    CHECK(worst < 1e-10);

    for (int i = 0; i < 2000; ++i) {
      const TangentCamera& cam = layout[i % 20];
      const Vec3 d = testing::random_direction(rng);
      const PlanePoint p = gnomonic_forward(cam, d);
      if (!p.valid || std::abs(p.x) > 50 || std::abs(p.y) > 50) continue;
      CHECK((gnomonic_inverse_vector(cam, p.x, p.y) - d).norm() < 1e-10);
    }
  }

  TEST_CASE("a common rotation leaves plane coordinates unchanged") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
      const Vec3 forward = testing::random_direction(rng);
      const Vec3 axis{0, 0, 1};  // rotations about the pole keep "up" well defined
      const double angle = testing::uniform(rng, -kPi, kPi);
      const TangentCamera a =
          make_tangent_camera(SphericalCoord::from_unit_vector(forward), 1, 1, 4, 4);
      const TangentCamera b = make_tangent_camera(
          SphericalCoord::from_unit_vector(rotate(forward, axis, angle)), 1, 1, 4, 4);
      const Vec3 q = (forward + 0.3 * testing::random_direction(rng)).normalized();
      const PlanePoint pa = gnomonic_forward(a, q);
      const PlanePoint pb = gnomonic_forward(b, rotate(q, axis, angle));
      REQUIRE(pa.valid == pb.valid);
      CHECK(std::abs(pa.x - pb.x) < 1e-9);
      CHECK(std::abs(pa.y - pb.y) < 1e-9);
    }
  }

  TEST_CASE("ERP pixel convention") {
    CHECK_THROWS_AS(check_erp_dimensions(300, 100), ParameterError);
    CHECK_NOTHROW(check_erp_dimensions(64, 32));

    const SphericalCoord c = erp_pixel_to_spherical(1023.5, 511.5, 2048, 1024);
    CHECK(std::abs(c.lon) < 1e-12);
    CHECK(std::abs(c.lat) < 1e-12);
    const SphericalCoord top = erp_pixel_to_spherical(0, 0, 2048, 1024);
    CHECK(top.lat < kPi / 2);
    CHECK(top.lat == doctest::Approx(kPi / 2 - 0.5 * kPi / 1024).epsilon(1e-14));
    CHECK(top.lon == doctest::Approx(-kPi + kPi / 2048).epsilon(1e-14));

    for (int v = 0; v < 32; ++v) {
      for (int u = 0; u < 64; ++u) {
        const PixelPoint p = spherical_to_erp_pixel(erp_pixel_to_spherical(u, v, 64, 32), 64, 32);
        // Column 0 may come back as 64 - eps, the same place after wrapping.
        const double du = std::abs(p.u - u);
        CHECK(std::min(du, 64 - du) < 1e-12);
        CHECK(std::abs(p.v - v) < 1e-12);
      }
    }
    // Longitude wraps to [0, width).
    const PixelPoint w = spherical_to_erp_pixel(SphericalCoord{kPi - 1e-9, 0}, 64, 32);
    CHECK(w.u >= 0);
    CHECK(w.u < 64);
  }

  TEST_CASE("icosahedron tangent points") {
    const double phi = (1 + std::sqrt(5.0)) / 2;
    // Angle between a face center and its vertices, and between adjacent faces.
    const double center_to_vertex =
        std::acos(phi * phi / (std::sqrt(3.0) * std::sqrt(phi * phi + 1)));
    const double adjacent = std::acos(std::sqrt(5.0) / 3);
    const double cap_lat = kPi / 2 - center_to_vertex;
    const double band_lat = cap_lat - adjacent;

    const IcosahedronLayout layout = build_icosahedron_layout(0.3, 400, 346);
    REQUIRE(layout.size() == kIcosahedronFaces);
    std::map<long, int> lat_histogram;
    for (int f = 0; f < 20; ++f) {
      const TangentCamera& cam = layout[f];
      CHECK(cam.face_index == f);
      CHECK(cam.width_px == 400);
      CHECK(cam.height_px == 346);
      const double lat = cam.tangent_point.lat;
      const double expected = f < 5 ? cap_lat : f < 10 ? band_lat : f < 15 ? -band_lat : -cap_lat;
      CHECK(lat == doctest::Approx(expected).epsilon(1e-12));

      // The tangent point is the normalized centroid of the face.
      const auto v = icosahedron_face_vertices(f);
      const Vec3 centroid = (v[0] + v[1] + v[2]).normalized();
      CHECK((cam.forward - centroid).norm() < 1e-12);

      // Orthonormal, right-handed frame with up toward the north pole.
      CHECK(std::abs(cam.forward.dot(cam.up)) < 1e-12);
      CHECK(std::abs(cam.forward.dot(cam.right)) < 1e-12);
      CHECK((cam.up.cross(cam.forward) - cam.right).norm() < 1e-12);
      CHECK(cam.up.z > 0);

      // Exactly three neighbors at the adjacent-face angle.
      int neighbors = 0;
      for (int g = 0; g < 20; ++g)
        if (g != f && std::abs(std::acos(std::clamp(cam.forward.dot(layout[g].forward), -1.0, 1.0)) -
                               adjacent) < 1e-9)
          ++neighbors;
      CHECK(neighbors == 3);
    }
  }

  TEST_CASE("unpadded rectangles contain their own face") {
    const IcosahedronLayout tight = build_icosahedron_layout(0.0, 400, 346);
    std::mt19937_64 rng(5);
    for (int f = 0; f < 20; ++f) {
      const auto v = icosahedron_face_vertices(f);
      const TangentCamera& cam = tight[f];
      double max_x = 0, max_y = 0;
      for (const Vec3& vertex : v) {
        const PlanePoint p = gnomonic_forward(cam, vertex);
        max_x = std::max(max_x, std::abs(p.x));
        max_y = std::max(max_y, std::abs(p.y));
      }
      // Symmetric extents touch the farthest vertex on each axis.
      CHECK(cam.half_extent_x == doctest::Approx(max_x).epsilon(1e-12));
      CHECK(cam.half_extent_y == doctest::Approx(max_y).epsilon(1e-12));
      for (int i = 0; i < 200; ++i) {
        double a = testing::uniform(rng, 0, 1), b = testing::uniform(rng, 0, 1);
        if (a + b > 1) {
          a = 1 - a;
          b = 1 - b;
        }
        const Vec3 inside = (v[0] + a * (v[1] - v[0]) + b * (v[2] - v[0])).normalized();
        CHECK(footprint_contains(cam, inside));
      }
    }
  }

  TEST_CASE("padded footprints span more than the 72 degree face") {
    const IcosahedronLayout layout = build_icosahedron_layout(0.3, 400, 346);
    for (const TangentCamera& cam : layout.cameras) {
      const SphericalCoord left = gnomonic_inverse(cam, -cam.half_extent_x, 0);
      const SphericalCoord right = gnomonic_inverse(cam, cam.half_extent_x, 0);
      CHECK(rad_to_deg(angular_distance(left, right)) > 72);
    }
  }

  TEST_CASE("layout parameter validation") {
    CHECK_THROWS_AS(build_icosahedron_layout(-0.1, 400, 346), ParameterError);
    CHECK_THROWS_AS(build_icosahedron_layout(1.5, 400, 346), ParameterError);
    CHECK_THROWS_AS(build_icosahedron_layout(0.3, 1, 346), ParameterError);
  }

  TEST_CASE("pixel centers and plane coordinates agree") {
    const IcosahedronLayout layout = build_icosahedron_layout(0.3, 40, 34);
    const TangentCamera& cam = layout[7];
    for (int row = 0; row < cam.height_px; ++row) {
      for (int col = 0; col < cam.width_px; ++col) {
        const PlanePoint p = cam.pixel_center(col, row);
        CHECK(cam.contains(p.x, p.y));
        const PixelPoint back = cam.plane_to_pixel(p.x, p.y);
        CHECK(std::abs(back.u - col) < 1e-12);
        CHECK(std::abs(back.v - row) < 1e-12);
      }
    }
    // Row 0 is the top of the image.
    CHECK(cam.pixel_center(0, 0).y > 0);
    CHECK(cam.pixel_center(0, 0).x < 0);
  }

  TEST_CASE("coverage counts") {
    const IcosahedronLayout padded = build_icosahedron_layout(0.3, 400, 346);
    const std::vector<int> cov = coverage_map(padded, 512, 256);
    const auto [lo, hi] = std::minmax_element(cov.begin(), cov.end());
    CHECK(*lo >= 2);
    CHECK(*hi <= 5);

    const std::vector<int> tight = coverage_map(build_icosahedron_layout(0.0, 400, 346), 512, 256);
    CHECK(*std::min_element(tight.begin(), tight.end()) >= 1);

    // Each pixel is counted once per covering camera.
    const std::vector<Vec3> dirs = erp_directions(256, 128);
    const std::vector<int> small = coverage_map(padded, 256, 128);
    long total = 0, per_camera = 0;
    for (int c : small) total += c;
    for (const TangentCamera& cam : padded.cameras)
      for (const Vec3& d : dirs) {
        const PlanePoint p = gnomonic_forward(cam, d);
        if (p.valid && std::abs(p.x) <= cam.half_extent_x && std::abs(p.y) <= cam.half_extent_y)
          ++per_camera;
      }
    CHECK(total == per_camera);
  }
}
