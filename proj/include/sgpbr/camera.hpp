#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "sgpbr/math.hpp"

namespace sgpbr {

struct Ray {
  Vec3d origin{};
  Vec3d direction{0.0, 0.0, 1.0};
  double near = 0.0;
  double far = 1e30;

  Vec3d at(double t) const { return origin + direction * t; }
};

/// Pinhole camera, or orthographic when `ortho_half_height` > 0.
struct Camera {
  Vec3d position{0.0, -3.0, 0.0};
  Vec3d target{};
  Vec3d up{0.0, 0.0, 1.0};
  double fov_y = 40.0 * kPi / 180.0;
  double ortho_half_height = 0.0;
  int width = 64;
  int height = 64;

  bool orthographic() const { return ortho_half_height > 0.0; }
  Vec3d forward() const { return normalize(target - position); }
  Vec3d right() const { return normalize(cross(forward(), up)); }
  Vec3d true_up() const { return cross(right(), forward()); }

  friend bool operator==(const Camera&, const Camera&) = default;
};

inline void validate(const Camera& c) {
  if (c.width <= 0 || c.height <= 0) {
    throw InputError("camera resolution must be positive");
  }
  const Vec3d f = c.target - c.position;
  if (length(f) <= 0.0) throw InputError("camera target equals position");
  if (length(cross(normalize(f), normalize(c.up))) < 1e-9) {
    throw InputError("camera up vector is parallel to the view direction");
  }
  if (!c.orthographic() && !(c.fov_y > 0.0 && c.fov_y < kPi)) {
    throw InputError("camera field of view must lie in (0, pi)");
  }
}

/// Offset of a ray sample from the pixel center, each component in
/// [-0.5, 0.5).
struct PixelJitter {
  double dx = 0.0;
  double dy = 0.0;
};

/// Ray through pixel (column i, row j) counted from the top-left corner.
inline Ray generate_ray(const Camera& cam, int i, int j, PixelJitter jitter = {}) {
  const double sx = (i + 0.5 + jitter.dx) / cam.width;
  const double sy = (j + 0.5 + jitter.dy) / cam.height;
  const double ndc_x = 2.0 * sx - 1.0;
  const double ndc_y = 1.0 - 2.0 * sy;
  const double aspect = static_cast<double>(cam.width) / cam.height;
  const Vec3d f = cam.forward();
  const Vec3d r = cam.right();
  const Vec3d u = cross(r, f);
  Ray ray;
  if (cam.orthographic()) {
    const double h = cam.ortho_half_height;
    ray.origin = cam.position + r * (ndc_x * h * aspect) + u * (ndc_y * h);
    ray.direction = f;
  } else {
    const double t = std::tan(0.5 * cam.fov_y);
    ray.origin = cam.position;
    ray.direction = normalize(f + r * (ndc_x * t * aspect) + u * (ndc_y * t));
  }
  return ray;
}

inline constexpr std::array<const char*, 6> kCanonicalViewNames = {
    "front", "back", "left", "right", "front_right", "front_left"};
inline constexpr std::array<double, 6> kCanonicalAzimuthsDeg = {0.0,   180.0, 90.0,
                                                                270.0, 315.0, 45.0};

/// Camera on a circle about the z axis. Azimuth 0 is the front camera at -y;
/// positive azimuth turns toward +x.
inline Camera orbit_camera(double distance, double azimuth_deg,
                           double elevation_deg, int resolution,
                           double fov_y = 40.0 * kPi / 180.0,
                           double ortho_half_height = 0.0) {
  const double az = azimuth_deg * kPi / 180.0;
  const double el = elevation_deg * kPi / 180.0;
  Camera c;
  c.position = Vec3d{std::sin(az) * std::cos(el), -std::cos(az) * std::cos(el),
                     std::sin(el)} *
               distance;
  c.target = Vec3d{};
  c.up = Vec3d{0.0, 0.0, 1.0};
  c.fov_y = fov_y;
  c.ortho_half_height = ortho_half_height;
  c.width = resolution;
  c.height = resolution;
  return c;
}

/// Front, back, left, right, front-right and front-left cameras at elevation
/// 0, all looking at the origin.
inline std::vector<Camera> canonical_six_views(double distance, int resolution,
                                               double fov_y = 40.0 * kPi / 180.0,
                                               double ortho_half_height = 0.0) {
  if (!(distance > 0.0)) throw InputError("camera distance must be positive");
  if (resolution <= 0) throw InputError("resolution must be positive");
  std::vector<Camera> cams;
  for (double az : kCanonicalAzimuthsDeg) {
    cams.push_back(
        orbit_camera(distance, az, 0.0, resolution, fov_y, ortho_half_height));
  }
  return cams;
}

}  // namespace sgpbr
