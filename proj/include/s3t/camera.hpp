#pragma once

// Pinhole camera model and the per-frame pixel displacement bound derived
// from it. Units: focal length and pixel size in mm, distances in m, image
// coordinates in pixels, time in s.

#include <optional>

#include "s3t/detstream.hpp"

namespace s3t {

struct CameraModel {
  double focal_mm = 0.0;
  double pixel_mm = 0.0;  // square pixels
  double principal_x = 0.0;
  double principal_y = 0.0;
  double epsilon_m = 0.0;  // radius of the inter-frame relative motion ball
  double z_min_m = 0.0;    // closest optical-axis distance over both frames
  double fps = 0.0;
  std::optional<double> v_max_mps;

  /// Throws std::invalid_argument naming the first violated field.
  void validate() const;

  /// Focal length in pixel units, f / s_m.
  double focal_px() const { return focal_mm / pixel_mm; }
};

/// (o_x, o_y) - (f/s_m) * (x/z, y/z). Throws std::domain_error when z == 0.
Point project(const CameraModel& cam, double x, double y, double z);

/// (f/s_m) * epsilon / z_min.
double delta_d(const CameraModel& cam);

/// Linear part of the motion radius: distance travelled in one frame interval.
double epsilon_from_speed(double v_max_mps, double fps);

/// Linear term plus an optional rotational contribution supplied by the user.
double epsilon_from_motion(double v_max_mps, double fps, double rotational_m = 0.0);

}  // namespace s3t
