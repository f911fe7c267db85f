#include "s3t/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace s3t {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void CameraModel::validate() const {
  require(std::isfinite(focal_mm) && focal_mm > 0.0, "focal length must be > 0");
  require(std::isfinite(pixel_mm) && pixel_mm > 0.0, "pixel size must be > 0");
  require(std::isfinite(principal_x) && std::isfinite(principal_y),
          "principal point must be finite");
  require(std::isfinite(epsilon_m) && epsilon_m >= 0.0, "epsilon must be >= 0");
  require(std::isfinite(z_min_m) && z_min_m > 0.0, "z_min must be > 0");
  if (fps != 0.0 || v_max_mps) require(std::isfinite(fps) && fps > 0.0, "fps must be > 0");
  if (v_max_mps) require(std::isfinite(*v_max_mps) && *v_max_mps >= 0.0, "v_max must be >= 0");
}

Point project(const CameraModel& cam, double x, double y, double z) {
  if (z == 0.0) throw std::domain_error("projection is singular at z = 0");
  const double scale = cam.focal_px();
  return {cam.principal_x - scale * (x / z), cam.principal_y - scale * (y / z)};
}

double delta_d(const CameraModel& cam) {
  cam.validate();
  return cam.focal_px() * cam.epsilon_m / cam.z_min_m;
}

double epsilon_from_speed(double v_max_mps, double fps) {
  require(v_max_mps >= 0.0, "v_max must be >= 0");
  require(fps > 0.0, "fps must be > 0");
  return v_max_mps / fps;
}

double epsilon_from_motion(double v_max_mps, double fps, double rotational_m) {
  require(rotational_m >= 0.0, "rotational term must be >= 0");
  return epsilon_from_speed(v_max_mps, fps) + rotational_m;
}

}  // namespace s3t
