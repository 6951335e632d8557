#include "esl/source_geometry.hpp"

#include "esl/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <string>

namespace esl {

namespace {

struct Cell1D {
  double centre;
  double width;
};

// Cells of width `h` centred on zero covering [-L/2, L/2]; any remainder is
// split into two equal clipped cells at the ends.
std::vector<Cell1D> axis_cells(double length, double h) {
  const double ratio = length / h;
  auto full = static_cast<long>(std::floor(ratio + 1e-9));
  double rem = length - static_cast<double>(full) * h;
  if (rem < 1e-9 * length) rem = 0.0;

  std::vector<Cell1D> cells;
  cells.reserve(static_cast<std::size_t>(full) + 2);
  const double inner_start = -0.5 * static_cast<double>(full) * h;
  if (rem > 0.0) cells.push_back({inner_start - 0.25 * rem, 0.5 * rem});
  for (long i = 0; i < full; ++i)
    cells.push_back({inner_start + (static_cast<double>(i) + 0.5) * h, h});
  if (rem > 0.0) cells.push_back({-inner_start + 0.25 * rem, 0.5 * rem});
  return cells;
}

}  // namespace

void SourceSpec::validate() const {
  if (!(edges.minCoeff() > 0.0))
    throw Error(ErrorKind::configuration, "source edges must be positive");
  if (!(mass > 0.0))
    throw Error(ErrorKind::configuration, "source mass must be positive");
  if (!(nucleons > 0.0))
    throw Error(ErrorKind::configuration, "source nucleon count must be positive");
}

std::string_view to_string(Direction d) { return d == Direction::cw ? "cw" : "ccw"; }

Direction direction_from_string(std::string_view s) {
  if (s == "cw") return Direction::cw;
  if (s == "ccw") return Direction::ccw;
  throw Error(ErrorKind::configuration,
              "direction must be 'cw' or 'ccw', got '" + std::string(s) + "'");
}

void RotationSpec::validate() const {
  if (std::abs(normal.norm() - 1.0) > 1e-12)
    throw Error(ErrorKind::configuration, "rotation normal must be a unit vector");
  if (!(frequency > 0.0))
    throw Error(ErrorKind::configuration, "rotation frequency must be positive");
}

double RotationSpec::angular_velocity() const {
  const double w = 2.0 * std::numbers::pi * frequency;
  return direction == Direction::cw ? w : -w;
}

RotationSpec RotationSpec::reversed() const {
  RotationSpec r = *this;
  r.direction = direction == Direction::cw ? Direction::ccw : Direction::cw;
  return r;
}

double VoxelCloud::total_nucleons() const {
  double sum = 0.0;
  for (const auto& v : voxels) sum += v.nucleons;
  return sum;
}

VoxelCloud build_voxel_cloud(const SourceSpec& spec, double resolution) {
  spec.validate();
  if (!(resolution > 0.0) || resolution > spec.edges.minCoeff() * (1.0 + 1e-12))
    throw Error(ErrorKind::invalid_resolution,
                "resolution must be positive and no larger than the smallest box edge");

  const auto cx = axis_cells(spec.edges.x(), resolution);
  const auto cy = axis_cells(spec.edges.y(), resolution);
  const auto cz = axis_cells(spec.edges.z(), resolution);
  const double density = spec.nucleon_density();

  VoxelCloud cloud;
  cloud.resolution = resolution;
  cloud.voxels.reserve(cx.size() * cy.size() * cz.size());
  double total = 0.0;
  for (const auto& a : cx)
    for (const auto& b : cy)
      for (const auto& c : cz) {
        const double n = density * a.width * b.width * c.width;
        cloud.voxels.push_back({Vec3(a.centre, b.centre, c.centre), n});
        total += n;
      }
  // Remove the rounding residue of the per-cell products.
  const double scale = spec.nucleons / total;
  for (auto& v : cloud.voxels) v.nucleons *= scale;
  return cloud;
}

double rotation_angle(const RotationSpec& rotation, double t) {
  return rotation.initial_phase + rotation.angular_velocity() * t;
}

Pose pose_at(const VoxelCloud& cloud, const SourceSpec& spec,
             const RotationSpec& rotation, double t) {
  Pose pose;
  pose.time = t;
  pose.angle = rotation_angle(rotation, t);
  const Eigen::Matrix3d rot =
      Eigen::AngleAxisd(pose.angle, rotation.normal).toRotationMatrix();
  const Vec3 omega = rotation.angular_velocity() * rotation.normal;

  pose.positions.reserve(cloud.size());
  pose.velocities.reserve(cloud.size());
  for (const auto& v : cloud.voxels) {
    const Vec3 arm = rot * (spec.offset + v.position);
    pose.positions.push_back(rotation.pivot + arm);
    pose.velocities.push_back(omega.cross(arm));
  }
  return pose;
}

}  // namespace esl
