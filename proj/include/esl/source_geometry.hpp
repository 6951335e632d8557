#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string_view>
#include <vector>

namespace esl {

using Vec3 = Eigen::Vector3d;

/// Rectangular mass source. Edges are given along the body axes, which
/// coincide with the lab axes at rotation angle zero.
struct SourceSpec {
  Vec3 edges{0.0, 0.0, 0.0};   // m
  Vec3 offset{0.0, 0.0, 0.0};  // box centre relative to pivot, body frame, m
  double mass = 0.0;           // kg
  double nucleons = 0.0;

  void validate() const;
  double volume() const { return edges.prod(); }
  double nucleon_density() const { return nucleons / volume(); }
};

enum class Direction { cw, ccw };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

struct RotationSpec {
  Vec3 pivot{0.0, 0.0, 0.0};   // lab frame, origin at the vapor-cell centre, m
  Vec3 normal{0.0, 1.0, 0.0};  // unit normal of the rotation plane
  double frequency = 1.0;      // Hz
  Direction direction = Direction::cw;
  double initial_phase = 0.0;  // rad

  void validate() const;
  /// Signed dθ/dt (rad/s); positive for CW.
  double angular_velocity() const;
  RotationSpec reversed() const;
};

struct Voxel {
  Vec3 position;  // body frame, relative to the box centre
  double nucleons = 0.0;
};

struct VoxelCloud {
  std::vector<Voxel> voxels;
  double resolution = 0.0;  // m

  double total_nucleons() const;
  std::size_t size() const { return voxels.size(); }
};

struct Pose {
  double time = 0.0;
  double angle = 0.0;
  std::vector<Vec3> positions;   // lab frame
  std::vector<Vec3> velocities;  // lab frame, m/s
};

/// Regular axis-aligned grid of cells of edge `resolution`, symmetric about
/// the box centre. When an edge is not a multiple of the resolution the two
/// outermost cells on that axis are clipped equally, so the grid keeps the
/// box's point symmetry and the nucleon total is conserved.
VoxelCloud build_voxel_cloud(const SourceSpec& spec, double resolution);

/// θ(t) = phase₀ ± 2πνt, '+' for CW.
double rotation_angle(const RotationSpec& rotation, double t);

Pose pose_at(const VoxelCloud& cloud, const SourceSpec& spec,
             const RotationSpec& rotation, double t);

}  // namespace esl
