#pragma once

// Blocked-region polyhedra for ground users behind box-shaped buildings, and
// an exact segment/box line-of-sight test used as ground truth.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "uavbs/types.hpp"

namespace uavbs {

/// Axis-aligned box standing on the ground plane.
struct Building {
  Vec3 min_corner = Vec3::Zero();
  Vec3 size = Vec3::Ones();

  Vec3 max_corner() const { return min_corner + size; }
  double height() const { return size.z(); }
  /// Closed footprint test in the horizontal plane.
  bool footprint_contains(double x, double y) const;
};

/// Throws Error unless sizes are positive and the box stands at z = 0.
void validate_building(const Building& b);

/// { x : normal . x - offset <= 0 }
struct HalfSpace {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  double eval(const Vec3& x) const { return normal.dot(x) - offset; }
};

/// Shadow cone of one building as seen from one ground user. Every boundary
/// plane passes through the user.
struct BlockedRegion {
  std::vector<HalfSpace> halfspaces;
  std::size_t user_index = 0;
  std::size_t building_index = 0;

  bool contains(const Vec3& x) const;
};

BlockedRegion build_blocked_region(const Vec3& user, const Building& building,
                                   std::size_t user_index = 0,
                                   std::size_t building_index = 0);

/// All regions of one user, in building order.
std::vector<BlockedRegion> build_user_regions(const Vec3& user, std::size_t user_index,
                                              std::span<const Building> buildings);

struct Clearance {
  double value = 0.0;
  std::size_t halfspace = 0;
  /// True when another halfspace attains the max within `tie_tol`.
  bool tie = false;
};

/// max_i (a_i . x - b_i) with the lowest index winning ties.
Clearance signed_clearance(const BlockedRegion& region, const Vec3& x,
                           double tie_tol = 0.0);

struct MinClearance {
  /// False when the region list is empty: LoS everywhere.
  bool blocked_anywhere = false;
  double value = 0.0;
  std::size_t region = 0;
  std::size_t halfspace = 0;
  bool tie = false;

  const HalfSpace& active(std::span<const BlockedRegion> regions) const {
    return regions[region].halfspaces[halfspace];
  }
};

/// min_q d_q(x) over a user's regions, lowest building index on ties.
MinClearance min_clearance(std::span<const BlockedRegion> regions, const Vec3& x,
                           double tie_tol = 0.0);

/// True iff the open segment (u, x) misses every building interior.
bool los_oracle(const Vec3& u, const Vec3& x, std::span<const Building> buildings);

/// Checks unit normals and plane incidence at the user. Returns a description
/// of the first violation, or nothing.
std::optional<std::string> check_region(const BlockedRegion& region, const Vec3& user,
                                        double tol = 1e-9);

}  // namespace uavbs
