#include "uavbs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace uavbs {

bool Building::footprint_contains(double x, double y) const {
  const Vec3 hi = max_corner();
  return x >= min_corner.x() && x <= hi.x() && y >= min_corner.y() && y <= hi.y();
}

void validate_building(const Building& b) {
  if (!(b.size.x() > 0.0 && b.size.y() > 0.0 && b.size.z() > 0.0)) {
    throw Error("building size must be positive in every dimension");
  }
  if (b.min_corner.z() != 0.0) {
    throw Error("building must stand on the ground plane (min z = 0)");
  }
}

bool BlockedRegion::contains(const Vec3& x) const {
  return std::all_of(halfspaces.begin(), halfspaces.end(),
                     [&](const HalfSpace& h) { return h.eval(x) <= 0.0; });
}

namespace {

HalfSpace plane_through(const Vec3& user, const Vec3& p, const Vec3& q,
                        const Vec3& inside) {
  Vec3 n = (q - user).cross(p - user);
  const double len = n.norm();
  if (!(len > 0.0)) throw Error("degenerate silhouette plane");
  n /= len;
  if (n.dot(inside - user) > 0.0) n = -n;
  return HalfSpace{n, n.dot(user)};
}

}  // namespace

BlockedRegion build_blocked_region(const Vec3& user, const Building& building,
                                   std::size_t user_index, std::size_t building_index) {
  validate_building(building);
  if (std::abs(user.z()) > 1e-9) {
    throw Error("user must lie on the ground plane");
  }
  const Vec3 lo = building.min_corner;
  const Vec3 hi = building.max_corner();
  const double h = building.height();
  if (building.footprint_contains(user.x(), user.y())) {
    const bool on_edge = user.x() == lo.x() || user.x() == hi.x() ||
                         user.y() == lo.y() || user.y() == hi.y();
    throw Error(on_edge ? "user on building footprint edge (tangent silhouette)"
                        : "user inside building footprint (degenerate shadow)");
  }

  // Visible flank faces: outward normal points toward the user.
  std::optional<double> face_x, face_y;
  if (user.x() < lo.x()) face_x = lo.x();
  if (user.x() > hi.x()) face_x = hi.x();
  if (user.y() < lo.y()) face_y = lo.y();
  if (user.y() > hi.y()) face_y = hi.y();

  // Top silhouette chain from one outer vertical edge to the other.
  std::vector<Vec3> chain;
  if (face_x && face_y) {
    const double far_y = (*face_y == lo.y()) ? hi.y() : lo.y();
    const double far_x = (*face_x == lo.x()) ? hi.x() : lo.x();
    chain = {Vec3(*face_x, far_y, h), Vec3(*face_x, *face_y, h), Vec3(far_x, *face_y, h)};
  } else if (face_x) {
    chain = {Vec3(*face_x, lo.y(), h), Vec3(*face_x, hi.y(), h)};
  } else {
    chain = {Vec3(lo.x(), *face_y, h), Vec3(hi.x(), *face_y, h)};
  }

  const Vec3 centroid = lo + 0.5 * building.size;
  auto ground = [](const Vec3& p) { return Vec3(p.x(), p.y(), 0.0); };

  BlockedRegion region;
  region.user_index = user_index;
  region.building_index = building_index;
  region.halfspaces.push_back(
      plane_through(user, chain.front(), ground(chain.front()), centroid));
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    region.halfspaces.push_back(plane_through(user, chain[i], chain[i + 1], centroid));
  }
  region.halfspaces.push_back(
      plane_through(user, chain.back(), ground(chain.back()), centroid));
  return region;
}

std::vector<BlockedRegion> build_user_regions(const Vec3& user, std::size_t user_index,
                                              std::span<const Building> buildings) {
  std::vector<BlockedRegion> out;
  out.reserve(buildings.size());
  for (std::size_t q = 0; q < buildings.size(); ++q) {
    out.push_back(build_blocked_region(user, buildings[q], user_index, q));
  }
  return out;
}

Clearance signed_clearance(const BlockedRegion& region, const Vec3& x, double tie_tol) {
  Clearance best{-std::numeric_limits<double>::infinity(), 0, false};
  for (std::size_t i = 0; i < region.halfspaces.size(); ++i) {
    const double v = region.halfspaces[i].eval(x);
    if (v > best.value) {
      best.value = v;
      best.halfspace = i;
    }
  }
  for (std::size_t i = 0; i < region.halfspaces.size(); ++i) {
    if (i != best.halfspace && region.halfspaces[i].eval(x) >= best.value - tie_tol) {
      best.tie = true;
      break;
    }
  }
  return best;
}

MinClearance min_clearance(std::span<const BlockedRegion> regions, const Vec3& x,
                           double tie_tol) {
  MinClearance out;
  if (regions.empty()) {
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  out.blocked_anywhere = true;
  out.value = std::numeric_limits<double>::infinity();
  std::vector<double> values(regions.size());
  for (std::size_t q = 0; q < regions.size(); ++q) {
    const Clearance c = signed_clearance(regions[q], x, tie_tol);
    values[q] = c.value;
    if (c.value < out.value) {
      out.value = c.value;
      out.region = q;
      out.halfspace = c.halfspace;
      out.tie = c.tie;
    }
  }
  for (std::size_t q = 0; q < regions.size(); ++q) {
    if (q != out.region && values[q] <= out.value + tie_tol) {
      out.tie = true;
      break;
    }
  }
  return out;
}

bool los_oracle(const Vec3& u, const Vec3& x, std::span<const Building> buildings) {
  const Vec3 d = x - u;
  for (const Building& b : buildings) {
    const Vec3 lo = b.min_corner;
    const Vec3 hi = b.max_corner();
    double t_enter = 0.0;
    double t_exit = 1.0;
    bool miss = false;
    for (int axis = 0; axis < 3 && !miss; ++axis) {
      if (d[axis] == 0.0) {
        if (!(u[axis] > lo[axis] && u[axis] < hi[axis])) miss = true;
        continue;
      }
      const double inv = 1.0 / d[axis];
      double t1 = (lo[axis] - u[axis]) * inv;
      double t2 = (hi[axis] - u[axis]) * inv;
      if (t1 > t2) std::swap(t1, t2);
      t_enter = std::max(t_enter, t1);
      t_exit = std::min(t_exit, t2);
      if (!(t_enter < t_exit)) miss = true;
    }
    if (!miss) return false;
  }
  return true;
}

std::optional<std::string> check_region(const BlockedRegion& region, const Vec3& user,
                                        double tol) {
  if (region.halfspaces.size() < 3 || region.halfspaces.size() > 4) {
    std::ostringstream os;
    os << "region (user " << region.user_index << ", building " << region.building_index
       << ") has " << region.halfspaces.size() << " halfspaces";
    return os.str();
  }
  for (std::size_t i = 0; i < region.halfspaces.size(); ++i) {
    const HalfSpace& h = region.halfspaces[i];
    std::ostringstream os;
    os << "region (user " << region.user_index << ", building " << region.building_index
       << ") halfspace " << i;
    if (std::abs(h.normal.norm() - 1.0) > 1e-12) {
      os << ": normal is not unit length";
      return os.str();
    }
    if (std::abs(h.eval(user)) > tol) {
      os << ": plane does not pass through the user";
      return os.str();
    }
  }
  return std::nullopt;
}

}  // namespace uavbs
