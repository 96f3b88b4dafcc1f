#pragma once

// Scenario description and loading, the initial deployment heuristic, the
// comparison schemes, and the Monte-Carlo harness.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "uavbs/channel.hpp"
#include "uavbs/geometry.hpp"
#include "uavbs/netmodel.hpp"
#include "uavbs/pdlio.hpp"

namespace uavbs {

struct Scenario {
  double x_d = 1500.0;
  double y_d = 1500.0;
  double h_min = 100.0;
  double h_max = 3000.0;
  std::vector<Building> buildings;
  std::vector<Vec3> users;
  std::size_t k = 8;
  std::size_t m = 4;
  std::size_t n = 4;
  ChannelParams channel;
  double p_max = 1.0;  // watts
  double d_min = 25.0;
  AlgoParams algo;
  std::uint64_t seed = 1;

  Limits limits() const { return {x_d, y_d, h_min, p_max, d_min, h_max}; }
};

/// Altitude of freshly deployed UAVs before clamping to h_min.
inline constexpr double kDeployAltitude = 500.0;

/// Parses scenario JSON. Missing fields take the default parameter set; when
/// `users` is absent, `user_count` users are placed at random from `seed`.
/// Throws Error on malformed input (not on scenario invariants; see validate).
Scenario parse_scenario(std::string_view json_text);
Scenario load_scenario(const std::string& path);

/// Empty when the scenario is usable.
std::vector<std::string> validate(const Scenario& sc);

/// Uniform ground positions inside the area and outside every footprint.
/// Throws Error after 10^4 rejected draws for a single user.
std::vector<Vec3> random_users(std::size_t count, double x_d, double y_d,
                               const std::vector<Building>& buildings, std::mt19937_64& rng);

/// Non-overlapping boxes with heights in [h_lo, h_hi] inside the area.
std::vector<Building> synthetic_city(std::size_t count, double x_d, double y_d, double h_lo,
                                     double h_hi, std::uint64_t seed);

/// Raises UAVs by d_min steps until every pair is at least d_min apart.
void stagger_altitudes(Eigen::MatrixX3d& x, double d_min);

/// Deployment heuristic: UAVs above corner-nearest users (or at `positions`
/// when given), greedy association by channel gain, equal power split.
SolutionState initial_state(const Scenario& sc, const ChannelModel& model,
                            const std::optional<Eigen::MatrixX3d>& positions = std::nullopt);

/// Lloyd clustering of the horizontal user positions with farthest-point
/// seeding; UAVs sit above the centroids at `altitude`.
Eigen::MatrixX3d kmeans_positions(const std::vector<Vec3>& users, std::size_t m,
                                  std::uint64_t seed, double altitude);

enum class Scheme { proposed, fixed_association, kmeans_position, no_geoinfo };

const char* to_string(Scheme s);
Scheme parse_scheme(std::string_view name);
std::vector<Scheme> all_schemes();

RunReport run_scheme(const Scenario& sc, Scheme scheme, const Hooks& hooks = {});

struct SchemeSummary {
  Scheme scheme = Scheme::proposed;
  double mean_min_rate = 0.0;
  double stderr_min_rate = 0.0;
  int runs_ok = 0;
  int runs_failed = 0;
};

struct MonteCarloResult {
  std::vector<Scheme> schemes;
  /// min_rate[r][s]; NaN marks a failed run.
  std::vector<std::vector<double>> min_rate;
  std::vector<std::vector<std::string>> status;
  std::vector<SchemeSummary> summary;
};

/// Seed of realization r derived from a base seed.
std::uint64_t realization_seed(std::uint64_t base, std::size_t r);

/// The template with its users re-placed from realization_seed(tmpl.seed, r).
Scenario realization(const Scenario& tmpl, std::size_t r);

/// Re-places the template's users for each realization and runs every
/// scheme on it. Results are independent of `jobs`.
MonteCarloResult monte_carlo(const Scenario& tmpl, std::size_t realizations,
                             const std::vector<Scheme>& schemes, unsigned jobs = 1);

}  // namespace uavbs
