#pragma once

// Command-line front end: `run`, `sweep` and `validate`.
//
// Exit codes: 0 success, 1 unexpected failure, 2 invalid input, 3 the run
// finished without meeting the outer-loop threshold (results still written).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "uavbs/geometry.hpp"
#include "uavbs/pdlio.hpp"
#include "uavbs/scenario.hpp"

namespace uavbs {

inline constexpr int kFormatVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitInvalid = 2, kExitNotConverged = 3 };

struct RunArgs {
  std::string scenario_path;
  std::string scheme = "proposed";
  std::optional<std::uint64_t> seed;
  std::optional<int> max_outer;
  std::optional<int> max_inner;
  std::string out_dir = ".";
  bool trace = false;
  bool timing = false;
};

struct SweepArgs {
  std::string scenario_path;
  std::string axis = "users";  // users | uavs | subcarriers
  std::vector<int> values;
  int realizations = 20;
  std::vector<std::string> schemes;  // empty: all
  std::optional<std::uint64_t> seed;
  std::optional<int> max_outer;
  std::optional<int> max_inner;
  std::string out_dir = ".";
  unsigned jobs = 1;
};

/// Loads a scenario, applying command-line overrides; `seed` is applied
/// before random user placement.
Scenario load_with_overrides(const std::string& path, std::optional<std::uint64_t> seed,
                             std::optional<int> max_outer, std::optional<int> max_inner);

std::string result_json(const Scenario& sc, Scheme scheme, const RunReport& rep);
std::string trace_ndjson(const std::vector<IterationTrace>& trace, bool timing);

/// Region invariants plus agreement between the polyhedral classification
/// and the segment oracle at `samples` random (user, point) pairs.
std::vector<std::string> geometry_self_check(
    const Scenario& sc, const std::vector<std::vector<BlockedRegion>>& regions,
    std::uint64_t seed, int samples = 200);

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);
int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err);
int cmd_validate(const std::string& scenario_path, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace uavbs
