#include "uavbs/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

namespace uavbs {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
  return a;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

Scenario load_with_overrides(const std::string& path, std::optional<std::uint64_t> seed,
                             std::optional<int> max_outer, std::optional<int> max_inner) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (seed) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(std::string("scenario: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error("scenario: top level must be an object");
    j["seed"] = *seed;
    text = j.dump();
  }
  Scenario sc = parse_scenario(text);
  if (max_outer) sc.algo.max_outer = *max_outer;
  if (max_inner) sc.algo.max_inner = *max_inner;
  return sc;
}

std::string result_json(const Scenario& sc, Scheme scheme, const RunReport& rep) {
  json j;
  j["format_version"] = kFormatVersion;
  j["scheme"] = to_string(scheme);
  j["status"] = rep.status;
  j["seed"] = sc.seed;
  j["counts"] = {{"k", sc.k}, {"m", sc.m}, {"n", sc.n}};
  j["min_rate"] = rep.min_rate;
  j["initial_min_rate"] = rep.initial_min_rate;
  j["bottleneck_user"] = rep.final_rates.bottleneck_user;
  j["rate_user"] = vec_json(rep.final_rates.rate_user);
  j["positions"] = matrix_json(rep.state.x);
  j["power"] = matrix_json(rep.state.p);
  json assoc = json::array();
  for (std::size_t k = 0; k < rep.state.users(); ++k) {
    for (std::size_t m = 0; m < rep.state.uavs(); ++m) {
      for (std::size_t n = 0; n < rep.state.subcarriers(); ++n) {
        if (rep.state.c(k, m, n) == 1.0) assoc.push_back({{"user", k}, {"uav", m}, {"subcarrier", n}});
      }
    }
  }
  j["association"] = assoc;
  j["outer_iterations"] = rep.outer_iterations;
  j["inner_iterations"] = rep.inner_iterations;
  j["z_before_rounding"] = rep.z_before_rounding;
  j["z_after_rounding"] = rep.z_after_rounding;
  j["violation_before_rounding"] = rep.violation_before_rounding;
  j["violations"] = rep.violations;
  return j.dump(2) + "\n";
}

std::string trace_ndjson(const std::vector<IterationTrace>& trace, bool timing) {
  std::string out;
  for (const IterationTrace& t : trace) {
    json j;
    j["format_version"] = kFormatVersion;
    j["outer"] = t.outer;
    j["inner"] = t.inner;
    j["z"] = t.z;
    j["z_start"] = t.z_start;
    j["z_mid"] = t.z_mid;
    j["min_rate"] = t.min_rate;
    j["max_violation"] = t.max_violation;
    j["gamma1"] = t.gamma1;
    j["gamma2"] = t.gamma2;
    j["slope1"] = t.slope1;
    j["slope2"] = t.slope2;
    j["bottleneck"] = t.bottleneck;
    j["solver1"] = t.solver1;
    j["solver2"] = t.solver2;
    if (timing) j["wall_ms"] = t.wall_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<std::string> geometry_self_check(
    const Scenario& sc, const std::vector<std::vector<BlockedRegion>>& regions,
    std::uint64_t seed, int samples) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < regions.size(); ++k) {
    for (const BlockedRegion& r : regions[k]) {
      if (auto msg = check_region(r, sc.users[k])) {
        out.push_back("user " + std::to_string(k) + ", building " +
                      std::to_string(r.building_index) + ": " + *msg);
      }
    }
  }
  if (sc.users.empty()) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, sc.users.size() - 1);
  std::uniform_real_distribution<double> ux(0.0, sc.x_d), uy(0.0, sc.y_d),
      uz(sc.h_min, sc.h_min + 500.0);
  int mismatches = 0;
  for (int i = 0; i < samples; ++i) {
    const std::size_t k = pick(rng);
    const Vec3 x(ux(rng), uy(rng), uz(rng));
    const Vec3& u = sc.users[k];
    const MinClearance mc = min_clearance(regions[k], x);
    const bool los_poly = !mc.blocked_anywhere || mc.value > 0.0;
    if (mc.blocked_anywhere && std::abs(mc.value) / (x - u).norm() < 1e-9) continue;
    if (los_poly != los_oracle(u, x, sc.buildings)) ++mismatches;
  }
  if (mismatches > 0) {
    out.push_back(std::to_string(mismatches) + " of " + std::to_string(samples) +
                  " sampled links disagree with the segment oracle");
  }
  return out;
}

int cmd_validate(const std::string& scenario_path, std::ostream& out, std::ostream& err) {
  Scenario sc;
  try {
    sc = load_scenario(scenario_path);
  } catch (const Error& e) {
    err << "invalid: " << e.what() << "\n";
    return kExitInvalid;
  }
  std::vector<std::string> problems = validate(sc);
  if (problems.empty()) {
    try {
      std::vector<std::vector<BlockedRegion>> regions;
      for (std::size_t k = 0; k < sc.users.size(); ++k) {
        regions.push_back(build_user_regions(sc.users[k], k, sc.buildings));
      }
      problems = geometry_self_check(sc, regions, sc.seed);
    } catch (const Error& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) {
    for (const auto& p : problems) err << "invalid: " << p << "\n";
    return kExitInvalid;
  }
  out << "ok: " << sc.users.size() << " users, " << sc.m << " UAVs, " << sc.n
      << " subcarriers, " << sc.buildings.size() << " buildings\n";
  return kExitOk;
}

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  Scenario sc;
  Scheme scheme;
  try {
    scheme = parse_scheme(args.scheme);
    sc = load_with_overrides(args.scenario_path, args.seed, args.max_outer, args.max_inner);
  } catch (const Error& e) {
    err << "invalid: " << e.what() << "\n";
    return kExitInvalid;
  }
  const auto problems = validate(sc);
  if (!problems.empty()) {
    for (const auto& p : problems) err << "invalid: " << p << "\n";
    return kExitInvalid;
  }
  try {
    const RunReport rep = run_scheme(sc, scheme);
    const fs::path dir(args.out_dir);
    fs::create_directories(dir);
    write_file(dir / "result.json", result_json(sc, scheme, rep));
    if (args.trace) write_file(dir / "trace.ndjson", trace_ndjson(rep.trace, args.timing));
    out << "min_rate " << format_double(rep.min_rate) << "\n";
    if (rep.status != "converged") {
      err << "warning: outer loop did not reach the violation threshold\n";
      return kExitNotConverged;
    }
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
  Scenario base;
  std::vector<Scheme> schemes;
  try {
    if (args.values.empty()) throw Error("sweep needs at least one value");
    for (int v : args.values) {
      if (v <= 0) throw Error("sweep values must be positive");
    }
    if (args.realizations < 1) throw Error("realizations must be at least 1");
    if (args.axis != "users" && args.axis != "uavs" && args.axis != "subcarriers") {
      throw Error("axis must be users, uavs or subcarriers");
    }
    for (const auto& s : args.schemes) schemes.push_back(parse_scheme(s));
    if (schemes.empty()) schemes = all_schemes();
    base = load_with_overrides(args.scenario_path, args.seed, args.max_outer, args.max_inner);
  } catch (const Error& e) {
    err << "invalid: " << e.what() << "\n";
    return kExitInvalid;
  }

  std::ostringstream csv, runs;
  csv << "axis_value,scheme,mean_min_rate,stderr,runs_ok,runs_failed,format_version\n";
  runs << "axis_value,realization,scheme,min_rate,status,format_version\n";
  for (int v : args.values) {
    Scenario sc = base;
    const auto value = static_cast<std::size_t>(v);
    if (args.axis == "users") sc.k = value;
    if (args.axis == "uavs") sc.m = value;
    if (args.axis == "subcarriers") sc.n = value;
    const MonteCarloResult mc =
        monte_carlo(sc, static_cast<std::size_t>(args.realizations), schemes, args.jobs);
    for (const SchemeSummary& s : mc.summary) {
      csv << v << ',' << to_string(s.scheme) << ',' << format_double(s.mean_min_rate) << ','
          << format_double(s.stderr_min_rate) << ',' << s.runs_ok << ',' << s.runs_failed << ','
          << kFormatVersion << '\n';
    }
    for (std::size_t r = 0; r < mc.min_rate.size(); ++r) {
      for (std::size_t s = 0; s < schemes.size(); ++s) {
        runs << v << ',' << r << ',' << to_string(schemes[s]) << ','
             << format_double(mc.min_rate[r][s]) << ',' << mc.status[r][s] << ','
             << kFormatVersion << '\n';
      }
    }
    out << args.axis << '=' << v << " done\n";
  }
  try {
    const fs::path dir(args.out_dir);
    fs::create_directories(dir);
    write_file(dir / "sweep.csv", csv.str());
    write_file(dir / "sweep_runs.csv", runs.str());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Joint UAV positioning and resource allocation under building blockage"};
  app.require_subcommand(1);

  RunArgs run_args;
  std::uint64_t run_seed = 0;
  int run_outer = 0, run_inner = 0;
  auto* run = app.add_subcommand("run", "Optimise one scenario and write result.json");
  run->add_option("scenario", run_args.scenario_path, "Scenario JSON file")->required();
  run->add_option("--scheme", run_args.scheme,
                  "proposed | fixed-association | kmeans-position | no-geoinfo");
  auto* run_seed_opt = run->add_option("--seed", run_seed, "Override the scenario seed");
  auto* run_outer_opt = run->add_option("--max-outer", run_outer, "Outer iteration cap");
  auto* run_inner_opt = run->add_option("--max-inner", run_inner, "Inner iteration cap");
  run->add_option("--out", run_args.out_dir, "Output directory");
  run->add_flag("--trace", run_args.trace, "Write trace.ndjson");
  run->add_flag("--timing", run_args.timing, "Include wall-clock times in the trace");

  SweepArgs sweep_args;
  std::uint64_t sweep_seed = 0;
  int sweep_outer = 0, sweep_inner = 0;
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo sweep over K, M or N");
  sweep->add_option("scenario", sweep_args.scenario_path, "Base scenario JSON file")->required();
  sweep->add_option("--axis", sweep_args.axis, "users | uavs | subcarriers")
      ->check(CLI::IsMember({"users", "uavs", "subcarriers"}));
  sweep->add_option("--values", sweep_args.values, "Axis values")->delimiter(',')->required();
  sweep->add_option("--realizations", sweep_args.realizations, "User placements per value");
  sweep->add_option("--schemes", sweep_args.schemes, "Schemes to compare (default: all)")
      ->delimiter(',');
  auto* sweep_seed_opt = sweep->add_option("--seed", sweep_seed, "Base seed");
  auto* sweep_outer_opt = sweep->add_option("--max-outer", sweep_outer, "Outer iteration cap");
  auto* sweep_inner_opt = sweep->add_option("--max-inner", sweep_inner, "Inner iteration cap");
  sweep->add_option("--out", sweep_args.out_dir, "Output directory");
  sweep->add_option("--jobs", sweep_args.jobs, "Parallel realizations")
      ->check(CLI::PositiveNumber);

  std::string validate_path;
  auto* val = app.add_subcommand("validate", "Check a scenario and its shadow geometry");
  val->add_option("scenario", validate_path, "Scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  if (run->parsed()) {
    if (*run_seed_opt) run_args.seed = run_seed;
    if (*run_outer_opt) run_args.max_outer = run_outer;
    if (*run_inner_opt) run_args.max_inner = run_inner;
    return cmd_run(run_args, std::cout, std::cerr);
  }
  if (sweep->parsed()) {
    if (*sweep_seed_opt) sweep_args.seed = sweep_seed;
    if (*sweep_outer_opt) sweep_args.max_outer = sweep_outer;
    if (*sweep_inner_opt) sweep_args.max_inner = sweep_inner;
    return cmd_sweep(sweep_args, std::cout, std::cerr);
  }
  return cmd_validate(validate_path, std::cout, std::cerr);
}

}  // namespace uavbs
