#include "uavbs/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace uavbs {

namespace {

using nlohmann::json;

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(std::string("scenario: ") + what + " must be a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double horizontal_dist2(const Vec3& a, double x, double y) {
  return (a.x() - x) * (a.x() - x) + (a.y() - y) * (a.y() - y);
}

}  // namespace

Scenario parse_scenario(std::string_view json_text) {
  Scenario sc;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw Error("scenario: top level must be an object");
    if (j.contains("area")) {
      read(j["area"], "x_d", sc.x_d);
      read(j["area"], "y_d", sc.y_d);
    }
    read(j, "h_min", sc.h_min);
    read(j, "h_max", sc.h_max);
    read(j, "d_min", sc.d_min);
    read(j, "seed", sc.seed);

    if (j.contains("buildings")) {
      for (const json& b : j["buildings"]) {
        Building bld;
        bld.min_corner = vec3_from(b.at("min"), "building min");
        bld.size = vec3_from(b.at("size"), "building size");
        sc.buildings.push_back(bld);
      }
    }
    if (j.contains("synthetic_city")) {
      const json& city = j["synthetic_city"];
      std::size_t count = 60;
      double h_lo = 10.0, h_hi = 96.0;
      std::uint64_t city_seed = sc.seed;
      read(city, "count", count);
      read(city, "height_min", h_lo);
      read(city, "height_max", h_hi);
      read(city, "seed", city_seed);
      const auto extra = synthetic_city(count, sc.x_d, sc.y_d, h_lo, h_hi, city_seed);
      sc.buildings.insert(sc.buildings.end(), extra.begin(), extra.end());
    }

    std::optional<std::size_t> k_count;
    if (j.contains("counts")) {
      const json& c = j["counts"];
      if (c.contains("k")) k_count = c["k"].get<std::size_t>();
      read(c, "m", sc.m);
      read(c, "n", sc.n);
    }
    if (j.contains("user_count")) {
      const auto uc = j["user_count"].get<std::size_t>();
      if (k_count && *k_count != uc) throw Error("scenario: user_count disagrees with counts.k");
      k_count = uc;
    }
    if (j.contains("users")) {
      for (const json& u : j["users"]) sc.users.push_back(vec3_from(u, "user"));
      sc.k = k_count.value_or(sc.users.size());
    } else {
      sc.k = k_count.value_or(sc.k);
      std::mt19937_64 rng(sc.seed);
      sc.users = random_users(sc.k, sc.x_d, sc.y_d, sc.buildings, rng);
    }

    if (j.contains("channel")) {
      const json& c = j["channel"];
      read(c, "alpha_los", sc.channel.alpha_los);
      read(c, "alpha_nlos", sc.channel.alpha_nlos);
      read(c, "eta", sc.channel.eta);
      if (c.contains("beta_los_db")) sc.channel.beta_los = db_to_linear(c["beta_los_db"].get<double>());
      if (c.contains("beta_nlos_db")) {
        sc.channel.beta_nlos = db_to_linear(c["beta_nlos_db"].get<double>());
      }
      if (c.contains("noise_dbm")) sc.channel.noise_power = dbm_to_watts(c["noise_dbm"].get<double>());
    }
    if (j.contains("power") && j["power"].contains("p_max_dbm")) {
      sc.p_max = dbm_to_watts(j["power"]["p_max_dbm"].get<double>());
    }
    if (j.contains("algo")) {
      const json& a = j["algo"];
      read(a, "zeta", sc.algo.zeta);
      read(a, "tau", sc.algo.tau);
      read(a, "eps_inner", sc.algo.eps_inner);
      read(a, "eps_outer", sc.algo.eps_outer);
      read(a, "lambda0", sc.algo.lambda0);
      read(a, "mu0", sc.algo.mu0);
      read(a, "max_inner", sc.algo.max_inner);
      read(a, "max_outer", sc.algo.max_outer);
    }
  } catch (const json::exception& e) {
    throw Error(std::string("scenario: malformed JSON: ") + e.what());
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("scenario: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::vector<std::string> validate(const Scenario& sc) {
  std::vector<std::string> out;
  auto fail = [&](std::string msg) { out.push_back(std::move(msg)); };
  auto num = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };

  if (!(sc.x_d > 0.0 && sc.y_d > 0.0)) fail("area dimensions must be positive");
  if (!(sc.h_min >= 1.0)) fail("h_min must be at least 1 m");
  if (sc.k < 1 || sc.m < 1 || sc.n < 1) fail("counts k, m, n must be positive");
  const double deploy_top = std::max(kDeployAltitude, sc.h_min) +
                            static_cast<double>(sc.m > 0 ? sc.m - 1 : 0) * sc.d_min;
  if (!(sc.h_max >= deploy_top)) {
    fail("h_max = " + num(sc.h_max) + " leaves no room for the initial deployment (needs " +
         num(deploy_top) + " m)");
  }
  if (sc.k > sc.m * sc.n) {
    fail("infeasible association: K = " + std::to_string(sc.k) + " users exceed the M*N = " +
         std::to_string(sc.m * sc.n) + " UAV-subcarrier slots, so not every user can be served");
  }
  if (sc.users.size() != sc.k) {
    fail("user list has " + std::to_string(sc.users.size()) + " entries but K = " +
         std::to_string(sc.k));
  }
  double tallest = 0.0;
  for (std::size_t q = 0; q < sc.buildings.size(); ++q) {
    try {
      validate_building(sc.buildings[q]);
    } catch (const Error& e) {
      fail("building " + std::to_string(q) + ": " + e.what());
    }
    tallest = std::max(tallest, sc.buildings[q].height());
  }
  if (!(sc.h_min > tallest)) {
    fail("h_min = " + num(sc.h_min) + " does not exceed the tallest building (" + num(tallest) +
         " m)");
  }
  for (std::size_t k = 0; k < sc.users.size(); ++k) {
    const Vec3& u = sc.users[k];
    const std::string tag = "user " + std::to_string(k);
    if (u.z() != 0.0) fail(tag + " is not on the ground");
    if (u.x() < 0.0 || u.x() > sc.x_d || u.y() < 0.0 || u.y() > sc.y_d) {
      fail(tag + " lies outside the area");
    }
    for (std::size_t q = 0; q < sc.buildings.size(); ++q) {
      if (sc.buildings[q].footprint_contains(u.x(), u.y())) {
        fail(tag + " lies inside the footprint of building " + std::to_string(q));
      }
    }
  }
  if (!(sc.p_max > 0.0)) fail("p_max must be positive");
  if (!(sc.d_min > 0.0)) fail("d_min must be positive");
  try {
    sc.channel.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  try {
    sc.algo.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  return out;
}

std::vector<Vec3> random_users(std::size_t count, double x_d, double y_d,
                               const std::vector<Building>& buildings, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(0.0, x_d), uy(0.0, y_d);
  std::vector<Vec3> users;
  for (std::size_t k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      const double x = ux(rng), y = uy(rng);
      const bool blocked = std::any_of(buildings.begin(), buildings.end(), [&](const Building& b) {
        return b.footprint_contains(x, y);
      });
      if (!blocked) {
        users.emplace_back(x, y, 0.0);
        placed = true;
      }
    }
    if (!placed) throw Error("random_users: area too densely built to place a user");
  }
  return users;
}

std::vector<Building> synthetic_city(std::size_t count, double x_d, double y_d, double h_lo,
                                     double h_hi, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0xC17E5EEDULL));
  std::uniform_real_distribution<double> side(30.0, 90.0), height(h_lo, h_hi), unit(0.0, 1.0);
  std::vector<Building> out;
  const double gap = 10.0;
  for (int attempt = 0; out.size() < count && attempt < 100000; ++attempt) {
    Building b;
    const double dx = side(rng), dy = side(rng);
    b.size = Vec3(dx, dy, height(rng));
    b.min_corner = Vec3(unit(rng) * (x_d - dx), unit(rng) * (y_d - dy), 0.0);
    const bool overlaps = std::any_of(out.begin(), out.end(), [&](const Building& o) {
      return b.min_corner.x() < o.max_corner().x() + gap &&
             o.min_corner.x() < b.max_corner().x() + gap &&
             b.min_corner.y() < o.max_corner().y() + gap &&
             o.min_corner.y() < b.max_corner().y() + gap;
    });
    if (!overlaps) out.push_back(b);
  }
  if (out.size() < count) throw Error("synthetic_city: could not fit the requested buildings");
  return out;
}

void stagger_altitudes(Eigen::MatrixX3d& x, double d_min) {
  for (Eigen::Index m = 1; m < x.rows(); ++m) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (Eigen::Index j = 0; j < m; ++j) {
        if ((x.row(m) - x.row(j)).norm() < d_min) {
          x(m, 2) += d_min;
          moved = true;
        }
      }
    }
  }
}

SolutionState initial_state(const Scenario& sc, const ChannelModel& model,
                            const std::optional<Eigen::MatrixX3d>& positions) {
  const std::size_t K = sc.users.size(), M = sc.m, N = sc.n;
  const double altitude = std::max(kDeployAltitude, sc.h_min);
  SolutionState st;
  st.x.resize(static_cast<Eigen::Index>(M), 3);
  if (positions) {
    if (positions->rows() != static_cast<Eigen::Index>(M)) {
      throw Error("initial_state: position matrix has wrong row count");
    }
    st.x = *positions;
  } else {
    const double corners[4][2] = {{0.0, 0.0}, {sc.x_d, 0.0}, {sc.x_d, sc.y_d}, {0.0, sc.y_d}};
    std::vector<bool> chosen(K, false);
    std::size_t chosen_count = 0;
    for (std::size_t m = 0; m < M; ++m) {
      if (chosen_count == K) {
        std::fill(chosen.begin(), chosen.end(), false);
        chosen_count = 0;
      }
      const double* c = corners[m % 4];
      std::size_t best = K;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < K; ++k) {
        if (chosen[k]) continue;
        const double d = horizontal_dist2(sc.users[k], c[0], c[1]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      chosen[best] = true;
      ++chosen_count;
      st.x.row(static_cast<Eigen::Index>(m)) << sc.users[best].x(), sc.users[best].y(), altitude;
    }
  }
  stagger_altitudes(st.x, sc.d_min);

  st.p = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(N));
  st.c = Tensor3(K, M, N);
  std::vector<std::vector<bool>> busy(M, std::vector<bool>(N, false));
  std::vector<int> usage(N, 0);
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t best_m = M;
    double best_g = -1.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (std::all_of(busy[m].begin(), busy[m].end(), [](bool b) { return b; })) continue;
      const double g = model.eval(k, st.position(m)).gain;
      if (g > best_g) {
        best_g = g;
        best_m = m;
      }
    }
    if (best_m == M) throw Error("initial_state: no idle UAV-subcarrier slot left");
    std::size_t best_n = N;
    for (std::size_t n = 0; n < N; ++n) {
      if (busy[best_m][n]) continue;
      if (best_n == N || usage[n] < usage[best_n]) best_n = n;
    }
    busy[best_m][best_n] = true;
    ++usage[best_n];
    st.c(k, best_m, best_n) = 1.0;
  }
  for (std::size_t m = 0; m < M; ++m) {
    const auto occupied = std::count(busy[m].begin(), busy[m].end(), true);
    for (std::size_t n = 0; n < N; ++n) {
      if (busy[m][n]) st.p(m, n) = sc.p_max / static_cast<double>(occupied);
    }
  }
  st.lambda = Tensor3(K, M, N, sc.algo.initial_lambda(K, M, N));
  return st;
}

Eigen::MatrixX3d kmeans_positions(const std::vector<Vec3>& users, std::size_t m,
                                  std::uint64_t seed, double altitude) {
  const std::size_t K = users.size();
  if (m == 0 || K < m) throw Error("kmeans_positions: need at least as many users as UAVs");
  std::vector<Eigen::Vector2d> pts(K);
  for (std::size_t k = 0; k < K; ++k) pts[k] = users[k].head<2>();

  auto nearest = [&](const std::vector<Eigen::Vector2d>& cents, const Eigen::Vector2d& p) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cents.size(); ++c) {
      const double d = (cents[c] - p).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return std::pair{best, best_d};
  };

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Vector2d> cents;
  cents.push_back(pts[std::uniform_int_distribution<std::size_t>(0, K - 1)(rng)]);
  while (cents.size() < m) {
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double d = nearest(cents, pts[k]).second;
      if (d > far_d) {
        far_d = d;
        far = k;
      }
    }
    cents.push_back(pts[far]);
  }

  std::vector<std::size_t> assign(K, m);
  for (int iter = 0; iter < 1000; ++iter) {
    bool changed = false;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t c = nearest(cents, pts[k]).first;
      if (c != assign[k]) {
        assign[k] = c;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<Eigen::Vector2d> sum(m, Eigen::Vector2d::Zero());
    std::vector<int> cnt(m, 0);
    for (std::size_t k = 0; k < K; ++k) {
      sum[assign[k]] += pts[k];
      ++cnt[assign[k]];
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (cnt[c] > 0) {
        cents[c] = sum[c] / cnt[c];
        continue;
      }
      // Empty cluster: restart it at the user farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double d = (pts[k] - cents[assign[k]]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = k;
        }
      }
      cents[c] = pts[far];
    }
  }

  Eigen::MatrixX3d x(static_cast<Eigen::Index>(m), 3);
  for (std::size_t c = 0; c < m; ++c) {
    x.row(static_cast<Eigen::Index>(c)) << cents[c].x(), cents[c].y(), altitude;
  }
  return x;
}

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::proposed: return "proposed";
    case Scheme::fixed_association: return "fixed-association";
    case Scheme::kmeans_position: return "kmeans-position";
    case Scheme::no_geoinfo: return "no-geoinfo";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (Scheme s : all_schemes()) {
    if (name == to_string(s)) return s;
  }
  throw Error("unknown scheme: " + std::string(name));
}

std::vector<Scheme> all_schemes() {
  return {Scheme::proposed, Scheme::fixed_association, Scheme::kmeans_position,
          Scheme::no_geoinfo};
}

RunReport run_scheme(const Scenario& sc, Scheme scheme, const Hooks& hooks) {
  const auto problems = validate(sc);
  if (!problems.empty()) throw Error("invalid scenario: " + problems.front());
  const ChannelModel truth(sc.users, sc.buildings, sc.channel, true);
  const Limits limits = sc.limits();
  RunOptions opts;
  opts.hooks = hooks;
  switch (scheme) {
    case Scheme::proposed:
      return run(initial_state(sc, truth), truth, truth, limits, sc.algo, opts);
    case Scheme::fixed_association:
      opts.optimize_c = false;
      return run(initial_state(sc, truth), truth, truth, limits, sc.algo, opts);
    case Scheme::kmeans_position: {
      opts.position = false;
      const auto x = kmeans_positions(sc.users, sc.m, sc.seed,
                                      std::max(kDeployAltitude, sc.h_min));
      return run(initial_state(sc, truth, x), truth, truth, limits, sc.algo, opts);
    }
    case Scheme::no_geoinfo: {
      const ChannelModel los(sc.users, sc.buildings, sc.channel, false);
      return run(initial_state(sc, los), los, truth, limits, sc.algo, opts);
    }
  }
  throw Error("run_scheme: unknown scheme");
}

std::uint64_t realization_seed(std::uint64_t base, std::size_t r) {
  return splitmix64(splitmix64(base) + static_cast<std::uint64_t>(r));
}

Scenario realization(const Scenario& tmpl, std::size_t r) {
  Scenario sc = tmpl;
  sc.seed = realization_seed(tmpl.seed, r);
  std::mt19937_64 rng(sc.seed);
  sc.users = random_users(sc.k, sc.x_d, sc.y_d, sc.buildings, rng);
  return sc;
}

MonteCarloResult monte_carlo(const Scenario& tmpl, std::size_t realizations,
                             const std::vector<Scheme>& schemes, unsigned jobs) {
  MonteCarloResult res;
  res.schemes = schemes;
  const std::size_t S = schemes.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  res.min_rate.assign(realizations, std::vector<double>(S, nan));
  res.status.assign(realizations, std::vector<std::string>(S, "failed"));

  auto task = [&](std::size_t idx) {
    const std::size_t r = idx / S, s = idx % S;
    try {
      const RunReport rep = run_scheme(realization(tmpl, r), schemes[s]);
      if (rep.violations.empty()) {
        res.min_rate[r][s] = rep.min_rate;
        res.status[r][s] = rep.status;
      }
    } catch (const std::exception&) {
      // recorded as failed
    }
  };

  const std::size_t total = realizations * S;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) task(i);
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(total)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t s = 0; s < S; ++s) {
    SchemeSummary sum;
    sum.scheme = schemes[s];
    double total_rate = 0.0;
    for (std::size_t r = 0; r < realizations; ++r) {
      if (std::isnan(res.min_rate[r][s])) {
        ++sum.runs_failed;
      } else {
        ++sum.runs_ok;
        total_rate += res.min_rate[r][s];
      }
    }
    if (sum.runs_ok > 0) {
      sum.mean_min_rate = total_rate / sum.runs_ok;
      double sq = 0.0;
      for (std::size_t r = 0; r < realizations; ++r) {
        const double v = res.min_rate[r][s];
        if (!std::isnan(v)) sq += (v - sum.mean_min_rate) * (v - sum.mean_min_rate);
      }
      sum.stderr_min_rate =
          sum.runs_ok > 1 ? std::sqrt(sq / (sum.runs_ok - 1)) / std::sqrt(sum.runs_ok) : 0.0;
    }
    res.summary.push_back(sum);
  }
  return res;
}

}  // namespace uavbs
