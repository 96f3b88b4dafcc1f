#include "uavbs/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace uavbs {

Eigen::MatrixXd gain_matrix(const std::vector<ChannelEval>& links, std::size_t users,
                            std::size_t uavs) {
  Eigen::MatrixXd g(users, uavs);
  for (std::size_t k = 0; k < users; ++k) {
    for (std::size_t m = 0; m < uavs; ++m) g(k, m) = links[k * uavs + m].gain;
  }
  return g;
}

Tensor3 sinr(const SolutionState& state, const Eigen::MatrixXd& gains, double noise_power) {
  const std::size_t K = state.users(), M = state.uavs(), N = state.subcarriers();
  Tensor3 out(K, M, N);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) {
        double interference = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
          if (j != m) interference += state.p(j, n) * gains(k, j);
        }
        out(k, m, n) = state.p(m, n) * gains(k, m) / (interference + noise_power);
      }
    }
  }
  return out;
}

RateBreakdown rates(const SolutionState& state, const Eigen::MatrixXd& gains,
                    double noise_power) {
  const std::size_t K = state.users(), M = state.uavs(), N = state.subcarriers();
  RateBreakdown rb;
  rb.sinr = sinr(state, gains, noise_power);
  rb.rate_kmn = Tensor3(K, M, N);
  rb.rate_user = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    double sum = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t n = 0; n < N; ++n) {
        const double c = state.c(k, m, n);
        const double r = c < 1e-12 ? 0.0 : c * std::log2(1.0 + rb.sinr(k, m, n));
        rb.rate_kmn(k, m, n) = r;
        sum += r;
      }
    }
    rb.rate_user(static_cast<Eigen::Index>(k)) = sum;
  }
  rb.min_rate = K ? rb.rate_user(0) : 0.0;
  rb.bottleneck_user = 0;
  for (std::size_t k = 1; k < K; ++k) {
    if (rb.rate_user(static_cast<Eigen::Index>(k)) < rb.min_rate) {
      rb.min_rate = rb.rate_user(static_cast<Eigen::Index>(k));
      rb.bottleneck_user = k;
    }
  }
  return rb;
}

double penalty(const Tensor3& c, const Tensor3& lambda) {
  double sum = 0.0;
  const auto& cv = c.raw();
  const auto& lv = lambda.raw();
  for (std::size_t i = 0; i < cv.size(); ++i) sum += lv[i] * cv[i] * (1.0 - cv[i]);
  return -sum;
}

ObjectiveEval objective_z(const SolutionState& state, const Eigen::MatrixXd& gains,
                          double noise_power) {
  ObjectiveEval out;
  out.rates = rates(state, gains, noise_power);
  out.penalty = penalty(state.c, state.lambda);
  out.z = out.rates.min_rate + out.penalty;
  return out;
}

double max_violation(const Tensor3& c) {
  double v = 0.0;
  for (double x : c.raw()) v = std::max(v, x * (1.0 - x));
  return v;
}

bool separation_ok(const Eigen::MatrixX3d& x, double d_min, double slack) {
  for (Eigen::Index m = 0; m < x.rows(); ++m) {
    for (Eigen::Index j = m + 1; j < x.rows(); ++j) {
      if ((x.row(m) - x.row(j)).norm() < d_min - slack) return false;
    }
  }
  return true;
}

std::vector<std::string> feasibility_violations(const SolutionState& state,
                                                const Limits& limits, bool require_binary) {
  std::vector<std::string> out;
  const std::size_t K = state.users(), M = state.uavs(), N = state.subcarriers();
  auto fail = [&](auto&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    out.push_back(os.str());
  };

  for (std::size_t k = 0; k < K; ++k) {
    double total = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t n = 0; n < N; ++n) {
        const double c = state.c(k, m, n);
        if (c < -1e-12 || c > 1.0 + 1e-12) fail("c[", k, ",", m, ",", n, "] outside [0,1]");
        if (require_binary && c != 0.0 && c != 1.0) {
          fail("c[", k, ",", m, ",", n, "] is not binary");
        }
        total += c;
      }
    }
    if (std::abs(total - 1.0) > 1e-9) fail("user ", k, " association sums to ", total);
  }
  for (std::size_t m = 0; m < M; ++m) {
    double power = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      double load = 0.0;
      for (std::size_t k = 0; k < K; ++k) load += state.c(k, m, n);
      if (load > 1.0 + 1e-9) fail("UAV ", m, " subcarrier ", n, " shared by load ", load);
      if (state.p(m, n) < 0.0) fail("negative power at UAV ", m, " subcarrier ", n);
      power += state.p(m, n);
    }
    if (power > limits.p_max + 1e-12) fail("UAV ", m, " exceeds power budget: ", power);
    const Vec3 pos = state.position(m);
    if (pos.x() < -1e-9 || pos.x() > limits.x_d + 1e-9 || pos.y() < -1e-9 ||
        pos.y() > limits.y_d + 1e-9 || pos.z() < limits.h_min - 1e-9 || pos.z() > limits.h_max + 1e-9) {
      fail("UAV ", m, " outside the flight region");
    }
  }
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t j = m + 1; j < M; ++j) {
      const double d = (state.position(m) - state.position(j)).norm();
      if (d < limits.d_min - 1e-9) fail("UAVs ", m, " and ", j, " closer than d_min: ", d);
    }
  }
  return out;
}

}  // namespace uavbs
