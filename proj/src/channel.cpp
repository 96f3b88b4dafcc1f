#include "uavbs/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

namespace uavbs {

void ChannelParams::validate() const {
  if (!(alpha_los > 0.0 && alpha_nlos >= alpha_los)) {
    throw Error("channel: require alpha_nlos >= alpha_los > 0");
  }
  if (!(beta_nlos > 0.0 && beta_los >= beta_nlos)) {
    throw Error("channel: require beta_los >= beta_nlos > 0");
  }
  if (!(eta > 0.0)) throw Error("channel: eta must be positive");
  if (!(noise_power > 0.0)) throw Error("channel: noise power must be positive");
}

namespace {

double sigmoid(double z) {
  double s;
  if (z >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    s = e / (1.0 + e);
  }
  return std::max(s, std::numeric_limits<double>::min());
}

// s(1-s) = e^{-|z|} / (1 + e^{-|z|})^2
double sigmoid_slope(double z) {
  const double e = std::exp(-std::abs(z));
  return e / ((1.0 + e) * (1.0 + e));
}

}  // namespace

double smoothing(double clearance, double distance, double eta) {
  if (!(distance > 0.0)) throw Error("smoothing: distance must be positive");
  if (std::isinf(clearance)) return clearance > 0 ? 1.0 : std::numeric_limits<double>::min();
  return sigmoid(eta * clearance / distance);
}

double smoothing_slope(double clearance, double distance, double eta) {
  if (!(distance > 0.0)) throw Error("smoothing: distance must be positive");
  if (std::isinf(clearance)) return 0.0;
  return sigmoid_slope(eta * clearance / distance);
}

std::pair<double, double> channel_params_at(double s, const ChannelParams& p) {
  return {(p.alpha_los - p.alpha_nlos) * s + p.alpha_nlos,
          (p.beta_los - p.beta_nlos) * s + p.beta_nlos};
}

ChannelEval gain(const Vec3& x, const Vec3& user, std::span<const BlockedRegion> regions,
                 const ChannelParams& params) {
  const Vec3 diff = x - user;
  const double r = diff.norm();
  if (!(r >= 1.0)) {
    throw Error(r == 0.0 ? "channel: UAV and user positions coincide"
                         : "channel: link shorter than the 1 m reference distance");
  }

  ChannelEval ev;
  ev.distance = r;
  const MinClearance mc = min_clearance(regions, x);
  ev.blocked_anywhere = mc.blocked_anywhere;
  ev.clearance = mc.value;
  ev.tie = mc.tie;

  double slope = 0.0;
  Vec3 grad_ratio = Vec3::Zero();
  if (mc.blocked_anywhere) {
    ev.active_plane = mc.active(regions);
    ev.s = smoothing(mc.value, r, params.eta);
    slope = smoothing_slope(mc.value, r, params.eta);
    grad_ratio = ev.active_plane.normal / r - mc.value * diff / (r * r * r);
  } else {
    ev.s = 1.0;
  }
  std::tie(ev.alpha, ev.beta) = channel_params_at(ev.s, params);

  const double log_r = std::log(r);
  ev.gain = ev.beta * std::exp(-ev.alpha * log_r);

  const Vec3 grad_s = params.eta * slope * grad_ratio;
  ev.grad_alpha = (params.alpha_los - params.alpha_nlos) * grad_s;
  ev.grad_beta = (params.beta_los - params.beta_nlos) * grad_s;
  // d/dx of r^{-alpha(x)} brings down the natural log of r.
  ev.grad_gain = -ev.gain * log_r * ev.grad_alpha - ev.gain * ev.alpha * diff / (r * r) +
                 ev.grad_beta * std::exp(-ev.alpha * log_r);
  return ev;
}

GainGradients grad_gain(const Vec3& x, const Vec3& user,
                        std::span<const BlockedRegion> regions, const ChannelParams& params) {
  const ChannelEval ev = gain(x, user, regions, params);
  return {ev.grad_gain, ev.grad_alpha, ev.grad_beta, ev.tie};
}

ChannelModel::ChannelModel(std::vector<Vec3> users, std::span<const Building> buildings,
                           ChannelParams params, bool geo_aware)
    : users_(std::move(users)), params_(params), geo_aware_(geo_aware) {
  params_.validate();
  regions_.resize(users_.size());
  if (geo_aware_) {
    for (std::size_t k = 0; k < users_.size(); ++k) {
      regions_[k] = build_user_regions(users_[k], k, buildings);
    }
  }
}

std::vector<ChannelEval> evaluate_links(const ChannelModel& model,
                                        const Eigen::MatrixX3d& x) {
  const std::size_t m_count = static_cast<std::size_t>(x.rows());
  std::vector<ChannelEval> out(model.user_count() * m_count);
  for (std::size_t k = 0; k < model.user_count(); ++k) {
    for (std::size_t m = 0; m < m_count; ++m) {
      out[k * m_count + m] = model.eval(k, x.row(static_cast<Eigen::Index>(m)).transpose());
    }
  }
  return out;
}

}  // namespace uavbs
