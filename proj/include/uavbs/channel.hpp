#pragma once

// Blockage-aware large-scale air-to-ground channel. The LoS/NLoS switch is a
// sigmoid of the distance-normalised shadow clearance, which makes the gain
// differentiable in the UAV position.

#include <span>
#include <utility>
#include <vector>

#include "uavbs/geometry.hpp"

namespace uavbs {

struct ChannelParams {
  double alpha_los = 2.0;
  double alpha_nlos = 3.3;
  double beta_los = 2.2750974307720715e-05;  // -46.43 dB
  double beta_nlos = 2.2750974307720716e-06;  // -56.43 dB
  double eta = 1000.0;
  double noise_power = 1.9952623149688787e-14;  // -107 dBm in watts

  void validate() const;
};

struct ChannelEval {
  double distance = 0.0;
  double s = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  double gain = 0.0;
  Vec3 grad_gain = Vec3::Zero();
  Vec3 grad_alpha = Vec3::Zero();
  Vec3 grad_beta = Vec3::Zero();
  /// +inf when the user has no blocked regions.
  double clearance = 0.0;
  bool blocked_anywhere = false;
  HalfSpace active_plane;
  /// The active (building, halfspace) pair is not unique; gradients are the
  /// lowest-index subgradient.
  bool tie = false;
};

/// 1 / (1 + exp(-eta * clearance / distance)), two-branch evaluation, never
/// below the smallest positive normal double.
double smoothing(double clearance, double distance, double eta);

/// s(1 - s) for the same argument, without cancellation near s = 1.
double smoothing_slope(double clearance, double distance, double eta);

/// Linear interpolation (alpha, beta) between NLoS (s = 0) and LoS (s = 1).
std::pair<double, double> channel_params_at(double s, const ChannelParams& params);

ChannelEval gain(const Vec3& x, const Vec3& user, std::span<const BlockedRegion> regions,
                 const ChannelParams& params);

struct GainGradients {
  Vec3 grad_gain = Vec3::Zero();
  Vec3 grad_alpha = Vec3::Zero();
  Vec3 grad_beta = Vec3::Zero();
  bool tie = false;
};

GainGradients grad_gain(const Vec3& x, const Vec3& user,
                        std::span<const BlockedRegion> regions, const ChannelParams& params);

/// Users, their shadow regions, and channel constants for one scene. A model
/// built with `geo_aware = false` ignores buildings (pure LoS everywhere).
class ChannelModel {
 public:
  ChannelModel(std::vector<Vec3> users, std::span<const Building> buildings,
               ChannelParams params, bool geo_aware = true);

  std::size_t user_count() const { return users_.size(); }
  const Vec3& user(std::size_t k) const { return users_[k]; }
  const ChannelParams& params() const { return params_; }
  std::span<const BlockedRegion> regions(std::size_t k) const { return regions_[k]; }
  bool geo_aware() const { return geo_aware_; }

  ChannelEval eval(std::size_t k, const Vec3& x) const {
    return gain(x, users_[k], regions_[k], params_);
  }

 private:
  std::vector<Vec3> users_;
  std::vector<std::vector<BlockedRegion>> regions_;
  ChannelParams params_;
  bool geo_aware_;
};

/// K x M channel evaluations at the UAV positions in `x` (rows are UAVs).
std::vector<ChannelEval> evaluate_links(const ChannelModel& model,
                                        const Eigen::MatrixX3d& x);

}  // namespace uavbs
