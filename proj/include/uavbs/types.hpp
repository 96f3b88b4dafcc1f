#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace uavbs {

using Vec3 = Eigen::Vector3d;

/// Raised on precondition violations (degenerate geometry, coincident points,
/// infeasible scenarios).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense K x M x N array stored row-major (n fastest).
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t k, std::size_t m, std::size_t n, double fill = 0.0)
      : k_(k), m_(m), n_(n), data_(k * m * n, fill) {}

  std::size_t dim_k() const { return k_; }
  std::size_t dim_m() const { return m_; }
  std::size_t dim_n() const { return n_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t k, std::size_t m, std::size_t n) const {
    return (k * m_ + m) * n_ + n;
  }
  double& operator()(std::size_t k, std::size_t m, std::size_t n) {
    return data_[index(k, m, n)];
  }
  double operator()(std::size_t k, std::size_t m, std::size_t n) const {
    return data_[index(k, m, n)];
  }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t k_ = 0, m_ = 0, n_ = 0;
  std::vector<double> data_;
};

}  // namespace uavbs
