#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "cvxspline/error.hpp"

namespace cvxspline {

/// Symmetric banded matrix stored by lower diagonals: band(d, i) = A(i + d, i).
class BandedSymmetric {
 public:
  BandedSymmetric() = default;
  BandedSymmetric(std::size_t n, std::size_t bandwidth)
      : n_(n), bw_(bandwidth), data_((bandwidth + 1) * n, 0.0) {}

  std::size_t size() const noexcept { return n_; }
  std::size_t bandwidth() const noexcept { return bw_; }

  /// Entry A(i, j); zero outside the band.
  double operator()(std::size_t i, std::size_t j) const {
    if (i < j) std::swap(i, j);
    const std::size_t d = i - j;
    return d > bw_ ? 0.0 : data_[d * n_ + j];
  }

  /// Mutable access for |i - j| <= bandwidth (either triangle).
  double& at(std::size_t i, std::size_t j) {
    if (i < j) std::swap(i, j);
    const std::size_t d = i - j;
    if (d > bw_) fail(ErrorCode::invalid_argument, "banded entry outside bandwidth");
    return data_[d * n_ + j];
  }

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    for (std::size_t j = 0; j < n_; ++j) {
      y[j] += data_[j] * x[j];
      for (std::size_t d = 1; d <= bw_ && j + d < n_; ++d) {
        const double a = data_[d * n_ + j];
        y[j + d] += a * x[j];
        y[j] += a * x[j + d];
      }
    }
    return y;
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (std::size_t j = 0; j < n_; ++j)
      for (std::size_t d = 0; d <= bw_ && j + d < n_; ++d) {
        m(j + d, j) = data_[d * n_ + j];
        m(j, j + d) = data_[d * n_ + j];
      }
    return m;
  }

 private:
  std::size_t n_ = 0;
  std::size_t bw_ = 0;
  std::vector<double> data_;
};

/// Banded Cholesky factor L (A = L Lᵀ) with the same bandwidth as A.
class BandedCholesky {
 public:
  /// Returns std::nullopt when a nonpositive pivot shows A is not positive definite.
  static std::optional<BandedCholesky> factor(const BandedSymmetric& a) {
    const std::size_t n = a.size();
    const std::size_t bw = a.bandwidth();
    BandedCholesky c;
    c.l_ = BandedSymmetric(n, bw);
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
    const double pivot_floor = 1e-14 * std::max(max_diag, 1.0);
    for (std::size_t j = 0; j < n; ++j) {
      double s = a(j, j);
      const std::size_t k0 = j > bw ? j - bw : 0;
      for (std::size_t k = k0; k < j; ++k) s -= c.l_(j, k) * c.l_(j, k);
      if (!(s > pivot_floor)) return std::nullopt;
      const double ljj = std::sqrt(s);
      c.l_.at(j, j) = ljj;
      for (std::size_t i = j + 1; i <= std::min(n - 1, j + bw); ++i) {
        double t = a(i, j);
        const std::size_t m0 = i > bw ? i - bw : 0;
        for (std::size_t k = std::max(k0, m0); k < j; ++k) t -= c.l_(i, k) * c.l_(j, k);
        c.l_.at(i, j) = t / ljj;
      }
    }
    return c;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    const std::size_t n = l_.size();
    const std::size_t bw = l_.bandwidth();
    Eigen::VectorXd x = b;
    for (std::size_t i = 0; i < n; ++i) {
      double s = x[i];
      for (std::size_t k = i > bw ? i - bw : 0; k < i; ++k) s -= l_(i, k) * x[k];
      x[i] = s / l_(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x[ii];
      for (std::size_t k = ii + 1; k <= std::min(n - 1, ii + bw); ++k) s -= l_(k, ii) * x[k];
      x[ii] = s / l_(ii, ii);
    }
    return x;
  }

 private:
  BandedSymmetric l_;
};

}  // namespace cvxspline
