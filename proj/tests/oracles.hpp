#pragma once

// Independent reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "anchorgk/geo.hpp"

namespace anchorgk::oracle {

/// Extreme points of a planar set by testing every ordered pair as a
/// candidate counter-clockwise edge.
inline std::set<std::pair<double, double>> brute_force_hull(const std::vector<Point2>& pts) {
  std::set<std::pair<double, double>> out;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || pts[i] == pts[j]) continue;
      bool edge = true;
      for (std::size_t k = 0; k < n && edge; ++k) {
        if (k == i || k == j) continue;
        const double c = (pts[j].x - pts[i].x) * (pts[k].y - pts[i].y) - (pts[j].y - pts[i].y) * (pts[k].x - pts[i].x);
        if (c < 0.0) edge = false;
        if (c == 0.0) {
          // Collinear: must lie within the segment for [i, j] to be an edge.
          const double dot = (pts[k].x - pts[i].x) * (pts[j].x - pts[i].x) + (pts[k].y - pts[i].y) * (pts[j].y - pts[i].y);
          const double len2 = (pts[j].x - pts[i].x) * (pts[j].x - pts[i].x) + (pts[j].y - pts[i].y) * (pts[j].y - pts[i].y);
          if (dot < 0.0 || dot > len2) edge = false;
        }
      }
      if (edge) {
        out.insert({pts[i].x, pts[i].y});
        out.insert({pts[j].x, pts[j].y});
      }
    }
  }
  return out;
}

/// Ray-casting point-in-polygon with an explicit on-edge check.
inline bool point_in_polygon(const std::vector<Point2>& poly, const Point2& p, double tol = 1e-12) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % n];
    const double c = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (std::abs(c) <= tol * std::max(1.0, len) && p.x >= std::min(a.x, b.x) - tol && p.x <= std::max(a.x, b.x) + tol &&
        p.y >= std::min(a.y, b.y) - tol && p.y <= std::max(a.y, b.y) + tol) {
      return true;
    }
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if ((poly[i].y > p.y) != (poly[j].y > p.y) &&
        p.x < (poly[j].x - poly[i].x) * (p.y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x) {
      inside = !inside;
    }
  }
  return inside;
}

/// Term-by-term evaluation of the unified adjacency with std::pow.
/// `pearson` is m x m over members, `dist` is (m+1) x (m+1) with the cell last.
inline Eigen::MatrixXd unified_adjacency(const Eigen::MatrixXd& pearson, const Eigen::MatrixXd& dist, double lambda,
                                         double alpha, bool apply_density, double epsilon, double sigma,
                                         double min_dist) {
  const Eigen::Index m = pearson.rows();
  auto d = [&](Eigen::Index i, Eigen::Index j) { return std::max(dist(i, j), min_dist); };
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m + 1, m + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) continue;
      const double rho = std::max(0.0, pearson(i, j));
      if (rho <= 0.0) continue;
      a(i, j) = std::pow(pearson(i, j) / std::exp(lambda / d(i, j)), rho);
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      const double rho = std::max(0.0, pearson(i, j));
      if (rho <= 0.0) continue;
      sum += std::pow(pearson(i, j) * std::exp(lambda / d(j, m)) / std::exp(lambda / d(i, j)), rho);
    }
    if (apply_density) sum *= alpha;
    a(i, m) = sum;
    a(m, i) = sum;
  }
  if (epsilon > 0.0) {
    const double diam = dist.maxCoeff();
    for (Eigen::Index i = 0; i <= m; ++i) {
      for (Eigen::Index j = 0; j <= m; ++j) {
        if (i == j) continue;
        const double s = diam > 0.0 ? dist(i, j) / diam : dist(i, j);
        if (std::exp(-s * s / (sigma * sigma)) < epsilon) a(i, j) = 0.0;
      }
    }
  }
  return a;
}

/// Closed-form Kalman filter with identity transition and observation.
struct KalmanState {
  Eigen::VectorXd x;
  Eigen::MatrixXd p;
};

inline KalmanState kalman_step(const KalmanState& s, const Eigen::VectorXd& z, const Eigen::MatrixXd& q,
                               const Eigen::MatrixXd& r) {
  const Eigen::MatrixXd prior = s.p + q;
  const Eigen::MatrixXd k = prior * (prior + r).inverse();
  const Eigen::Index n = s.x.size();
  return {s.x + k * (z - s.x), (Eigen::MatrixXd::Identity(n, n) - k) * prior};
}

/// Dense ordinary kriging by explicit inverse of the bordered system.
template <class Gamma>
inline Eigen::VectorXd ok_weights_inverse(const std::vector<GeoPoint>& pts, const GeoPoint& target, Gamma gamma) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd a(n + 1, n + 1);
  Eigen::VectorXd b(n + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = gamma(haversine_km(pts[i], pts[j]));
    a(i, n) = 1.0;
    a(n, i) = 1.0;
    b(i) = gamma(haversine_km(pts[i], target));
  }
  a(n, n) = 0.0;
  b(n) = 1.0;
  return (a.inverse() * b).head(n);
}

}  // namespace anchorgk::oracle
