#include "anchorgk/geo.hpp"

#include <cmath>
#include <numbers>

namespace anchorgk {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  double h = s1 * s1 + std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * s2 * s2;
  h = std::min(1.0, std::max(0.0, h));
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

LocalProjection::LocalProjection(double ref_lat_deg)
    : kx_(kEarthRadiusKm * kDeg * std::cos(ref_lat_deg * kDeg)), ky_(kEarthRadiusKm * kDeg) {}

LocalProjection LocalProjection::around(std::span<const GeoPoint> pts) {
  double lat = 0.0;
  for (const auto& p : pts) lat += p.lat;
  return LocalProjection(pts.empty() ? 0.0 : lat / static_cast<double>(pts.size()));
}

Point2 LocalProjection::operator()(const GeoPoint& g) const { return {g.lon * kx_, g.lat * ky_}; }

std::vector<Point2> LocalProjection::operator()(std::span<const GeoPoint> pts) const {
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back((*this)(p));
  return out;
}

}  // namespace anchorgk
