#pragma once

#include <span>
#include <vector>

namespace anchorgk {

/// Geographic coordinate in decimal degrees.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Planar point. Geometry routines treat lon as x and lat as y.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 to_plane(const GeoPoint& g) { return {g.lon, g.lat}; }
inline GeoPoint to_geo(const Point2& p) { return {p.y, p.x}; }

inline constexpr double kEarthRadiusKm = 6371.0088;

/// Great-circle distance in kilometres.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

/// Local equirectangular projection to kilometres around a reference
/// latitude. Good enough for regional areas and nearest-neighbour statistics.
class LocalProjection {
 public:
  explicit LocalProjection(double ref_lat_deg);
  static LocalProjection around(std::span<const GeoPoint> pts);

  Point2 operator()(const GeoPoint& g) const;
  std::vector<Point2> operator()(std::span<const GeoPoint> pts) const;

 private:
  double kx_;
  double ky_;
};

}  // namespace anchorgk
