#pragma once

#include <span>
#include <vector>

#include "anchorgk/geo.hpp"

namespace anchorgk {

/// Convex hull in counter-clockwise order. A degenerate hull (all input
/// points collinear or coincident) holds the extreme points only.
struct Hull {
  std::vector<Point2> vertices;
  bool degenerate = false;
};

struct BoundingBox {
  double min_x = 0.0;
  double max_x = 0.0;
  double min_y = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
};

/// z-component of (b - a) x (c - a).
double cross(const Point2& a, const Point2& b, const Point2& c);

/// Graham scan. Collinear points on edges are not reported as vertices.
/// Throws ArgumentError for fewer than 3 points.
Hull build_hull(std::span<const Point2> points);

/// Membership test for a convex counter-clockwise polygon; points on the
/// boundary count as inside. Degenerate hulls test against their segment.
bool contains(const Hull& hull, const Point2& p);

double polygon_area(std::span<const Point2> vertices);
BoundingBox bounding_box(std::span<const Point2> points);

}  // namespace anchorgk
