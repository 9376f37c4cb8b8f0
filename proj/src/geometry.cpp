#include "anchorgk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "anchorgk/error.hpp"

namespace anchorgk {

double cross(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

namespace {

double dist2(const Point2& a, const Point2& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

bool lex_less(const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); }

}  // namespace

Hull build_hull(std::span<const Point2> input) {
  if (input.size() < 3) throw ArgumentError("convex hull needs at least 3 points");

  std::vector<Point2> pts(input.begin(), input.end());
  std::sort(pts.begin(), pts.end(), lex_less);
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  // Pivot: lowest y, then lowest x.
  auto pivot_it = std::min_element(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
    return a.y < b.y || (a.y == b.y && a.x < b.x);
  });
  std::iter_swap(pts.begin(), pivot_it);
  const Point2 pivot = pts.front();

  std::sort(pts.begin() + 1, pts.end(), [&](const Point2& a, const Point2& b) {
    const double c = cross(pivot, a, b);
    if (c != 0.0) return c > 0.0;
    return dist2(pivot, a) < dist2(pivot, b);
  });

  const bool collinear = std::all_of(pts.begin() + 1, pts.end(), [&](const Point2& p) {
    return cross(pivot, pts.size() > 1 ? pts[1] : pivot, p) == 0.0;
  });
  if (collinear) {
    auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(), lex_less);
    Hull h{{*lo}, true};
    if (!(*hi == *lo)) h.vertices.push_back(*hi);
    return h;
  }

  std::vector<Point2> stack;
  stack.reserve(pts.size());
  for (const auto& p : pts) {
    while (stack.size() >= 2 && cross(stack[stack.size() - 2], stack.back(), p) <= 0.0) {
      stack.pop_back();
    }
    stack.push_back(p);
  }
  return Hull{std::move(stack), false};
}

bool contains(const Hull& hull, const Point2& p) {
  const auto& v = hull.vertices;
  if (v.empty()) return false;
  double scale = 1.0;
  for (const auto& q : v) scale = std::max({scale, std::abs(q.x), std::abs(q.y)});
  const double tol = 1e-12 * scale * scale;

  if (v.size() == 1) return dist2(v[0], p) <= tol;
  if (hull.degenerate || v.size() == 2) {
    const Point2 &a = v.front(), &b = v.back();
    if (std::abs(cross(a, b, p)) > tol * std::max(1.0, std::sqrt(dist2(a, b)))) return false;
    const double dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    return dot >= -tol && dot <= dist2(a, b) + tol;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % v.size()];
    if (cross(a, b, p) < -tol * std::max(1.0, std::sqrt(dist2(a, b)))) return false;
  }
  return true;
}

double polygon_area(std::span<const Point2> v) {
  if (v.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % v.size()];
    acc += a.x * b.y - b.x * a.y;
  }
  return std::abs(acc) / 2.0;
}

BoundingBox bounding_box(std::span<const Point2> pts) {
  BoundingBox bb{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                 std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : pts) {
    bb.min_x = std::min(bb.min_x, p.x);
    bb.max_x = std::max(bb.max_x, p.x);
    bb.min_y = std::min(bb.min_y, p.y);
    bb.max_y = std::max(bb.max_y, p.y);
  }
  return bb;
}

}  // namespace anchorgk
