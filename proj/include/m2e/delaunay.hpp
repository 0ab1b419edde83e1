#pragma once

#include <array>
#include <span>
#include <vector>

namespace m2e {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Vertex indices into the input point array, counter-clockwise.
using Triangle = std::array<int, 3>;

/// Twice the signed area of (a, b, c); positive when counter-clockwise.
double orient2d(const Point2& a, const Point2& b, const Point2& c);

/// Positive when d lies strictly inside the circumcircle of the CCW triangle (a, b, c).
double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d);

/// Delaunay triangulation by incremental Bowyer-Watson insertion.
///
/// Points must be pairwise distinct. Insertion follows a deterministic
/// spatial (snake-grid) order, so identical input yields identical output.
/// Triangles with zero signed area are never emitted. Fewer than three
/// points, or an all-collinear set, yields an empty result.
std::vector<Triangle> delaunay_triangulate(std::span<const Point2> points);

}  // namespace m2e
