#include "m2e/delaunay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace m2e {

double orient2d(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

namespace {

struct Tri {
  std::array<int, 3> v;
  std::array<int, 3> nbr;  // nbr[i] is across the edge opposite v[i]; -1 on the hull
  bool alive = true;
};

// Snake order over a sqrt(n) x sqrt(n) grid keeps consecutive insertions
// close together so the point-location walk stays short.
std::vector<int> insertion_order(std::span<const Point2> pts, double x0, double y0, double span) {
  const int n = static_cast<int>(pts.size());
  const int g = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n) / 4.0)));
  std::vector<std::int64_t> key(n);
  for (int i = 0; i < n; ++i) {
    int cx = static_cast<int>((pts[i].x - x0) / span * g);
    int cy = static_cast<int>((pts[i].y - y0) / span * g);
    cx = std::clamp(cx, 0, g - 1);
    cy = std::clamp(cy, 0, g - 1);
    if (cy & 1) cx = g - 1 - cx;
    key[i] = static_cast<std::int64_t>(cy) * g + cx;
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] < key[b]; });
  return order;
}

class Triangulator {
 public:
  explicit Triangulator(std::span<const Point2> input) : n_(static_cast<int>(input.size())) {
    pts_.assign(input.begin(), input.end());
    double x0 = pts_[0].x, x1 = x0, y0 = pts_[0].y, y1 = y0;
    for (const auto& p : pts_) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    span_ = std::max({x1 - x0, y1 - y0, 1e-9});
    x0_ = x0;
    y0_ = y0;
    const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
    const double big = 64.0 * span_;
    pts_.push_back({cx - big, cy - big});
    pts_.push_back({cx + big, cy - big});
    pts_.push_back({cx, cy + big});
    tris_.push_back({{n_, n_ + 1, n_ + 2}, {-1, -1, -1}, true});
    mark_.assign(1, 0);
    edge_start_.assign(pts_.size(), -1);
    edge_end_.assign(pts_.size(), -1);
  }

  void run() {
    for (int idx : insertion_order({pts_.data(), static_cast<std::size_t>(n_)}, x0_, y0_, span_)) insert(idx);
  }

  std::vector<Triangle> result() const {
    std::vector<Triangle> out;
    for (const auto& t : tris_) {
      if (!t.alive) continue;
      if (t.v[0] >= n_ || t.v[1] >= n_ || t.v[2] >= n_) continue;
      if (!(orient2d(pts_[t.v[0]], pts_[t.v[1]], pts_[t.v[2]]) > 0.0)) continue;
      out.push_back({t.v[0], t.v[1], t.v[2]});
    }
    return out;
  }

 private:
  bool contains(const Tri& t, const Point2& p) const {
    for (int i = 0; i < 3; ++i) {
      if (orient2d(pts_[t.v[(i + 1) % 3]], pts_[t.v[(i + 2) % 3]], p) < 0.0) return false;
    }
    return true;
  }

  int locate(const Point2& p) {
    int cur = last_;
    if (cur < 0 || !tris_[cur].alive) cur = static_cast<int>(tris_.size()) - 1;
    while (!tris_[cur].alive) --cur;
    const std::size_t limit = 4 * tris_.size() + 16;
    for (std::size_t step = 0; step < limit; ++step) {
      const Tri& t = tris_[cur];
      int next = -1;
      // Rotate the starting edge so degenerate walks cannot cycle forever.
      const int start = static_cast<int>(step % 3);
      for (int k = 0; k < 3; ++k) {
        const int i = (start + k) % 3;
        if (orient2d(pts_[t.v[(i + 1) % 3]], pts_[t.v[(i + 2) % 3]], p) < 0.0 && t.nbr[i] >= 0) {
          next = t.nbr[i];
          break;
        }
      }
      if (next < 0) return cur;
      cur = next;
    }
    for (int i = 0; i < static_cast<int>(tris_.size()); ++i) {
      if (tris_[i].alive && contains(tris_[i], p)) return i;
    }
    return cur;
  }

  bool in_circumcircle(int ti, const Point2& p) const {
    const Tri& t = tris_[ti];
    return incircle(pts_[t.v[0]], pts_[t.v[1]], pts_[t.v[2]], p) > 0.0;
  }

  void insert(int pi) {
    const Point2& p = pts_[pi];
    const int seed = locate(p);
    ++stamp_;
    // Cavity: triangles whose circumcircle holds p, grown from the container.
    cavity_.clear();
    stack_.clear();
    stack_.push_back(seed);
    mark_[seed] = stamp_;
    while (!stack_.empty()) {
      const int ti = stack_.back();
      stack_.pop_back();
      cavity_.push_back(ti);
      for (int nb : tris_[ti].nbr) {
        if (nb < 0 || mark_[nb] == stamp_) continue;
        if (in_circumcircle(nb, p)) {
          mark_[nb] = stamp_;
          stack_.push_back(nb);
        }
      }
    }
    // Boundary edges, each oriented as in its (CCW) cavity triangle.
    boundary_.clear();
    for (int ti : cavity_) {
      const Tri& t = tris_[ti];
      for (int i = 0; i < 3; ++i) {
        const int nb = t.nbr[i];
        if (nb >= 0 && mark_[nb] == stamp_) continue;
        boundary_.push_back({t.v[(i + 1) % 3], t.v[(i + 2) % 3], nb});
      }
    }
    for (int ti : cavity_) tris_[ti].alive = false;

    touched_.clear();
    int created = -1;
    for (const auto& e : boundary_) {
      const int id = static_cast<int>(tris_.size());
      tris_.push_back({{e.a, e.b, pi}, {-1, -1, e.outside}, true});
      mark_.push_back(0);
      if (e.outside >= 0) {
        Tri& o = tris_[e.outside];
        for (int k = 0; k < 3; ++k) {
          const int oa = o.v[(k + 1) % 3], ob = o.v[(k + 2) % 3];
          if (oa == e.b && ob == e.a) o.nbr[k] = id;
        }
      }
      edge_start_[e.a] = id;
      edge_end_[e.b] = id;
      touched_.push_back(e.a);
      touched_.push_back(e.b);
      created = id;
    }
    for (int id = created - static_cast<int>(boundary_.size()) + 1; id <= created; ++id) {
      Tri& t = tris_[id];
      t.nbr[0] = edge_start_[t.v[1]];  // edge (b, p)
      t.nbr[1] = edge_end_[t.v[0]];    // edge (p, a)
    }
    for (int v : touched_) {
      edge_start_[v] = -1;
      edge_end_[v] = -1;
    }
    last_ = created;
  }

  int n_;
  std::vector<Point2> pts_;
  std::vector<Tri> tris_;
  std::vector<unsigned> mark_;
  unsigned stamp_ = 0;
  std::vector<int> cavity_, stack_, touched_;
  struct BoundaryEdge {
    int a, b, outside;
  };
  std::vector<BoundaryEdge> boundary_;
  std::vector<int> edge_start_, edge_end_;
  int last_ = 0;
  double x0_ = 0.0, y0_ = 0.0, span_ = 1.0;
};

}  // namespace

std::vector<Triangle> delaunay_triangulate(std::span<const Point2> points) {
  if (points.size() < 3) return {};
  Triangulator t(points);
  t.run();
  return t.result();
}

}  // namespace m2e
