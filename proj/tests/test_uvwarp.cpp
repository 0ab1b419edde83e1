#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "m2e/data.hpp"
#include "m2e/delaunay.hpp"
#include "m2e/error.hpp"
#include "m2e/uvwarp.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace m2e;
using oracle::oracle_lookup;
using oracle::toy_pair;
using oracle::ToyPair;

namespace {

// Monotone-chain hull area, independent of the triangulator.
double hull_area(std::vector<Point2> p) {
  std::sort(p.begin(), p.end(), [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Point2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  double a = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Point2& u = h[i];
    const Point2& v = h[(i + 1) % h.size()];
    a += u.x * v.y - v.x * u.y;
  }
  return std::abs(a) / 2;
}

void check_delaunay(const std::vector<Point2>& pts) {
  const auto tris = delaunay_triangulate(pts);
  REQUIRE_FALSE(tris.empty());
  double area = 0;
  int violations = 0;
  for (const auto& t : tris) {
    const Point2 &a = pts[t[0]], &b = pts[t[1]], &c = pts[t[2]];
    const double o = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    CHECK(o != 0.0);
    area += std::abs(o) / 2;
    // Empty circumcircle, evaluated with an independent determinant.
    const double ax = a.x, ay = a.y, bx = b.x, by = b.y, cx = c.x, cy = c.y;
    const double d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
    const double ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d;
    const double uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d;
    const double r2 = (ax - ux) * (ax - ux) + (ay - uy) * (ay - uy);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (static_cast<int>(i) == t[0] || static_cast<int>(i) == t[1] || static_cast<int>(i) == t[2]) continue;
      const double d2 = (pts[i].x - ux) * (pts[i].x - ux) + (pts[i].y - uy) * (pts[i].y - uy);
      if (d2 < r2 * (1 - 1e-9)) ++violations;
    }
  }
  CHECK(violations == 0);
  // Covers the hull up to slivers along nearly collinear hull edges.
  INFO("area " << area << " hull " << hull_area(pts));
  CHECK(area == doctest::Approx(hull_area(pts)).epsilon(1e-5));
}

}  // namespace

TEST_CASE("delaunay triangulation has empty circumcircles") {
  Rng rng(11);
  std::vector<Point2> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({rng.uniform01(), rng.uniform01()});
  check_delaunay(pts);
}

TEST_CASE("delaunay on jittered lattice points") {
  // Lattice points are co-circular in bulk; a tiny perturbation must still yield a valid triangulation.
  Rng rng(12);
  std::vector<Point2> pts;
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 12; ++x) pts.push_back({x / 11.0 + rng.uniform(-1e-6, 1e-6), y / 11.0 + rng.uniform(-1e-6, 1e-6)});
  }
  check_delaunay(pts);
}

TEST_CASE("delaunay degenerate inputs") {
  CHECK(delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 1}}).empty());
  CHECK(delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 1}, {2, 2}, {3, 3}}).empty());
  const auto one = delaunay_triangulate(std::vector<Point2>{{0, 0}, {1, 0}, {0, 1}});
  CHECK(one.size() == 1);
}

TEST_CASE("identity warp reproduces every fixture sample") {
  FixtureSpec spec;
  spec.size = 64;
  for (int id = 0; id < spec.identities; ++id) {
    for (int pose = 0; pose < spec.poses; ++pose) {
      const FixtureSample s = render_fixture_sample(spec, id, 0, pose);
      const WarpResult w = warp(build_uv_index(s.image, s.iuv), s.iuv);
      CHECK(w.covered.count_ones() == s.iuv.foreground_count());
      double worst = 0;
      for (std::size_t p = 0; p < s.image.pixel_count(); ++p) {
        if (w.covered.at(p) < 0.5f) continue;
        for (int c = 0; c < 3; ++c) worst = std::max(worst, static_cast<double>(std::abs(w.warped.at(p, c) - s.image.at(p, c))));
      }
      CHECK(worst <= 2.0);
    }
  }
}

TEST_CASE("warp agrees with a brute-force barycentric solver on 16x16 fixtures") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const ToyPair t = toy_pair(seed);
    const UvIndex index = build_uv_index(t.model, t.model_iuv);
    const WarpResult w = warp(index, t.person_iuv);
    for (std::size_t p = 0; p < w.warped.pixel_count(); ++p) {
      Rgb want{0, 0, 0};
      const bool hit = oracle_lookup(index, t.person_iuv.part(p), t.person_iuv.u(p), t.person_iuv.v(p), want);
      CHECK((w.covered.at(p) == 1.0f) == hit);
      for (int c = 0; c < 3; ++c) CHECK(std::abs(w.warped.at(p, c) - want[c]) <= 1.0f);
    }
  }
}

TEST_CASE("vertex-coincident queries are exact") {
  const ToyPair t = toy_pair(99);
  const UvIndex index = build_uv_index(t.model, t.model_iuv);
  for (const PartBucket* b : index.buckets()) {
    for (int vi : b->vertices) {
      const UvSample& s = b->samples[vi];
      Rgb c{};
      REQUIRE(index.lookup(b->part, s.u, s.v, c));
      CHECK(c == s.color);
    }
  }
}

TEST_CASE("warp errors") {
  IuvMap empty(8, 8);
  ImageTensor img(8, 8, Range::Byte);
  CHECK_THROWS_AS(build_uv_index(img, empty), DomainError);
  CHECK_THROWS_AS(build_uv_index(ImageTensor(4, 4, Range::Byte), empty), InputError);
  const ToyPair t = toy_pair(3);
  const UvIndex index = build_uv_index(t.model, t.model_iuv);
  CHECK_THROWS_AS(warp(index, IuvMap(8, 8)), InputError);
}

TEST_CASE("texture region equals coverage at zero tolerance without black texels") {
  FixtureSpec spec;
  spec.size = 48;
  const FixtureSample m = render_fixture_sample(spec, 0, 0, 0);
  const FixtureSample p = render_fixture_sample(spec, 0, 0, 1);
  const WarpResult w = warp(build_uv_index(m.image, m.iuv), p.iuv);
  CHECK(texture_region(w.warped, {0, 0, 0}, 0.0) == w.covered);
}

TEST_CASE("merge and split algebra is exact on randomized inputs") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 3 + static_cast<int>(rng.uniform_index(10)), w = 3 + static_cast<int>(rng.uniform_index(10));
    ImageTensor a(h, w, Range::UnitSigned), b(h, w, Range::UnitSigned);
    for (auto& v : a.values()) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : b.values()) v = static_cast<float>(rng.uniform(-1, 1));
    BinaryMask r(h, w);
    for (auto& v : r.values()) v = rng.uniform01() < 0.5 ? 1.0f : 0.0f;

    const ImageTensor merged = merge_textures(a, b, r);
    CHECK(merge_textures(a, b, BinaryMask(h, w, 1.0f)) == a);
    CHECK(merge_textures(a, b, BinaryMask(h, w, 0.0f)) == b);
    const RoiSplit split = roi_split(a, b, r);
    bool exact = true;
    for (std::size_t p = 0; p < merged.pixel_count(); ++p) {
      const bool in = r.at(p) == 1.0f;
      for (int c = 0; c < 3; ++c) {
        exact &= merged.at(p, c) == (in ? a.at(p, c) : b.at(p, c));
        exact &= split.garment.at(p, c) == (in ? a.at(p, c) : 0.0f);
        exact &= split.person.at(p, c) == (in ? 0.0f : b.at(p, c));
        // Disjoint supports: at most one of the two halves is non-zero.
        exact &= split.garment.at(p, c) == 0.0f || split.person.at(p, c) == 0.0f;
      }
    }
    CHECK(exact);
  }
  CHECK_THROWS_AS(merge_textures(ImageTensor(2, 2, Range::Byte), ImageTensor(2, 3, Range::Byte), BinaryMask(2, 2)),
                  InputError);
  CHECK_THROWS_AS(roi_split(ImageTensor(2, 2, Range::Byte), ImageTensor(2, 2, Range::Byte), BinaryMask(3, 2)),
                  InputError);
}
