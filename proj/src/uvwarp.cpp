#include "m2e/uvwarp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "m2e/error.hpp"
#include "m2e/rng.hpp"

namespace m2e {
namespace {

std::uint64_t uv_key(float u, float v) {
  return (static_cast<std::uint64_t>(std::bit_cast<std::uint32_t>(u)) << 32) | std::bit_cast<std::uint32_t>(v);
}

double jitter(std::size_t pixel, int axis) {
  const std::uint64_t h = mix64(static_cast<std::uint64_t>(pixel) * 2 + static_cast<std::uint64_t>(axis));
  const double unit = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0,1)
  return kUvJitter * (2.0 * unit - 1.0);
}

int cell_of(double x, double origin, double cell, int dim) {
  return std::clamp(static_cast<int>(std::floor((x - origin) / cell)), 0, dim - 1);
}

void build_grids(PartBucket& b) {
  double u0 = b.vertex_uv[0].x, u1 = u0, v0 = b.vertex_uv[0].y, v1 = v0;
  for (const auto& q : b.vertex_uv) {
    u0 = std::min(u0, q.x);
    u1 = std::max(u1, q.x);
    v0 = std::min(v0, q.y);
    v1 = std::max(v1, q.y);
  }
  const double span = std::max({u1 - u0, v1 - v0, 1e-6});
  b.grid_u0 = u0;
  b.grid_v0 = v0;

  const int dim = std::clamp(static_cast<int>(std::ceil(std::sqrt(b.triangles.size() / 2.0))), 1, 256);
  b.grid_dim = dim;
  b.grid_cell = span / dim * (1.0 + 1e-9);
  b.triangle_cells.assign(static_cast<std::size_t>(dim) * dim, {});
  constexpr double pad = 4.0 * kUvJitter;
  for (int t = 0; t < static_cast<int>(b.triangles.size()); ++t) {
    double tu0 = 1e300, tu1 = -1e300, tv0 = 1e300, tv1 = -1e300;
    for (int k = 0; k < 3; ++k) {
      const Point2& q = b.vertex_uv[b.triangles[t][k]];
      tu0 = std::min(tu0, q.x);
      tu1 = std::max(tu1, q.x);
      tv0 = std::min(tv0, q.y);
      tv1 = std::max(tv1, q.y);
    }
    const int cx0 = cell_of(tu0 - pad, u0, b.grid_cell, dim), cx1 = cell_of(tu1 + pad, u0, b.grid_cell, dim);
    const int cy0 = cell_of(tv0 - pad, v0, b.grid_cell, dim), cy1 = cell_of(tv1 + pad, v0, b.grid_cell, dim);
    for (int cy = cy0; cy <= cy1; ++cy) {
      for (int cx = cx0; cx <= cx1; ++cx) b.triangle_cells[static_cast<std::size_t>(cy) * dim + cx].push_back(t);
    }
  }

  b.nn_cell = kUvFallbackRadius;
  b.nn_dim = static_cast<int>(std::floor(span / b.nn_cell)) + 1;
  b.vertex_cells.assign(static_cast<std::size_t>(b.nn_dim) * b.nn_dim, {});
  for (int i = 0; i < static_cast<int>(b.vertices.size()); ++i) {
    const UvSample& s = b.samples[b.vertices[i]];
    const int cx = cell_of(s.u, u0, b.nn_cell, b.nn_dim);
    const int cy = cell_of(s.v, v0, b.nn_cell, b.nn_dim);
    b.vertex_cells[static_cast<std::size_t>(cy) * b.nn_dim + cx].push_back(i);
  }
}

}  // namespace

std::vector<const PartBucket*> UvIndex::buckets() const {
  std::vector<const PartBucket*> out;
  for (const auto& b : parts_) {
    if (!b.samples.empty()) out.push_back(&b);
  }
  return out;
}

std::size_t UvIndex::sample_count() const {
  std::size_t n = 0;
  for (const auto& b : parts_) n += b.samples.size();
  return n;
}

bool UvIndex::lookup(int part, double u, double v, Rgb& color) const {
  if (part <= 0 || part > kNumParts) return false;
  const PartBucket& b = parts_[part];
  if (b.vertices.empty()) return false;

  // Vertex-coincident queries return the stored color exactly.
  {
    const int cx = cell_of(u, b.grid_u0, b.nn_cell, b.nn_dim);
    const int cy = cell_of(v, b.grid_v0, b.nn_cell, b.nn_dim);
    for (int vi : b.vertex_cells[static_cast<std::size_t>(cy) * b.nn_dim + cx]) {
      const UvSample& s = b.samples[b.vertices[vi]];
      if (s.u == u && s.v == v) {
        color = s.color;
        return true;
      }
    }
  }

  if (!b.triangles.empty()) {
    const Point2 q{u, v};
    const int cx = cell_of(u, b.grid_u0, b.grid_cell, b.grid_dim);
    const int cy = cell_of(v, b.grid_v0, b.grid_cell, b.grid_dim);
    for (int t : b.triangle_cells[static_cast<std::size_t>(cy) * b.grid_dim + cx]) {
      const Triangle& tri = b.triangles[t];
      const Point2& a = b.vertex_uv[tri[0]];
      const Point2& bb = b.vertex_uv[tri[1]];
      const Point2& c = b.vertex_uv[tri[2]];
      const double area = orient2d(a, bb, c);
      const double wa = orient2d(q, bb, c) / area;
      const double wb = orient2d(a, q, c) / area;
      const double wc = 1.0 - wa - wb;
      constexpr double eps = -1e-12;
      if (wa < eps || wb < eps || wc < eps) continue;
      const Rgb& ca = b.samples[b.vertices[tri[0]]].color;
      const Rgb& cb = b.samples[b.vertices[tri[1]]].color;
      const Rgb& cc = b.samples[b.vertices[tri[2]]].color;
      const float lo = range_min(range_), hi = range_max(range_);
      for (int k = 0; k < 3; ++k) {
        const double x = wa * ca[k] + wb * cb[k] + wc * cc[k];
        color[k] = std::clamp(static_cast<float>(x), lo, hi);
      }
      return true;
    }
  }

  // Nearest vertex within the fallback radius; ties go to the lower vertex id.
  const double r2 = kUvFallbackRadius * kUvFallbackRadius;
  const int cx = cell_of(u, b.grid_u0, b.nn_cell, b.nn_dim);
  const int cy = cell_of(v, b.grid_v0, b.nn_cell, b.nn_dim);
  int best = -1;
  double best_d2 = r2;
  for (int y = std::max(0, cy - 1); y <= std::min(b.nn_dim - 1, cy + 1); ++y) {
    for (int x = std::max(0, cx - 1); x <= std::min(b.nn_dim - 1, cx + 1); ++x) {
      for (int vi : b.vertex_cells[static_cast<std::size_t>(y) * b.nn_dim + x]) {
        const UvSample& s = b.samples[b.vertices[vi]];
        const double du = s.u - u, dv = s.v - v;
        const double d2 = du * du + dv * dv;
        if (d2 < best_d2 || (d2 == best_d2 && (best < 0 || vi < best))) {
          best = vi;
          best_d2 = d2;
        }
      }
    }
  }
  if (best < 0) return false;
  color = b.samples[b.vertices[best]].color;
  return true;
}

UvIndex build_uv_index(const ImageTensor& model_img, const IuvMap& model_iuv) {
  if (model_img.height() != model_iuv.height() || model_img.width() != model_iuv.width()) {
    throw InputError("build_uv_index: image and dense pose dimensions differ");
  }
  UvIndex index;
  index.height_ = model_img.height();
  index.width_ = model_img.width();
  index.range_ = model_img.range();
  for (int p = 0; p <= kNumParts; ++p) index.parts_[p].part = p;

  for (std::size_t px = 0; px < model_iuv.pixel_count(); ++px) {
    const int part = model_iuv.part(px);
    if (part == 0) continue;
    index.parts_[part].samples.push_back({model_iuv.u(px), model_iuv.v(px), px, model_img.pixel(px)});
  }
  if (index.sample_count() == 0) throw DomainError("no dense pose coverage");

  for (auto& b : index.parts_) {
    if (b.samples.empty()) continue;
    std::unordered_map<std::uint64_t, int> first_at;
    for (int i = 0; i < static_cast<int>(b.samples.size()); ++i) {
      const UvSample& s = b.samples[i];
      const auto key = uv_key(static_cast<float>(s.u), static_cast<float>(s.v));
      if (first_at.emplace(key, static_cast<int>(b.vertices.size())).second) {
        b.vertices.push_back(i);
        b.vertex_uv.push_back({s.u + jitter(s.pixel, 0), s.v + jitter(s.pixel, 1)});
      }
    }
    if (b.vertices.size() >= 3) b.triangles = delaunay_triangulate(b.vertex_uv);
    build_grids(b);
  }
  return index;
}

WarpResult warp(const UvIndex& index, const IuvMap& person_iuv) {
  if (person_iuv.height() != index.height() || person_iuv.width() != index.width()) {
    throw InputError("warp: person dense pose dimensions differ from the model index");
  }
  const int h = index.height(), w = index.width();
  WarpResult out{ImageTensor(h, w, index.range()), BinaryMask(h, w, 0.0f)};
  const float black = range_min(index.range());

#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto p = static_cast<std::size_t>(y) * w + x;
      const int part = person_iuv.part(p);
      Rgb c{black, black, black};
      if (part != 0 && index.lookup(part, person_iuv.u(p), person_iuv.v(p), c)) {
        out.covered.at(p) = 1.0f;
        out.warped.set_pixel(p, c);
      }
    }
  }
  return out;
}

double default_texture_tolerance(Range range) {
  return 8.0 / 255.0 * (static_cast<double>(range_max(range)) - range_min(range));
}

BinaryMask texture_region(const ImageTensor& warped, const Rgb& background, double tol) {
  BinaryMask r(warped.height(), warped.width(), 0.0f);
  for (std::size_t p = 0; p < warped.pixel_count(); ++p) {
    double d = 0.0;
    for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(static_cast<double>(warped.at(p, c)) - background[c]));
    r.at(p) = d > tol ? 1.0f : 0.0f;
  }
  return r;
}

BinaryMask texture_region(const ImageTensor& warped) {
  const float b = range_min(warped.range());
  return texture_region(warped, {b, b, b}, default_texture_tolerance(warped.range()));
}

ImageTensor merge_textures(const ImageTensor& warped, const ImageTensor& aligned, const BinaryMask& region) {
  if (!warped.same_shape(aligned) || !region.same_shape(warped)) {
    throw InputError("merge_textures: dimension mismatch");
  }
  if (warped.range() != aligned.range()) throw InputError("merge_textures: range mismatch");
  ImageTensor out(warped.height(), warped.width(), warped.range());
  for (std::size_t p = 0; p < warped.pixel_count(); ++p) {
    const float r = region.at(p);
    for (int c = 0; c < 3; ++c) out.at(p, c) = warped.at(p, c) * r + aligned.at(p, c) * (1.0f - r);
  }
  return out;
}

RoiSplit roi_split(const ImageTensor& refined, const ImageTensor& person, const BinaryMask& roi) {
  if (!refined.same_shape(person) || !roi.same_shape(refined)) throw InputError("roi_split: dimension mismatch");
  RoiSplit out{ImageTensor(refined.height(), refined.width(), refined.range()),
               ImageTensor(person.height(), person.width(), person.range())};
  for (std::size_t p = 0; p < refined.pixel_count(); ++p) {
    const float m = roi.at(p);
    for (int c = 0; c < 3; ++c) {
      out.garment.at(p, c) = refined.at(p, c) * m;
      out.person.at(p, c) = person.at(p, c) * (1.0f - m);
    }
  }
  return out;
}

}  // namespace m2e
