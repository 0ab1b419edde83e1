#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "m2e/delaunay.hpp"
#include "m2e/image.hpp"

namespace m2e {

/// Nearest-neighbor fallback radius in UV units for queries outside every triangle.
inline constexpr double kUvFallbackRadius = 0.05;
/// Magnitude of the deterministic UV perturbation applied before triangulating.
inline constexpr double kUvJitter = 1e-6;

struct UvSample {
  double u = 0.0;
  double v = 0.0;
  std::size_t pixel = 0;  // row-major index in the source image
  Rgb color{};
};

/// Source samples of one body part and their triangulation in UV space.
struct PartBucket {
  int part = 0;
  std::vector<UvSample> samples;       // every source pixel of the part, scan order
  std::vector<int> vertices;           // samples with a distinct (u, v); first in scan order wins
  std::vector<Point2> vertex_uv;       // jittered coordinates the triangulation is built on
  std::vector<Triangle> triangles;     // indices into `vertices`

  // Uniform-grid acceleration over the part's UV bounding box.
  double grid_u0 = 0.0, grid_v0 = 0.0, grid_cell = 1.0;
  int grid_dim = 1;
  std::vector<std::vector<int>> triangle_cells;  // triangle ids overlapping each cell
  std::vector<std::vector<int>> vertex_cells;    // vertex ids per cell, cell size >= fallback radius
  double nn_cell = kUvFallbackRadius;
  int nn_dim = 1;
};

/// Per-part index of model-image samples; built once per (image, dense pose) pair.
class UvIndex {
 public:
  int height() const { return height_; }
  int width() const { return width_; }
  Range range() const { return range_; }

  /// Non-empty buckets in ascending part order.
  std::vector<const PartBucket*> buckets() const;
  const PartBucket& bucket(int part) const { return parts_[part]; }
  std::size_t sample_count() const;

  /// Barycentric lookup of a (u, v) query inside one part. Returns false when uncovered.
  bool lookup(int part, double u, double v, Rgb& color) const;

 private:
  friend UvIndex build_uv_index(const ImageTensor& model_img, const IuvMap& model_iuv);

  int height_ = 0;
  int width_ = 0;
  Range range_ = Range::Byte;
  std::array<PartBucket, kNumParts + 1> parts_{};
};

/// Throws DomainError("no dense pose coverage") when the map has no body pixels.
UvIndex build_uv_index(const ImageTensor& model_img, const IuvMap& model_iuv);

struct WarpResult {
  ImageTensor warped;  // black (range minimum) where uncovered
  BinaryMask covered;  // hard
};

/// Transfers model colors onto the person's dense pose through shared UV coordinates.
/// Rows are processed in parallel; the result is independent of the thread count.
WarpResult warp(const UvIndex& index, const IuvMap& person_iuv);

/// Tolerance in the units of `range` equivalent to 8/255 of the full span.
double default_texture_tolerance(Range range);

/// R[p] = 1 iff the max-channel distance from `background` exceeds `tol`.
BinaryMask texture_region(const ImageTensor& warped, const Rgb& background, double tol);
/// Black background with the default tolerance.
BinaryMask texture_region(const ImageTensor& warped);

/// warped * R + aligned * (1 - R), per pixel.
ImageTensor merge_textures(const ImageTensor& warped, const ImageTensor& aligned, const BinaryMask& region);

struct RoiSplit {
  ImageTensor garment;  // refined * roi
  ImageTensor person;   // person * (1 - roi)
};

RoiSplit roi_split(const ImageTensor& refined, const ImageTensor& person, const BinaryMask& roi);

}  // namespace m2e
