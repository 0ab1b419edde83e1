#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace m2e {

/// Declared value interval of an ImageTensor.
enum class Range {
  UnitSigned,  // [-1, 1], what the tanh generator heads produce
  Byte,        // [0, 255]
};

constexpr float range_min(Range r) { return r == Range::Byte ? 0.0f : -1.0f; }
constexpr float range_max(Range r) { return r == Range::Byte ? 255.0f : 1.0f; }
const char* range_name(Range r);

using Rgb = std::array<float, 3>;

/// H x W x 3 raster, interleaved channels, row-major.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, Range range);
  ImageTensor(int height, int width, Range range, float fill);

  int height() const { return height_; }
  int width() const { return width_; }
  static constexpr int channels() { return 3; }
  Range range() const { return range_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return values_.empty(); }

  float& at(int y, int x, int c) { return values_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
  float at(int y, int x, int c) const { return values_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c]; }
  float& at(std::size_t pixel, int c) { return values_[pixel * 3 + c]; }
  float at(std::size_t pixel, int c) const { return values_[pixel * 3 + c]; }

  Rgb pixel(std::size_t p) const { return {values_[p * 3], values_[p * 3 + 1], values_[p * 3 + 2]}; }
  void set_pixel(std::size_t p, const Rgb& c) {
    values_[p * 3] = c[0];
    values_[p * 3 + 1] = c[1];
    values_[p * 3 + 2] = c[2];
  }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  /// True when every value is finite and inside the declared range.
  bool in_range() const;
  /// Throws DomainError naming the first offending value when in_range() fails.
  void validate() const;

  bool same_shape(const ImageTensor& o) const { return height_ == o.height_ && width_ == o.width_; }
  bool operator==(const ImageTensor& o) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  Range range_ = Range::Byte;
  std::vector<float> values_;
};

inline constexpr int kNumParts = 24;

/// Dense-pose map: part index in {0..24} (0 = background) plus surface
/// coordinates (u, v) in [0,1]. Background pixels always carry u = v = 0.
class IuvMap {
 public:
  IuvMap() = default;
  IuvMap(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return part_.size(); }

  int part(std::size_t p) const { return part_[p]; }
  float u(std::size_t p) const { return u_[p]; }
  float v(std::size_t p) const { return v_[p]; }
  int part(int y, int x) const { return part_[index(y, x)]; }
  float u(int y, int x) const { return u_[index(y, x)]; }
  float v(int y, int x) const { return v_[index(y, x)]; }

  /// Setting part 0 zeroes (u, v). Throws DomainError on part > 24 or u, v outside [0,1].
  void set(std::size_t p, int part, float u, float v);
  void set(int y, int x, int part, float u, float v) { set(index(y, x), part, u, v); }

  std::size_t foreground_count() const;
  bool has_foreground() const { return foreground_count() > 0; }
  void validate() const;

  bool same_shape(const IuvMap& o) const { return height_ == o.height_ && width_ == o.width_; }
  bool operator==(const IuvMap& o) const = default;

 private:
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width_ + x; }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> part_;
  std::vector<float> u_;
  std::vector<float> v_;
};

/// H x W mask with values in [0,1]. Hard masks hold only 0 and 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return values_.size(); }

  float& at(std::size_t p) { return values_[p]; }
  float at(std::size_t p) const { return values_[p]; }
  float& at(int y, int x) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  bool is_hard() const;
  std::size_t count_ones() const;
  void validate() const;
  /// 1 where value >= threshold, else 0.
  BinaryMask binarized(float threshold = 0.5f) const;

  bool same_shape(const BinaryMask& o) const { return height_ == o.height_ && width_ == o.width_; }
  template <typename Other>
  bool same_shape(const Other& o) const {
    return height_ == o.height() && width_ == o.width();
  }
  bool operator==(const BinaryMask& o) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> values_;
};

/// x -> x / 127.5 - 1. Requires a byte-range image.
ImageTensor to_signed(const ImageTensor& img);
/// x -> (x + 1) * 127.5. Requires a unit_signed image. No rounding.
ImageTensor to_byte(const ImageTensor& img);
/// Rounds byte values to integers and clamps to [0,255]. Requires a byte-range image.
ImageTensor quantize_bytes(const ImageTensor& img);

/// out[p,c] = img[p,c] * mask[p].
ImageTensor mask_apply(const ImageTensor& img, const BinaryMask& mask);

/// Intersection-over-union of two hard masks (values >= 0.5 count as set). Empty/empty gives 1.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

}  // namespace m2e
