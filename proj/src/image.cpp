#include "m2e/image.hpp"

#include <cmath>
#include <string>

#include "m2e/error.hpp"

namespace m2e {

const char* range_name(Range r) { return r == Range::Byte ? "byte" : "unit_signed"; }

ImageTensor::ImageTensor(int height, int width, Range range)
    : ImageTensor(height, width, range, range_min(range)) {}

ImageTensor::ImageTensor(int height, int width, Range range, float fill)
    : height_(height), width_(width), range_(range) {
  if (height <= 0 || width <= 0) throw InputError("image dimensions must be positive");
  values_.assign(static_cast<std::size_t>(height) * width * 3, fill);
}

bool ImageTensor::in_range() const {
  const float lo = range_min(range_), hi = range_max(range_);
  for (float x : values_) {
    if (!(x >= lo && x <= hi)) return false;
  }
  return true;
}

void ImageTensor::validate() const {
  const float lo = range_min(range_), hi = range_max(range_);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const float x = values_[i];
    if (!(x >= lo && x <= hi)) {
      throw DomainError("image value " + std::to_string(x) + " at element " + std::to_string(i) +
                        " outside " + range_name(range_) + " range");
    }
  }
}

IuvMap::IuvMap(int height, int width) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw InputError("iuv dimensions must be positive");
  const auto n = static_cast<std::size_t>(height) * width;
  part_.assign(n, 0);
  u_.assign(n, 0.0f);
  v_.assign(n, 0.0f);
}

void IuvMap::set(std::size_t p, int part, float u, float v) {
  if (part < 0 || part > kNumParts) throw DomainError("invalid part index " + std::to_string(part));
  if (part == 0) {
    part_[p] = 0;
    u_[p] = 0.0f;
    v_[p] = 0.0f;
    return;
  }
  if (!(u >= 0.0f && u <= 1.0f && v >= 0.0f && v <= 1.0f)) {
    throw DomainError("uv coordinate outside [0,1]");
  }
  part_[p] = static_cast<std::uint8_t>(part);
  u_[p] = u;
  v_[p] = v;
}

std::size_t IuvMap::foreground_count() const {
  std::size_t n = 0;
  for (auto p : part_) n += (p != 0);
  return n;
}

void IuvMap::validate() const {
  for (std::size_t i = 0; i < part_.size(); ++i) {
    if (part_[i] > kNumParts) throw DomainError("invalid part index " + std::to_string(part_[i]));
    if (part_[i] == 0 && (u_[i] != 0.0f || v_[i] != 0.0f)) {
      throw DomainError("background pixel with nonzero uv at " + std::to_string(i));
    }
    if (!(u_[i] >= 0.0f && u_[i] <= 1.0f && v_[i] >= 0.0f && v_[i] <= 1.0f)) {
      throw DomainError("uv coordinate outside [0,1] at " + std::to_string(i));
    }
  }
}

BinaryMask::BinaryMask(int height, int width, float fill) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw InputError("mask dimensions must be positive");
  values_.assign(static_cast<std::size_t>(height) * width, fill);
}

bool BinaryMask::is_hard() const {
  for (float x : values_) {
    if (x != 0.0f && x != 1.0f) return false;
  }
  return true;
}

std::size_t BinaryMask::count_ones() const {
  std::size_t n = 0;
  for (float x : values_) n += (x == 1.0f);
  return n;
}

void BinaryMask::validate() const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!(values_[i] >= 0.0f && values_[i] <= 1.0f)) {
      throw DomainError("mask value outside [0,1] at " + std::to_string(i));
    }
  }
}

BinaryMask BinaryMask::binarized(float threshold) const {
  BinaryMask out(height_, width_);
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] = values_[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

ImageTensor to_signed(const ImageTensor& img) {
  if (img.range() != Range::Byte) throw InputError("to_signed expects a byte-range image");
  ImageTensor out(img.height(), img.width(), Range::UnitSigned);
  auto src = img.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] / 127.5f - 1.0f;
  return out;
}

ImageTensor to_byte(const ImageTensor& img) {
  if (img.range() != Range::UnitSigned) throw InputError("to_byte expects a unit_signed image");
  ImageTensor out(img.height(), img.width(), Range::Byte);
  auto src = img.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const float x = (src[i] + 1.0f) * 127.5f;
    dst[i] = x < 0.0f ? 0.0f : (x > 255.0f ? 255.0f : x);
  }
  return out;
}

ImageTensor quantize_bytes(const ImageTensor& img) {
  if (img.range() != Range::Byte) throw InputError("quantize_bytes expects a byte-range image");
  ImageTensor out = img;
  for (float& x : out.values()) {
    const float r = std::round(x);
    x = r < 0.0f ? 0.0f : (r > 255.0f ? 255.0f : r);
  }
  return out;
}

ImageTensor mask_apply(const ImageTensor& img, const BinaryMask& mask) {
  if (img.height() != mask.height() || img.width() != mask.width()) {
    throw InputError("mask_apply: dimension mismatch");
  }
  ImageTensor out = img;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    const float m = mask.at(p);
    for (int c = 0; c < 3; ++c) out.at(p, c) = img.at(p, c) * m;
  }
  return out;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw InputError("mask_iou: dimension mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    const bool x = a.at(i) >= 0.5f, y = b.at(i) >= 0.5f;
    inter += (x && y);
    uni += (x || y);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace m2e
