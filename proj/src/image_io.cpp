#include "m2e/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "m2e/error.hpp"

namespace m2e {
namespace {

namespace fs = std::filesystem;

struct RawRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> bytes;
};

class PngImage {
 public:
  PngImage() {
    std::memset(&image_, 0, sizeof(image_));
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
  png_image* get() { return &image_; }
  png_image* operator->() { return &image_; }

 private:
  png_image image_;
};

void require_file(const fs::path& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw InputError("missing file: " + path.string());
  if (!fs::is_regular_file(path, ec)) throw InputError("unreadable file: " + path.string());
}

// Reads a PNG with `want_channels` (1 or 3) channels. Alpha and channel-count
// mismatches are rejected rather than silently converted.
RawRaster read_png(const fs::path& path, int want_channels) {
  require_file(path);
  PngImage img;
  if (!png_image_begin_read_from_file(img.get(), path.c_str())) {
    throw InputError("undecodable image " + path.string() + ": " + img->message);
  }
  const bool color = (img->format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (img->format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const int have = (color ? 3 : 1) + (alpha ? 1 : 0);
  if (have != want_channels) {
    throw InputError("wrong channel count in " + path.string() + ": expected " +
                     std::to_string(want_channels) + ", found " + std::to_string(have));
  }
  img->format = want_channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  RawRaster out;
  out.width = static_cast<int>(img->width);
  out.height = static_cast<int>(img->height);
  out.channels = want_channels;
  out.bytes.resize(PNG_IMAGE_SIZE(*img.get()));
  if (!png_image_finish_read(img.get(), nullptr, out.bytes.data(), 0, nullptr)) {
    throw InputError("undecodable image " + path.string() + ": " + img->message);
  }
  return out;
}

void write_png(const fs::path& path, int width, int height, int channels, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  PngImage img;
  img->width = static_cast<png_uint_32>(width);
  img->height = static_cast<png_uint_32>(height);
  img->format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(img.get(), path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw InputError("cannot write " + path.string() + ": " + img->message);
  }
}

std::uint8_t to_u8(float x) {
  const float r = std::round(x);
  return static_cast<std::uint8_t>(r < 0.0f ? 0.0f : (r > 255.0f ? 255.0f : r));
}

struct Crop {
  int x0, y0, side;
};

Crop center_crop(int width, int height) {
  const int side = std::min(width, height);
  return {(width - side) / 2, (height - side) / 2, side};
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  const RawRaster raw = read_png(path, 3);
  ImageTensor img(raw.height, raw.width, Range::Byte);
  auto dst = img.values();
  for (std::size_t i = 0; i < raw.bytes.size(); ++i) dst[i] = raw.bytes[i];
  return img;
}

void save_image(const fs::path& path, const ImageTensor& img) {
  const ImageTensor bytes = img.range() == Range::Byte ? img : to_byte(img);
  std::vector<std::uint8_t> buf(bytes.values().size());
  auto src = bytes.values();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_u8(src[i]);
  write_png(path, img.width(), img.height(), 3, buf);
}

ImageTensor encode_iuv_raster(const IuvMap& iuv) {
  ImageTensor out(iuv.height(), iuv.width(), Range::Byte, 0.0f);
  for (std::size_t p = 0; p < iuv.pixel_count(); ++p) {
    out.at(p, 0) = static_cast<float>(iuv.part(p));
    out.at(p, 1) = std::round(255.0f * iuv.u(p));
    out.at(p, 2) = std::round(255.0f * iuv.v(p));
  }
  return out;
}

IuvMap decode_iuv_raster(const ImageTensor& raster) {
  IuvMap out(raster.height(), raster.width());
  for (std::size_t p = 0; p < raster.pixel_count(); ++p) {
    const int part = static_cast<int>(raster.at(p, 0));
    if (part > kNumParts) {
      throw DomainError("invalid part index " + std::to_string(part) + " at pixel " + std::to_string(p));
    }
    out.set(p, part, raster.at(p, 1) / 255.0f, raster.at(p, 2) / 255.0f);
  }
  return out;
}

IuvMap load_iuv(const fs::path& path) {
  require_file(path);
  RawRaster raw;
  try {
    raw = read_png(path, 3);
  } catch (const InputError& e) {
    throw DomainError(std::string("corrupt iuv map: ") + e.what());
  }
  ImageTensor raster(raw.height, raw.width, Range::Byte);
  auto dst = raster.values();
  for (std::size_t i = 0; i < raw.bytes.size(); ++i) dst[i] = raw.bytes[i];
  try {
    return decode_iuv_raster(raster);
  } catch (const DomainError& e) {
    throw DomainError(std::string(e.what()) + " in " + path.string());
  }
}

void save_iuv(const fs::path& path, const IuvMap& iuv) { save_image(path, encode_iuv_raster(iuv)); }

BinaryMask load_mask(const fs::path& path) {
  const RawRaster raw = read_png(path, 1);
  BinaryMask mask(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.bytes.size(); ++i) mask.at(i) = raw.bytes[i] / 255.0f;
  return mask;
}

void save_mask(const fs::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> buf(mask.pixel_count());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_u8(mask.at(i) * 255.0f);
  write_png(path, mask.width(), mask.height(), 1, buf);
}

ImageTensor fit_image(const ImageTensor& img, int size) {
  if (img.height() == size && img.width() == size) return img;
  const Crop crop = center_crop(img.width(), img.height());
  ImageTensor out(size, size, img.range());
  const double scale = static_cast<double>(crop.side) / size;
  for (int y = 0; y < size; ++y) {
    // Pixel-center aligned sampling, clamped at the crop border.
    const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, crop.side - 1.0);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, crop.side - 1);
    const double fy = sy - y0;
    for (int x = 0; x < size; ++x) {
      const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, crop.side - 1.0);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, crop.side - 1);
      const double fx = sx - x0;
      for (int c = 0; c < 3; ++c) {
        const double a = img.at(crop.y0 + y0, crop.x0 + x0, c);
        const double b = img.at(crop.y0 + y0, crop.x0 + x1, c);
        const double d = img.at(crop.y0 + y1, crop.x0 + x0, c);
        const double e = img.at(crop.y0 + y1, crop.x0 + x1, c);
        const double top = a + (b - a) * fx;
        const double bottom = d + (e - d) * fx;
        out.at(y, x, c) = static_cast<float>(top + (bottom - top) * fy);
      }
    }
  }
  return out;
}

IuvMap fit_iuv(const IuvMap& iuv, int size) {
  if (iuv.height() == size && iuv.width() == size) return iuv;
  const Crop crop = center_crop(iuv.width(), iuv.height());
  IuvMap out(size, size);
  for (int y = 0; y < size; ++y) {
    const int sy = std::min(crop.side - 1, static_cast<int>((y + 0.5) * crop.side / size));
    for (int x = 0; x < size; ++x) {
      const int sx = std::min(crop.side - 1, static_cast<int>((x + 0.5) * crop.side / size));
      const int yy = crop.y0 + sy, xx = crop.x0 + sx;
      out.set(y, x, iuv.part(yy, xx), iuv.u(yy, xx), iuv.v(yy, xx));
    }
  }
  return out;
}

BinaryMask fit_mask(const BinaryMask& mask, int size) {
  if (mask.height() == size && mask.width() == size) return mask;
  const Crop crop = center_crop(mask.width(), mask.height());
  BinaryMask out(size, size);
  for (int y = 0; y < size; ++y) {
    const int sy = std::min(crop.side - 1, static_cast<int>((y + 0.5) * crop.side / size));
    for (int x = 0; x < size; ++x) {
      const int sx = std::min(crop.side - 1, static_cast<int>((x + 0.5) * crop.side / size));
      out.at(y, x) = mask.at(crop.y0 + sy, crop.x0 + sx);
    }
  }
  return out;
}

}  // namespace m2e
