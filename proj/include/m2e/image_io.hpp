#pragma once

#include <filesystem>

#include "m2e/image.hpp"

namespace m2e {

// All rasters are PNG. IUV maps are stored as 8-bit RGB with channel order
// (part, U, V) and U, V quantized as round(255 * value); the dequantization
// error is at most 1/510. Masks are single-channel 8-bit PNGs, 255 = 1.0.

/// Reads an 8-bit RGB PNG as a byte-range image.
/// Throws InputError on a missing file, undecodable content or a channel count other than 3.
ImageTensor load_image(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Unit-signed images are mapped back to bytes first; values are rounded.
void save_image(const std::filesystem::path& path, const ImageTensor& img);

/// Throws InputError on a missing file and DomainError on an undecodable
/// raster or a part index above 24. Background pixels come back with u = v = 0.
IuvMap load_iuv(const std::filesystem::path& path);
void save_iuv(const std::filesystem::path& path, const IuvMap& iuv);

/// Quantized (part, U, V) raster round trip without file I/O.
ImageTensor encode_iuv_raster(const IuvMap& iuv);
IuvMap decode_iuv_raster(const ImageTensor& raster);

BinaryMask load_mask(const std::filesystem::path& path);
/// Soft values are rounded to the nearest byte.
void save_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Center-crops to a square, then resizes to size x size (bilinear).
ImageTensor fit_image(const ImageTensor& img, int size);
/// Center-crops, then resizes with nearest sampling so part indices survive.
IuvMap fit_iuv(const IuvMap& iuv, int size);
BinaryMask fit_mask(const BinaryMask& mask, int size);

}  // namespace m2e
