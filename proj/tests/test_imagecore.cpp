#include <doctest.h>

#include <fstream>

#include "m2e/error.hpp"
#include "m2e/image.hpp"
#include "m2e/image_io.hpp"
#include "m2e/rng.hpp"
#include "support.hpp"

using namespace m2e;

namespace {

ImageTensor random_byte_image(int h, int w, std::uint64_t seed) {
  ImageTensor img(h, w, Range::Byte);
  Rng rng(seed);
  for (auto& v : img.values()) v = static_cast<float>(rng.uniform_index(256));
  return img;
}

IuvMap random_iuv(int h, int w, std::uint64_t seed) {
  IuvMap m(h, w);
  Rng rng(seed);
  for (std::size_t p = 0; p < m.pixel_count(); ++p) {
    const int part = static_cast<int>(rng.uniform_index(25));
    m.set(p, part, static_cast<float>(rng.uniform_index(256) / 255.0), static_cast<float>(rng.uniform_index(256) / 255.0));
  }
  return m;
}

}  // namespace

TEST_CASE("range conversion round trips") {
  const ImageTensor img = random_byte_image(5, 7, 1);
  const ImageTensor s = to_signed(img);
  CHECK(s.range() == Range::UnitSigned);
  CHECK(s.in_range());
  const ImageTensor back = quantize_bytes(to_byte(s));
  CHECK(back == img);
  CHECK_THROWS_AS(to_signed(s), InputError);
  CHECK_THROWS_AS(to_byte(img), InputError);
}

TEST_CASE("range endpoints map exactly") {
  ImageTensor img(1, 2, Range::Byte);
  img.set_pixel(0, {0, 0, 0});
  img.set_pixel(1, {255, 255, 255});
  const ImageTensor s = to_signed(img);
  CHECK(s.at(std::size_t{0}, 0) == -1.0f);
  CHECK(s.at(std::size_t{1}, 2) == 1.0f);
}

TEST_CASE("validate rejects out-of-range and non-finite values") {
  ImageTensor img(2, 2, Range::UnitSigned);
  CHECK_NOTHROW(img.validate());
  img.at(1, 1, 2) = 1.5f;
  CHECK_FALSE(img.in_range());
  CHECK_THROWS_AS(img.validate(), DomainError);
  img.at(1, 1, 2) = std::nanf("");
  CHECK_THROWS_AS(img.validate(), DomainError);
}

TEST_CASE("iuv map keeps background coordinates at zero") {
  IuvMap m(2, 2);
  m.set(0, 3, 0.25f, 0.75f);
  m.set(1, 0, 0.5f, 0.5f);
  CHECK(m.part(std::size_t{0}) == 3);
  CHECK(m.u(std::size_t{1}) == 0.0f);
  CHECK(m.v(std::size_t{1}) == 0.0f);
  CHECK(m.foreground_count() == 1);
  CHECK_THROWS_AS(m.set(2, 25, 0.1f, 0.1f), DomainError);
  CHECK_THROWS_AS(m.set(2, 4, 1.1f, 0.1f), DomainError);
}

TEST_CASE("mask helpers") {
  BinaryMask a(2, 2), b(2, 2);
  CHECK(mask_iou(a, b) == 1.0);
  a.at(std::size_t{0}) = 1;
  a.at(std::size_t{1}) = 1;
  b.at(std::size_t{1}) = 1;
  b.at(std::size_t{2}) = 1;
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  BinaryMask soft(1, 3);
  soft.at(std::size_t{0}) = 0.2f;
  soft.at(std::size_t{1}) = 0.5f;
  soft.at(std::size_t{2}) = 0.9f;
  CHECK_FALSE(soft.is_hard());
  const BinaryMask hard = soft.binarized(0.5f);
  CHECK(hard.is_hard());
  CHECK(hard.count_ones() == 2);

  ImageTensor img(1, 3, Range::Byte, 100.0f);
  const ImageTensor m = mask_apply(img, soft);
  CHECK(m.at(0, 0, 0) == doctest::Approx(20.0f));
  CHECK(m.at(0, 2, 1) == doctest::Approx(90.0f));
}

TEST_CASE("png round trips") {
  test::TempDir dir("imagecore_png");
  const ImageTensor img = random_byte_image(9, 13, 2);
  save_image(dir / "a.png", img);
  CHECK(load_image(dir / "a.png") == img);

  const IuvMap iuv = random_iuv(9, 13, 3);
  save_iuv(dir / "a.iuv.png", iuv);
  CHECK(load_iuv(dir / "a.iuv.png") == iuv);

  BinaryMask mask(9, 13);
  for (std::size_t p = 0; p < mask.pixel_count(); p += 3) mask.at(p) = 1.0f;
  save_mask(dir / "a.mask.png", mask);
  CHECK(load_mask(dir / "a.mask.png") == mask);
}

TEST_CASE("iuv quantization error is bounded by half a level") {
  IuvMap m(1, 50);
  Rng rng(4);
  for (std::size_t p = 0; p < m.pixel_count(); ++p) {
    m.set(p, 1 + static_cast<int>(rng.uniform_index(24)), static_cast<float>(rng.uniform01()),
          static_cast<float>(rng.uniform01()));
  }
  const IuvMap q = decode_iuv_raster(encode_iuv_raster(m));
  for (std::size_t p = 0; p < m.pixel_count(); ++p) {
    CHECK(q.part(p) == m.part(p));
    CHECK(std::abs(q.u(p) - m.u(p)) <= 1.0 / 510.0 + 1e-6);
    CHECK(std::abs(q.v(p) - m.v(p)) <= 1.0 / 510.0 + 1e-6);
  }
}

TEST_CASE("loader error mapping") {
  test::TempDir dir("imagecore_err");
  CHECK_THROWS_AS(load_image(dir / "absent.png"), InputError);
  {
    std::ofstream os(dir / "junk.png", std::ios::binary);
    os << "not a png";
  }
  CHECK_THROWS_AS(load_image(dir / "junk.png"), InputError);
  CHECK_THROWS_AS(load_iuv(dir / "junk.png"), DomainError);
  CHECK_THROWS_AS(load_iuv(dir / "absent.png"), InputError);

  // A raster whose part channel exceeds 24 is a corrupt dense pose.
  ImageTensor raster(2, 2, Range::Byte);
  raster.at(0, 0, 0) = 200;
  save_image(dir / "bad.iuv.png", raster);
  CHECK_THROWS_AS(load_iuv(dir / "bad.iuv.png"), DomainError);
}

TEST_CASE("fit helpers crop to square and resize") {
  const ImageTensor img = random_byte_image(20, 30, 5);
  const ImageTensor f = fit_image(img, 8);
  CHECK(f.height() == 8);
  CHECK(f.width() == 8);
  CHECK(f.in_range());
  // Same size input is unchanged.
  const ImageTensor sq = random_byte_image(8, 8, 6);
  CHECK(fit_image(sq, 8) == sq);

  const IuvMap iuv = random_iuv(20, 30, 7);
  const IuvMap fi = fit_iuv(iuv, 10);
  CHECK(fi.height() == 10);
  CHECK_NOTHROW(fi.validate());
  // Nearest sampling only produces parts present in the source.
  for (std::size_t p = 0; p < fi.pixel_count(); ++p) {
    bool found = false;
    for (std::size_t q = 0; q < iuv.pixel_count() && !found; ++q) found = iuv.part(q) == fi.part(p);
    CHECK(found);
  }
}
