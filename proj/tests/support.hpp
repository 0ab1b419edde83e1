#pragma once

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "m2e/nn/tensor.hpp"
#include "m2e/rng.hpp"

namespace m2e::test {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("m2e_" + tag + "_" + std::to_string(std::hash<std::string>{}(tag + std::to_string(counter()++))));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

template <typename T>
nn::Tensor<T> random_tensor(nn::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  nn::Tensor<T> t(s);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Central differences of `f` at `x`, compared element-wise against `analytic`
// with relative tolerance `rel` wherever |analytic| > floor; elsewhere the
// numeric derivative must vanish too.
inline void check_gradient(const std::function<double(const nn::Tensor<double>&)>& f, nn::Tensor<double> x,
                           const nn::Tensor<double>& analytic, double step = 1e-3, double rel = 1e-3,
                           double floor = 1e-6) {
  REQUIRE(analytic.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f(x);
    x[i] = keep - step;
    const double down = f(x);
    x[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    if (std::abs(analytic[i]) <= floor) {
      INFO("element " << i << ": analytic ~0, numeric " << numeric);
      CHECK(std::abs(numeric) <= 1e-5);
      continue;
    }
    const double err = std::abs(numeric - analytic[i]) / std::max(std::abs(analytic[i]), std::abs(numeric));
    INFO("element " << i << ": analytic " << analytic[i] << " numeric " << numeric);
    CHECK(err <= rel);
  }
}

}  // namespace m2e::test
