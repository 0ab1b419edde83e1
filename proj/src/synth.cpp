// Procedural bodies for hermetic tests. Each body part is a parallelogram
// O + s*A + t*B, s, t in [0, 1), and its dense-pose coordinates are exactly
// (u, v) = (s, t). Limbs run t from the proximal joint to the distal end.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "m2e/data.hpp"
#include "m2e/error.hpp"
#include "m2e/image_io.hpp"

namespace m2e {

namespace {

struct Vec {
  double x = 0, y = 0;
};
Vec operator+(Vec a, Vec b) { return {a.x + b.x, a.y + b.y}; }
Vec operator-(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
Vec operator*(Vec a, double k) { return {a.x * k, a.y * k}; }

enum class Material { Garment, Skin, Pants };

struct PartShape {
  int part;
  Vec origin, a, b;
  Material material;
  double hem = 0.0;  // Pants parts wear the garment for t < hem
};

struct Palette {
  Rgb garment_a, garment_b, skin, pants;
  double freq_s, freq_t, phase;
};

constexpr Rgb kBackground{230.0f, 226.0f, 218.0f};

Rgb draw_color(Rng& rng) {
  return {static_cast<float>(rng.uniform(40, 215)), static_cast<float>(rng.uniform(40, 215)),
          static_cast<float>(rng.uniform(40, 215))};
}

Palette palette(const FixtureSpec& spec, int identity, int outfit) {
  Rng body(mix64(spec.seed ^ mix64(0x1000 + identity)));
  Rng cloth(mix64(spec.seed ^ mix64(0x2000 + identity * 97 + outfit)));
  Palette p;
  p.skin = draw_color(body);
  p.pants = draw_color(body);
  p.garment_a = draw_color(cloth);
  p.garment_b = draw_color(cloth);
  p.freq_s = cloth.uniform(0.5, 2.0);
  p.freq_t = cloth.uniform(1.0, 3.0);
  p.phase = cloth.uniform(0.0, 2.0 * std::numbers::pi);
  return p;
}

Rgb shade(const Palette& pal, Material m, int part, double s, double t) {
  switch (m) {
    case Material::Garment: {
      const double w = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (pal.freq_s * s + pal.freq_t * t) + pal.phase +
                                            0.7 * part);
      Rgb c;
      for (int k = 0; k < 3; ++k) c[k] = static_cast<float>(pal.garment_a[k] * w + pal.garment_b[k] * (1.0 - w));
      return c;
    }
    case Material::Skin: {
      Rgb c = pal.skin;
      for (auto& x : c) x = static_cast<float>(x * (0.9 + 0.1 * t));
      return c;
    }
    case Material::Pants: {
      Rgb c = pal.pants;
      for (auto& x : c) x = static_cast<float>(x * (0.85 + 0.15 * s));
      return c;
    }
  }
  return kBackground;
}

Vec dir_from_down(double degrees) {
  const double r = degrees * std::numbers::pi / 180.0;
  return {std::sin(r), std::cos(r)};
}

// Limb from `joint` along `dir`; returns the distal joint.
Vec limb(std::vector<PartShape>& out, int part, Vec joint, Vec dir, double length, double width, Material m,
         double hem = 0.0) {
  const Vec across{dir.y, -dir.x};
  out.push_back({part, joint - across * (width / 2), across * width, dir * length, m, hem});
  return joint + dir * length;
}

std::vector<PartShape> body_parts(const FixtureSpec& spec, int identity, int pose) {
  Rng build(mix64(spec.seed ^ mix64(0x3000 + identity)));
  Rng pr(mix64(spec.seed ^ mix64(0x4000 + identity * 131 + pose)));
  const double s = spec.size;
  const double girth = build.uniform(0.92, 1.08);
  const double cx = (0.5 + pr.uniform(-0.04, 0.04)) * s;
  const double top = (0.30 + pr.uniform(-0.02, 0.02)) * s;

  const double torso_w = 0.26 * girth * s, torso_h = 0.30 * s;
  const Vec torso_o{cx - torso_w / 2, top};
  std::vector<PartShape> parts;

  // Legs first so the torso and arms overlap them.
  const double hip_y = top + torso_h - 0.01 * s;
  for (int side : {-1, 1}) {
    const int upper = side < 0 ? 10 : 9;  // left / right upper leg, front
    const int lower = side < 0 ? 14 : 13;
    const double spread = pr.uniform(2.0, 14.0) * side;
    const Vec hip{cx + side * 0.065 * s * girth, hip_y};
    const Vec knee = limb(parts, upper, hip, dir_from_down(spread), 0.17 * s, 0.10 * s, Material::Pants, 0.3);
    limb(parts, lower, knee, dir_from_down(spread + pr.uniform(-8.0, 8.0)), 0.17 * s, 0.08 * s, Material::Pants);
  }

  parts.push_back({2, torso_o, {torso_w, 0}, {0, torso_h}, Material::Garment});

  for (int side : {-1, 1}) {
    const int upper = side < 0 ? 15 : 16;
    const int lower = side < 0 ? 19 : 20;
    const double raise = pr.uniform(12.0, 55.0) * side;
    const Vec shoulder{cx + side * (torso_w / 2 + 0.02 * s), top + 0.03 * s};
    const Vec elbow = limb(parts, upper, shoulder, dir_from_down(raise), 0.16 * s, 0.07 * s, Material::Garment);
    limb(parts, lower, elbow, dir_from_down(raise + pr.uniform(-25.0, 25.0)), 0.15 * s, 0.06 * s, Material::Skin);
  }

  const double head = 0.15 * s;
  parts.push_back({23, {cx - head / 2, top - head - 0.01 * s}, {head, 0}, {0, head}, Material::Skin});
  return parts;
}

float quantize_uv(double x) { return static_cast<float>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0) / 255.0); }

}  // namespace

FixtureSample render_fixture_sample(const FixtureSpec& spec, int identity, int outfit, int pose) {
  if (spec.size < 32) throw InputError("fixture size must be at least 32");
  const int n = spec.size;
  const Palette pal = palette(spec, identity, outfit);
  FixtureSample out{ImageTensor(n, n, Range::Byte), IuvMap(n, n), BinaryMask(n, n)};
  for (std::size_t p = 0; p < out.image.pixel_count(); ++p) out.image.set_pixel(p, kBackground);

  for (const PartShape& ps : body_parts(spec, identity, pose)) {
    const double det = ps.a.x * ps.b.y - ps.a.y * ps.b.x;
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const Vec d = Vec{x + 0.5, y + 0.5} - ps.origin;
        const double s = (d.x * ps.b.y - d.y * ps.b.x) / det;
        const double t = (ps.a.x * d.y - ps.a.y * d.x) / det;
        if (s < 0.0 || s >= 1.0 || t < 0.0 || t >= 1.0) continue;
        const Material m = (ps.material == Material::Pants && t < ps.hem) ? Material::Garment : ps.material;
        Rgb c = shade(pal, m, ps.part, s, t);
        for (auto& v : c) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 255.0f)));
        const std::size_t p = static_cast<std::size_t>(y) * n + x;
        out.image.set_pixel(p, c);
        out.iuv.set(p, ps.part, quantize_uv(s), quantize_uv(t));
        out.mask.at(p) = m == Material::Garment ? 1.0f : 0.0f;
      }
    }
  }
  return out;
}

void synth_fixture(const std::filesystem::path& dir, const FixtureSpec& spec) {
  if (spec.identities < 1 || spec.outfits < 1 || spec.poses < 1) throw InputError("fixture counts must be positive");
  for (int i = 0; i < spec.identities; ++i) {
    for (int o = 0; o < spec.outfits; ++o) {
      char id[32], of[32];
      std::snprintf(id, sizeof(id), "id%03d", i);
      std::snprintf(of, sizeof(of), "outfit%d", o);
      const auto folder = dir / id / of;
      std::filesystem::create_directories(folder);
      for (int p = 0; p < spec.poses; ++p) {
        const FixtureSample s = render_fixture_sample(spec, i, o, p);
        const std::string pose = "pose" + std::to_string(p);
        save_image(folder / (pose + ".image.png"), s.image);
        save_iuv(folder / (pose + ".iuv.png"), s.iuv);
        save_mask(folder / (pose + ".mask.png"), s.mask);
      }
    }
  }
}

}  // namespace m2e
