#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "m2e/data.hpp"
#include "m2e/error.hpp"
#include "m2e/image_io.hpp"
#include "m2e/uvwarp.hpp"
#include "support.hpp"

using namespace m2e;
namespace fs = std::filesystem;

namespace {

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

SampleRecord rec(const std::string& id, const std::string& outfit, const std::string& pose) {
  return {id, outfit, pose, id + "/" + outfit + "/" + pose + ".image.png", id + "/" + outfit + "/" + pose + ".iuv.png",
          ""};
}

}  // namespace

TEST_CASE("manifest from a fixture tree") {
  test::TempDir dir("data_fixture");
  FixtureSpec spec;
  spec.identities = 4;
  spec.poses = 2;
  spec.size = 32;
  synth_fixture(dir.path(), spec);
  ManifestBuild b = build_manifest(dir.path());
  CHECK(b.manifest.records.size() == 8);
  CHECK(b.warnings.empty());

  SUBCASE("an entry missing its dense pose is skipped with a warning") {
    fs::remove(dir / "id001/outfit0/pose1.iuv.png");
    b = build_manifest(dir.path());
    CHECK(b.manifest.records.size() == 7);
    REQUIRE(b.warnings.size() == 1);
    CHECK(b.warnings[0].find("pose1.iuv.png") != std::string::npos);
  }
  SUBCASE("an unreadable file is named") {
    { std::ofstream(dir / "id002/outfit0/pose0.mask.png", std::ios::trunc); }
    try {
      build_manifest(dir.path());
      FAIL("expected an error");
    } catch (const InputError& e) {
      CHECK(std::string(e.what()).find("pose0.mask.png") != std::string::npos);
    }
  }
  SUBCASE("every record loads and passes the identity warp") {
    for (const auto& r : b.manifest.records) {
      const LoadedSample s = load_sample(b.manifest, r, 32);
      CHECK(s.image.range() == Range::UnitSigned);
      CHECK_NOTHROW(s.iuv.validate());
      CHECK(s.mask.is_hard());
      CHECK(s.mask.count_ones() > 0);
      const WarpResult w = warp(build_uv_index(to_byte(s.image), s.iuv), s.iuv);
      double worst = 0;
      for (std::size_t p = 0; p < w.covered.pixel_count(); ++p) {
        if (w.covered.at(p) == 0.0f) continue;
        for (int c = 0; c < 3; ++c) worst = std::max(worst, double(std::abs(w.warped.at(p, c) - to_byte(s.image).at(p, c))));
      }
      CHECK(worst <= 2.0);
    }
  }
}

TEST_CASE("empty directory is an empty manifest") {
  test::TempDir dir("data_empty");
  try {
    build_manifest(dir.path());
    FAIL("expected an error");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()) == "empty manifest");
  }
  CHECK_THROWS_AS(build_manifest(dir / "absent"), InputError);
}

TEST_CASE("manifest text round trip") {
  test::TempDir dir("data_manifest");
  Manifest m;
  m.root = dir.path();
  m.split = "test";
  m.records = {rec("a", "o", "p0"), rec("a", "o", "p1"), rec("b", "o", "p0")};
  m.records[1].mask_path = "a/o/p1.mask.png";
  write_manifest(dir / "m.txt", m);
  const Manifest back = read_manifest(dir / "m.txt");
  CHECK(back.split == "test");
  CHECK(back.records == m.records);
  CHECK(fs::equivalent(back.root, m.root));

  // Relative roots resolve against the manifest's own directory.
  {
    std::ofstream os(dir / "rel.txt");
    os << "#m2e-manifest 1\n#root .\n#split train\na\to\tp\ti.png\tv.png\t-\n";
  }
  const Manifest rel = read_manifest(dir / "rel.txt");
  CHECK(fs::equivalent(rel.root, dir.path()));
  CHECK(rel.records[0].mask_path.empty());

  {
    std::ofstream os(dir / "bad.txt");
    os << "#m2e-manifest 1\na\to\tp\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "bad.txt"), InputError);
  {
    std::ofstream os(dir / "noheader.txt");
    os << "a\to\tp\ti\tv\t-\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "noheader.txt"), InputError);

  Manifest dup = m;
  dup.records.push_back(rec("a", "o", "p0"));
  CHECK_THROWS_AS(dup.validate(), InputError);
  CHECK_THROWS_AS(Manifest{}.validate(), InputError);
}

TEST_CASE("same-identity pairing") {
  Manifest m;
  m.records = {rec("a", "o", "x"), rec("a", "o", "y")};
  auto pairs = pair_same_identity(m);
  using P = std::pair<std::size_t, std::size_t>;
  CHECK(pairs == std::vector<P>{{0, 1}, {1, 0}});

  m.records = {rec("a", "o", "x")};
  CHECK(pair_same_identity(m).empty());

  m.records = {rec("a", "o", "x"), rec("b", "o", "x"), rec("a", "o", "y"), rec("b", "o", "y")};
  pairs = pair_same_identity(m);
  CHECK(pairs.size() == 4);
  for (auto [i, j] : pairs) {
    CHECK(m.records[i].identity == m.records[j].identity);
    CHECK(m.records[i].pose != m.records[j].pose);
  }

  // Outfits separate groups; sum of k(k-1) over (identity, outfit).
  m.records = {rec("a", "o1", "x"), rec("a", "o1", "y"), rec("a", "o1", "z"), rec("a", "o2", "x"), rec("a", "o2", "y")};
  CHECK(pair_same_identity(m).size() == 3 * 2 + 2 * 1);
}

TEST_CASE("unpaired sampler") {
  Manifest m;
  const int ids = 6;
  for (int i = 0; i < ids; ++i) {
    // Uneven record counts must not bias the identity distribution.
    for (int p = 0; p <= i % 3; ++p) m.records.push_back(rec("id" + std::to_string(i), "o", "p" + std::to_string(p)));
  }
  UnpairedSampler a(m, 9), b(m, 9), c(m, 10);
  bool differs = false;
  for (int k = 0; k < 100; ++k) {
    const auto x = a.next(), y = b.next(), z = c.next();
    CHECK(x == y);
    differs |= x != z;
  }
  CHECK(differs);

  UnpairedSampler s(m, 3);
  std::map<std::string, int> model_count, person_count;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const auto [mi, pi] = s.next();
    CHECK(m.records[mi].identity != m.records[pi].identity);
    ++model_count[m.records[mi].identity];
    ++person_count[m.records[pi].identity];
  }
  // Chi-square against uniform, 5 degrees of freedom; 20.5 is the 0.999 quantile.
  for (const auto* counts : {&model_count, &person_count}) {
    REQUIRE(counts->size() == ids);
    double chi2 = 0;
    const double expect = double(draws) / ids;
    for (const auto& [id, n] : *counts) {
      chi2 += (n - expect) * (n - expect) / expect;
      CHECK(std::abs(n - expect) <= 0.05 * expect);
    }
    CHECK(chi2 < 20.5);
  }

  Manifest single;
  single.records = {rec("a", "o", "x"), rec("a", "o", "y")};
  CHECK_THROWS_AS(UnpairedSampler(single, 1), InputError);
}

TEST_CASE("fixture generation is byte-identical for equal specs") {
  test::TempDir a("data_fx_a"), b("data_fx_b"), c("data_fx_c");
  FixtureSpec spec;
  spec.identities = 2;
  spec.size = 32;
  synth_fixture(a.path(), spec);
  synth_fixture(b.path(), spec);
  spec.seed = 2;
  synth_fixture(c.path(), spec);
  int files = 0;
  bool any_diff = false;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a.path());
    CHECK(slurp(e.path()) == slurp(b.path() / rel));
    any_diff |= slurp(e.path()) != slurp(c.path() / rel);
    ++files;
  }
  CHECK(files == 2 * 2 * 3);
  CHECK(any_diff);
}

TEST_CASE("fixture poses share the garment texture") {
  FixtureSpec spec;
  spec.size = 64;
  const FixtureSample p0 = render_fixture_sample(spec, 3, 0, 0);
  const FixtureSample p1 = render_fixture_sample(spec, 3, 0, 1);
  CHECK_NOTHROW(p0.iuv.validate());
  CHECK(p0.image.in_range());
  CHECK_FALSE(p0.iuv == p1.iuv);
  // Warping one pose onto the other recovers the second pose's garment where both are covered.
  const WarpResult w = warp(build_uv_index(p0.image, p0.iuv), p1.iuv);
  double err = 0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < w.covered.pixel_count(); ++p) {
    if (w.covered.at(p) == 0.0f || p1.mask.at(p) == 0.0f) continue;
    for (int c = 0; c < 3; ++c) err += std::abs(w.warped.at(p, c) - p1.image.at(p, c));
    n += 3;
  }
  REQUIRE(n > 0);
  CHECK(err / n < 20.0);
}
