#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "m2e/image.hpp"
#include "m2e/rng.hpp"

namespace m2e {

// Dataset layout on disk:
//
//   <root>/<identity>/<outfit>/<pose>.image.png   RGB photo
//   <root>/<identity>/<outfit>/<pose>.iuv.png     dense pose, (part, U, V) bytes
//   <root>/<identity>/<outfit>/<pose>.mask.png    clothes parsing mask
//
// A record needs all three files.

struct SampleRecord {
  std::string identity;
  std::string outfit;
  std::string pose;
  std::string image_path;  // relative to the manifest root
  std::string iuv_path;
  std::string mask_path;   // empty when absent

  bool operator==(const SampleRecord&) const = default;
};

// Manifest text format, one record per line, tab separated:
//
//   #m2e-manifest 1
//   #root <directory>
//   #split <train|test>
//   <identity> <outfit> <pose> <image> <iuv> <mask or ->
struct Manifest {
  std::filesystem::path root;
  std::string split = "train";
  std::vector<SampleRecord> records;

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
  /// Throws InputError on an empty manifest or a duplicate (identity, outfit, pose).
  void validate() const;
};

struct ManifestBuild {
  Manifest manifest;
  std::vector<std::string> warnings;  // one per skipped incomplete entry
};

/// Scans `root`. Incomplete entries are skipped with a warning. Throws
/// InputError("empty manifest") when nothing complete is found and names the
/// path of any entry that exists but cannot be read.
ManifestBuild build_manifest(const std::filesystem::path& root, const std::string& split = "train");

void write_manifest(const std::filesystem::path& path, const Manifest& m);
/// A relative #root is resolved against the manifest's own directory.
Manifest read_manifest(const std::filesystem::path& path);

/// All ordered pairs with equal identity and outfit and different pose, in manifest order.
std::vector<std::pair<std::size_t, std::size_t>> pair_same_identity(const Manifest& m);

/// Endless stream of (model, person) record indices from different
/// identities: the model identity is uniform, the person identity uniform
/// among the rest, and each record uniform within its identity.
class UnpairedSampler {
 public:
  /// Throws InputError when the manifest holds fewer than two identities.
  UnpairedSampler(const Manifest& m, std::uint64_t seed);
  std::pair<std::size_t, std::size_t> next();

  const std::vector<std::string>& identities() const { return names_; }

 private:
  Rng rng_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> by_identity_;
};

/// A record loaded and fitted to the working resolution.
struct LoadedSample {
  ImageTensor image;  // unit_signed
  IuvMap iuv;
  BinaryMask mask;    // all zeros when the record has no mask
};

LoadedSample load_sample(const Manifest& m, const SampleRecord& r, int resolution);

struct FixtureSpec {
  std::uint64_t seed = 1;
  int identities = 8;
  int outfits = 1;
  int poses = 2;
  int size = 64;
};

/// Writes a procedural dataset under `dir`: articulated bodies built from
/// parallelogram parts with an analytic dense-pose parametrization, a
/// garment texture shared by every pose of an (identity, outfit), and the
/// garment's parsing mask. Byte-identical for equal specs.
void synth_fixture(const std::filesystem::path& dir, const FixtureSpec& spec);

/// In-memory form of one fixture sample, exposed for tests.
struct FixtureSample {
  ImageTensor image;  // byte range
  IuvMap iuv;
  BinaryMask mask;
};
FixtureSample render_fixture_sample(const FixtureSpec& spec, int identity, int outfit, int pose);

}  // namespace m2e
