#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "m2e/losses.hpp"
#include "m2e/networks.hpp"

namespace m2e {

// Key-value configuration. File syntax: one `key = value` per line, `#`
// starts a comment. Every key can also be given on the command line, which
// wins over the file.
struct TrainConfig {
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.99;

  int epochs_pan = 80;
  int epochs_trn = 50;
  int epochs_ftn = 50;
  int epochs_roi = 20;
  // When positive, a stage runs exactly this many iterations instead of its epochs.
  int iterations_pan = 0;
  int iterations_trn = 0;
  int iterations_ftn = 0;
  int iterations_roi = 0;

  int batch_size = 4;
  std::uint64_t seed = 1;
  int resolution = 256;
  LossWeights weights;
  int paired_steps = 1;    // paired steps per alternation cycle
  int unpaired_steps = 1;  // unpaired steps per alternation cycle

  int gen_width = 64;
  int gen_blocks = 6;
  int disc_width = 64;
  int disc_stages = 3;
  int extractor_width = 64;
  std::string extractor_weights;  // empty: fixed-seed random extractor

  int threads = 0;  // 0: OpenMP default
  bool composite_passthrough = true;
  int checkpoint_every = 10;  // epochs between intermediate checkpoints; 0 keeps only the final one
  double abort_threshold = 1e4;

  /// Throws InputError on an unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);
  /// Every key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Throws InputError on an invalid combination (non-positive batch, bad resolution, ...).
  void validate() const;

  int epochs(Stage s) const;
  int iterations(Stage s) const;
  GeneratorSpec generator_spec(Stage s) const;
  DiscriminatorSpec discriminator_spec() const;
};

TrainConfig load_config(const std::filesystem::path& path);
/// Applies `key = value` lines from `path` on top of `cfg`.
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& cfg);

/// Settings for the 64x64 toy runs used by the acceptance checks and tests.
TrainConfig toy_config();

}  // namespace m2e
