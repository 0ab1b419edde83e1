#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "m2e/config.hpp"
#include "m2e/data.hpp"
#include "m2e/training.hpp"

namespace m2e {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDomain = 3;
inline constexpr int kExitMissingState = 4;

struct CommandResult {
  int exit_code = kExitOk;
  std::vector<std::filesystem::path> artifacts;
  std::string summary;
};

/// InputError -> 2; DomainError and TrainingError -> 3; MissingStateError -> 4; anything else -> 2.
int exit_code_for(const std::exception& e);
/// Runs `body`, turning any exception into a failed CommandResult carrying its message.
CommandResult guarded(const std::function<CommandResult()>& body);

/// <M2E_RUN_DIR or "runs">/<name>; an absolute name is used as is.
std::filesystem::path run_dir_for(const std::string& run_name);

/// Defaults, then the optional config file, then key=value overrides in order.
TrainConfig resolve_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides);

struct ManifestArgs {
  std::filesystem::path root;
  std::filesystem::path out;
  std::string split = "train";
};
CommandResult cmd_make_manifest(const ManifestArgs& args);

struct FixtureArgs {
  std::filesystem::path out;
  FixtureSpec spec;
};
CommandResult cmd_make_fixture(const FixtureArgs& args);

/// Writes M'_W to `out` and the coverage mask beside it as <stem>.covered.png.
struct WarpArgs {
  std::filesystem::path model_img, model_iuv, person_iuv, out;
};
CommandResult cmd_warp(const WarpArgs& args);

/// `stage` is pan, trn, ftn, roi or all (roi, pan, trn, ftn in dependency order).
struct TrainArgs {
  std::string stage;
  std::optional<std::filesystem::path> config;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::filesystem::path manifest;
  std::string run_name;
};
CommandResult cmd_train(const TrainArgs& args);

/// Writes output.png and, with save_intermediates, warped, aligned, merged,
/// refined and roi PNGs into out_dir (default <run>/tryon).
struct TryOnArgs {
  std::filesystem::path model_img, person_img, model_iuv, person_iuv;
  std::optional<std::filesystem::path> parsing;
  std::string run_name;
  std::optional<std::filesystem::path> out_dir;
  bool save_intermediates = false;
  std::optional<std::filesystem::path> config;
  std::vector<std::pair<std::string, std::string>> overrides;
};
CommandResult cmd_tryon(const TryOnArgs& args);

// ---------------------------------------------------------------- gallery

inline constexpr int kGalleryPanels = 7;

struct GalleryRow {
  std::size_t model = 0;   // manifest record indices
  std::size_t person = 0;
  ImageTensor model_img;   // unit-signed, at pipeline resolution
  ImageTensor person_img;
  TryOnResult result;
};

/// Rows drawn by an UnpairedSampler seeded with `seed`; each runs the full pipeline.
std::vector<GalleryRow> gallery_rows(Pipeline& nets, const Manifest& m, int rows, std::uint64_t seed,
                                     bool passthrough);
/// Panels left to right: M, P, M'_W, M'_A, M^, M'_R, P' (byte range).
ImageTensor tile_row(const GalleryRow& row);

struct GalleryArgs {
  std::filesystem::path manifest;
  std::string run_name;
  std::filesystem::path out_dir;
  int rows = 5;
  std::optional<std::filesystem::path> config;
  std::vector<std::pair<std::string, std::string>> overrides;
};
/// Writes row_000.png ... and index.html into out_dir.
CommandResult cmd_eval_gallery(const GalleryArgs& args);

}  // namespace m2e
