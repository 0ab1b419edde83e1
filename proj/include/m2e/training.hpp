#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "m2e/config.hpp"
#include "m2e/data.hpp"
#include "m2e/extractor.hpp"
#include "m2e/losses.hpp"
#include "m2e/networks.hpp"
#include "m2e/nn/optim.hpp"
#include "m2e/nn/param_file.hpp"
#include "m2e/uvwarp.hpp"

namespace m2e {

/// $M2E_RUN_DIR when set, otherwise "runs".
std::filesystem::path default_run_root();

/// Independent random streams of one stage, all derived from the run seed.
enum class SeedSalt : std::uint64_t { GenInit = 1, DiscInit = 2, PairOrder = 3, Unpaired = 4 };
std::uint64_t derive_seed(std::uint64_t seed, SeedSalt salt, Stage stage);

// ------------------------------------------------------------ reporting

struct ReportTerm {
  std::string name;
  double value = 0.0;
  double weight = 0.0;
};

struct BranchReport {
  Branch branch = Branch::Paired;
  std::vector<ReportTerm> terms;  // names and order from branch_terms()

  const ReportTerm* find(const std::string& name) const;
};

struct LossReport {
  std::vector<BranchReport> branches;
  const BranchReport* branch(Branch b) const;
};

// Line-delimited telemetry: "step<TAB>stage<TAB>term<TAB>value", value as %.9g.
class Telemetry {
 public:
  /// Opens `path` and drops any earlier records of `stage`, so reruns replace rather than append.
  Telemetry(const std::filesystem::path& path, Stage stage);
  void record(std::int64_t step, const std::string& term, double value);

 private:
  std::filesystem::path path_;
  std::string stage_;
};

// ------------------------------------------------------------ one update

/// One branch batch: generator input (N, C, H, W), ground truth (N, 3, H, W)
/// and the ground truth's encoded dense pose (N, 3, H, W).
struct StageBatch {
  TensorF input;
  TensorF target;
  TensorF target_iuv;
};

struct StageNets {
  Generator& gen;
  Discriminator& disc;
  nn::Adam& gen_opt;
  nn::Adam& disc_opt;
  FeatureExtractor<float>& extractor;
};

/// For each non-null batch: one discriminator update on (target, iuv) versus
/// the detached fake, then one generator update. The unpaired branch uses the
/// adversarial term only; the paired branch adds l1, l2, perceptual and style.
/// Throws TrainingError when a term is NaN or above cfg.abort_threshold.
LossReport joint_step(StageNets& nets, const StageBatch* paired, const StageBatch* unpaired, const TrainConfig& cfg);

// ----------------------------------------------------------- checkpoints

// Checkpoints are parameter files at <run>/ckpt/<stage>_<epoch> holding
// "gen/...", "disc/..." and Adam moments "adam.gen.m/...", "adam.gen.v/...",
// "adam.disc.m/...", "adam.disc.v/..."; metadata carries stage, epoch, step,
// Adam step counts and the full config as "config.<key>".
struct Checkpoint {
  Stage stage = Stage::Pan;
  int epoch = 0;
  std::int64_t step = 0;
  TrainConfig config;
  nn::ParamFile params;
  std::filesystem::path path;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, Stage stage, int epoch);
/// Highest-epoch checkpoint of `stage`, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir, Stage stage);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Latest checkpoint of `stage`; throws MissingStateError("missing upstream checkpoint: <stage>") when absent.
Checkpoint require_checkpoint(const std::filesystem::path& run_dir, Stage stage);
/// Rebuilds the generator described by the checkpoint's own config and loads its weights.
std::unique_ptr<Generator> restore_generator(const Checkpoint& ckpt);

// -------------------------------------------------------------- pipeline

/// Frozen networks of a trained run. Missing stages stay null.
struct Pipeline {
  std::unique_ptr<Generator> pan, trn, roi, ftn;
  int resolution = 0;  // shared training resolution of the loaded stages
};

/// Loads the listed stages from `run_dir`; throws MissingStateError on the first absent one
/// and InputError when their resolutions disagree.
Pipeline load_pipeline(const std::filesystem::path& run_dir, const std::vector<Stage>& stages);

struct TryOnResult {
  ImageTensor warped;       // M'_W
  BinaryMask covered;
  ImageTensor aligned;      // M'_A
  BinaryMask region;        // R
  ImageTensor merged;       // M^
  ImageTensor refined;      // M'_R
  BinaryMask roi_soft;
  BinaryMask roi;           // P_RoI, hard
  ImageTensor garment;      // M^'_R
  ImageTensor person_rest;  // P^
  ImageTensor output;       // P'
  std::optional<BinaryMask> union_mask;  // clothes-parsing union, when a parsing mask was given
};

/// warp -> PAN -> merge -> TRN -> RoI -> split -> FTN. With `passthrough`,
/// pixels outside the hard RoI are copied from the person image.
TryOnResult infer_tryon(Pipeline& nets, const ImageTensor& model, const ImageTensor& person, const IuvMap& model_iuv,
                        const IuvMap& person_iuv, const BinaryMask* parsing, bool passthrough);

// -------------------------------------------------------------- training

struct StageResult {
  std::filesystem::path checkpoint;
  std::uint64_t checkpoint_checksum = 0;
  std::uint64_t gen_checksum = 0;
  std::int64_t steps = 0;
  int epochs = 0;
  /// Terms per iteration ("paired.l1", "unpaired.d_loss", ... or "l1" for the RoI stage).
  std::vector<std::map<std::string, double>> history;
  /// Whole-set evaluations: "paired_l1_initial"/"paired_l1_final" for the
  /// generator stages, "l1_initial"/"l1_final"/"iou_initial"/"iou_final" for the RoI stage.
  std::map<std::string, double> metrics;
};

/// Trains one stage and writes its checkpoints and telemetry under `run_dir`.
/// Upstream stages (TRN: PAN; FTN: PAN, TRN and RoI) are loaded frozen; a
/// missing one raises MissingStateError before any work is done.
StageResult train_stage(Stage stage, const TrainConfig& cfg, const Manifest& manifest,
                        const std::filesystem::path& run_dir);

/// The RoI stage: L1 against union masks of parsing and upper-body dense-pose parts.
StageResult train_roi(const TrainConfig& cfg, const Manifest& manifest, const std::filesystem::path& run_dir);

}  // namespace m2e
