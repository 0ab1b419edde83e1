#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "m2e/config.hpp"
#include "m2e/error.hpp"
#include "m2e/training.hpp"
#include "support.hpp"

using namespace m2e;
namespace fs = std::filesystem;
using test::random_tensor;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg = toy_config();
  cfg.resolution = 32;
  cfg.batch_size = 2;
  cfg.gen_width = 4;
  cfg.gen_blocks = 1;
  cfg.disc_width = 4;
  cfg.extractor_width = 2;
  cfg.iterations_roi = 2;
  cfg.iterations_pan = 2;
  cfg.iterations_trn = 2;
  cfg.iterations_ftn = 2;
  cfg.threads = 1;
  return cfg;
}

// One fixture tree and manifest shared by the cases that need data on disk.
struct Fixture {
  test::TempDir dir{"training_fixture"};
  Manifest manifest;
  Fixture() {
    FixtureSpec spec;
    spec.identities = 3;
    spec.poses = 2;
    spec.size = 32;
    synth_fixture(dir / "data", spec);
    manifest = build_manifest(dir / "data").manifest;
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct BranchRig {
  TrainConfig cfg = tiny_config();
  Generator gen{Stage::Pan, cfg.generator_spec(Stage::Pan)};
  Discriminator disc{cfg.discriminator_spec()};
  nn::Adam gen_opt{gen.named_parameters(), nn::AdamConfig{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8}};
  nn::Adam disc_opt{disc.named_parameters(), nn::AdamConfig{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8}};
  FeatureExtractor<float> extractor{2, 5};
  StageNets nets{gen, disc, gen_opt, disc_opt, extractor};
  StageBatch batch{random_tensor<float>({2, 12, 32, 32}, 1), random_tensor<float>({2, 3, 32, 32}, 2),
                   random_tensor<float>({2, 3, 32, 32}, 3)};

  BranchRig() {
    init_weights(gen, 1);
    init_weights(disc, 2);
  }
};

std::vector<std::string> names(const BranchReport& b) {
  std::vector<std::string> out;
  for (const auto& t : b.terms) out.push_back(t.name);
  return out;
}

}  // namespace

TEST_CASE("unpaired branch reports only adversarial terms") {
  BranchRig rig;
  const LossReport r = joint_step(rig.nets, nullptr, &rig.batch, rig.cfg);
  REQUIRE(r.branches.size() == 1);
  REQUIRE(r.branch(Branch::Unpaired) != nullptr);
  CHECK(r.branch(Branch::Paired) == nullptr);
  CHECK(names(*r.branch(Branch::Unpaired)) == std::vector<std::string>{"d_loss", "g_gan"});
  for (const char* pixel : {"l1", "l2", "perc", "style"}) CHECK(r.branch(Branch::Unpaired)->find(pixel) == nullptr);
}

TEST_CASE("paired branch adds pixel similarity terms with their weights") {
  BranchRig rig;
  const LossReport r = joint_step(rig.nets, &rig.batch, nullptr, rig.cfg);
  const BranchReport* b = r.branch(Branch::Paired);
  REQUIRE(b != nullptr);
  CHECK(names(*b) == std::vector<std::string>{"d_loss", "g_gan", "l1", "l2", "perc", "style"});
  const LossWeights& w = rig.cfg.weights;
  CHECK(b->find("g_gan")->weight == w.gan);
  CHECK(b->find("l1")->weight == w.l1);
  CHECK(b->find("l2")->weight == w.l2);
  CHECK(b->find("perc")->weight == w.perc);
  CHECK(b->find("style")->weight == w.style);
  for (const auto& t : b->terms) CHECK(std::isfinite(t.value));
  // l1 of the step's generator output against the target is a mean absolute difference of [-1, 1] images.
  CHECK(b->find("l1")->value > 0.0);
  CHECK(b->find("l1")->value <= 2.0);
}

TEST_CASE("joint steps are deterministic and alternate paired then unpaired") {
  BranchRig a, b;
  for (int i = 0; i < 3; ++i) {
    const LossReport ra = joint_step(a.nets, &a.batch, &a.batch, a.cfg);
    const LossReport rb = joint_step(b.nets, &b.batch, &b.batch, b.cfg);
    REQUIRE(ra.branches.size() == 2);
    CHECK(ra.branches[0].branch == Branch::Paired);
    CHECK(ra.branches[1].branch == Branch::Unpaired);
    for (std::size_t k = 0; k < 2; ++k) {
      for (std::size_t t = 0; t < ra.branches[k].terms.size(); ++t) {
        CHECK(ra.branches[k].terms[t].value == rb.branches[k].terms[t].value);
      }
    }
  }
  CHECK(nn::parameter_checksum(a.gen) == nn::parameter_checksum(b.gen));
  CHECK(nn::parameter_checksum(a.disc) == nn::parameter_checksum(b.disc));
  CHECK(a.gen_opt.steps() == 6);
}

TEST_CASE("a loss above the abort threshold names the term") {
  BranchRig rig;
  rig.cfg.abort_threshold = 1e-9;
  try {
    joint_step(rig.nets, nullptr, &rig.batch, rig.cfg);
    FAIL("expected an abort");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("d_loss") != std::string::npos);
  }
  // Non-finite batches are rejected before any loss is formed.
  BranchRig nan;
  nan.batch.target[7] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(joint_step(nan.nets, &nan.batch, nullptr, nan.cfg), DomainError);
}

TEST_CASE("config file, keys and validation") {
  test::TempDir dir("training_config");
  TrainConfig cfg = tiny_config();
  cfg.set("learning_rate", "0.001");
  cfg.set("w_style", "3");
  CHECK(cfg.learning_rate == 0.001);
  CHECK(cfg.weights.style == 3.0);
  CHECK_THROWS_AS(cfg.set("no_such_key", "1"), InputError);
  CHECK_THROWS_AS(cfg.set("batch_size", "two"), InputError);
  save_config(dir / "c.txt", cfg);
  const TrainConfig back = load_config(dir / "c.txt");
  CHECK(back.entries() == cfg.entries());

  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = cfg;
  bad.resolution = 30;
  CHECK_THROWS_AS(bad.validate(), InputError);

  const TrainConfig d;
  CHECK(d.learning_rate == 2e-4);
  CHECK(d.adam_beta1 == 0.5);
  CHECK(d.adam_beta2 == 0.99);
  CHECK(d.epochs(Stage::Pan) == 80);
  CHECK(d.epochs(Stage::Trn) == 50);
  CHECK(d.epochs(Stage::Ftn) == 50);
  CHECK(d.abort_threshold == 1e4);
}

TEST_CASE("run root follows the environment") {
  const char* keep = std::getenv("M2E_RUN_DIR");
  const std::string saved = keep ? keep : "";
  ::setenv("M2E_RUN_DIR", "/tmp/m2e_runs_here", 1);
  CHECK(default_run_root() == fs::path("/tmp/m2e_runs_here"));
  ::unsetenv("M2E_RUN_DIR");
  CHECK(default_run_root() == fs::path("runs"));
  if (keep) ::setenv("M2E_RUN_DIR", saved.c_str(), 1);
}

TEST_CASE("telemetry reruns replace the stage's records") {
  test::TempDir dir("training_telemetry");
  const fs::path p = dir / "t.tsv";
  {
    Telemetry t(p, Stage::Pan);
    t.record(0, "l1", 0.5);
    t.record(1, "l1", 0.25);
  }
  {
    Telemetry t(p, Stage::Trn);
    t.record(0, "l1", 1.0 / 3.0);
  }
  {
    Telemetry t(p, Stage::Pan);
    t.record(0, "l1", 0.125);
  }
  CHECK(slurp(p) == "0\ttrn\tl1\t0.333333333\n0\tpan\tl1\t0.125\n");
}

TEST_CASE("stage training, checkpoints and the frozen pipeline") {
  Fixture& fx = fixture();
  test::TempDir run("training_run");
  const TrainConfig cfg = tiny_config();

  SUBCASE("later stages need their upstream checkpoints") {
    try {
      train_stage(Stage::Ftn, cfg, fx.manifest, run.path());
      FAIL("expected missing state");
    } catch (const MissingStateError& e) {
      CHECK(std::string(e.what()).find("missing upstream checkpoint") != std::string::npos);
    }
    CHECK_THROWS_AS(train_stage(Stage::Trn, cfg, fx.manifest, run.path()), MissingStateError);
    CHECK_FALSE(fs::exists(run / "ckpt"));
  }

  SUBCASE("zero iterations leave the initialization") {
    TrainConfig zero = cfg;
    zero.iterations_pan = 0;
    zero.epochs_pan = 0;
    const StageResult r = train_stage(Stage::Pan, zero, fx.manifest, run.path());
    CHECK(r.steps == 0);
    Generator init(Stage::Pan, zero.generator_spec(Stage::Pan));
    init_weights(init, derive_seed(zero.seed, SeedSalt::GenInit, Stage::Pan));
    const Checkpoint ck = load_checkpoint(r.checkpoint);
    CHECK(nn::parameter_checksum(*restore_generator(ck)) == nn::parameter_checksum(init));
  }

  SUBCASE("checkpoint round trip reproduces forward outputs exactly") {
    const StageResult r = train_stage(Stage::Pan, cfg, fx.manifest, run.path());
    CHECK(r.steps == 2);
    CHECK(r.checkpoint == checkpoint_path(run.path(), Stage::Pan, r.epochs));
    CHECK(latest_checkpoint(run.path(), Stage::Pan) == r.checkpoint);
    const Checkpoint ck = load_checkpoint(r.checkpoint);
    CHECK(ck.stage == Stage::Pan);
    CHECK(ck.step == 2);
    CHECK(ck.config.entries() == cfg.entries());
    CHECK(ck.params.checksum == r.checkpoint_checksum);
    CHECK(ck.params.find("adam.gen.m/enc0.weight") != nullptr);
    auto g1 = restore_generator(ck);
    CHECK(nn::parameter_checksum(*g1) == r.gen_checksum);
    auto g2 = restore_generator(load_checkpoint(r.checkpoint));
    const TensorF x = random_tensor<float>({1, 12, 32, 32}, 4);
    CHECK(g1->forward(x) == g2->forward(x));
    for (auto& np : g1->named_parameters()) CHECK_FALSE(np.param->requires_grad);
  }

  SUBCASE("full pipeline") {
    const StageResult roi = train_roi(cfg, fx.manifest, run.path());
    CHECK(roi.metrics.count("iou_final") == 1);
    train_stage(Stage::Pan, cfg, fx.manifest, run.path());
    const StageResult trn = train_stage(Stage::Trn, cfg, fx.manifest, run.path());
    const std::uint64_t pan_file = load_checkpoint(*latest_checkpoint(run.path(), Stage::Pan)).params.checksum;
    const std::uint64_t trn_file = load_checkpoint(*latest_checkpoint(run.path(), Stage::Trn)).params.checksum;
    Pipeline before = load_pipeline(run.path(), {Stage::Pan, Stage::Trn});
    const auto pan_sum = nn::parameter_checksum(*before.pan), trn_sum = nn::parameter_checksum(*before.trn);
    CHECK(trn_sum == trn.gen_checksum);

    const StageResult ftn = train_stage(Stage::Ftn, cfg, fx.manifest, run.path());
    CHECK(ftn.steps == 2);
    CHECK(load_checkpoint(*latest_checkpoint(run.path(), Stage::Pan)).params.checksum == pan_file);
    CHECK(load_checkpoint(*latest_checkpoint(run.path(), Stage::Trn)).params.checksum == trn_file);
    Pipeline after = load_pipeline(run.path(), {Stage::Pan, Stage::Trn, Stage::Roi, Stage::Ftn});
    CHECK(nn::parameter_checksum(*after.pan) == pan_sum);
    CHECK(nn::parameter_checksum(*after.trn) == trn_sum);
    CHECK(after.resolution == 32);

    const LoadedSample m = load_sample(fx.manifest, fx.manifest.records[0], 32);
    const LoadedSample p = load_sample(fx.manifest, fx.manifest.records[3], 32);
    const TryOnResult on = infer_tryon(after, m.image, p.image, m.iuv, p.iuv, &p.mask, true);
    const TryOnResult off = infer_tryon(after, m.image, p.image, m.iuv, p.iuv, nullptr, false);
    for (const ImageTensor* img : {&on.warped, &on.aligned, &on.merged, &on.refined, &on.output, &on.garment,
                                   &on.person_rest}) {
      CHECK(img->height() == 32);
      CHECK_NOTHROW(img->validate());
    }
    CHECK(on.roi.is_hard());
    CHECK(on.covered.is_hard());
    CHECK(on.region.is_hard());
    CHECK(on.union_mask.has_value());
    CHECK_FALSE(off.union_mask.has_value());
    std::size_t outside = 0, differ = 0;
    for (std::size_t q = 0; q < on.roi.pixel_count(); ++q) {
      if (on.roi.at(q) != 0.0f) continue;
      ++outside;
      for (int c = 0; c < 3; ++c) {
        CHECK(on.output.at(q, c) == p.image.at(q, c));
        differ += off.output.at(q, c) != p.image.at(q, c);
      }
    }
    CHECK(outside > 0);
    CHECK(differ > 0);

    CHECK_THROWS_AS(infer_tryon(after, m.image, ImageTensor(16, 16, Range::UnitSigned), m.iuv, p.iuv, nullptr, true), InputError);
    Pipeline partial = load_pipeline(run.path(), {Stage::Pan});
    CHECK_THROWS_AS(infer_tryon(partial, m.image, p.image, m.iuv, p.iuv, nullptr, true), MissingStateError);
  }
}

TEST_CASE("equal seeds give identical telemetry and checkpoints") {
  Fixture& fx = fixture();
  test::TempDir a("training_det_a"), b("training_det_b");
  const TrainConfig cfg = tiny_config();
  const StageResult ra = train_roi(cfg, fx.manifest, a.path());
  const StageResult rb = train_roi(cfg, fx.manifest, b.path());
  CHECK(ra.checkpoint_checksum == rb.checkpoint_checksum);
  const StageResult pa = train_stage(Stage::Pan, cfg, fx.manifest, a.path());
  const StageResult pb = train_stage(Stage::Pan, cfg, fx.manifest, b.path());
  CHECK(pa.checkpoint_checksum == pb.checkpoint_checksum);
  CHECK(pa.history == pb.history);
  CHECK(slurp(a / "telemetry.tsv") == slurp(b / "telemetry.tsv"));
  CHECK_FALSE(slurp(a / "telemetry.tsv").empty());

  TrainConfig other = cfg;
  other.seed = 2;
  test::TempDir c("training_det_c");
  CHECK(train_stage(Stage::Pan, other, fx.manifest, c.path()).checkpoint_checksum != pa.checkpoint_checksum);
}
