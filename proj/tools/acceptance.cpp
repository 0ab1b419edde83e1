// Acceptance runner: one PASS/FAIL line per criterion, exit 0 only when all pass.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "m2e/commands.hpp"
#include "m2e/error.hpp"
#include "m2e/image_io.hpp"
#include "m2e/losses.hpp"
#include "m2e/nn/kernels.hpp"
#include "m2e/nn/optim.hpp"
#include "m2e/training.hpp"
#include "oracles.hpp"

using namespace m2e;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

template <typename T>
nn::Tensor<T> random_tensor(nn::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  nn::Tensor<T> t(s);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// ------------------------------------------------------------------ 1

Outcome compositing() {
  Rng rng(2024);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 4 + static_cast<int>(rng.uniform_index(29)), w = 4 + static_cast<int>(rng.uniform_index(29));
    ImageTensor a(h, w, Range::UnitSigned), b(h, w, Range::UnitSigned);
    for (auto& v : a.values()) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : b.values()) v = static_cast<float>(rng.uniform(-1, 1));
    BinaryMask r(h, w);
    for (auto& v : r.values()) v = rng.uniform01() < 0.5 ? 1.0f : 0.0f;
    bool ok = merge_textures(a, b, BinaryMask(h, w, 1.0f)) == a && merge_textures(a, b, BinaryMask(h, w, 0.0f)) == b;
    ok = ok && roi_split(a, b, BinaryMask(h, w, 1.0f)).garment == a && roi_split(a, b, BinaryMask(h, w, 0.0f)).person == b;
    const ImageTensor m = merge_textures(a, b, r);
    const RoiSplit s = roi_split(a, b, r);
    for (std::size_t p = 0; p < m.pixel_count() && ok; ++p) {
      const bool in = r.at(p) == 1.0f;
      for (int c = 0; c < 3; ++c) {
        ok &= m.at(p, c) == (in ? a.at(p, c) : b.at(p, c));
        ok &= s.garment.at(p, c) == (in ? a.at(p, c) : 0.0f);
        ok &= s.person.at(p, c) == (in ? 0.0f : b.at(p, c));
        ok &= s.garment.at(p, c) == 0.0f || s.person.at(p, c) == 0.0f;
      }
    }
    exact += ok;
  }
  return {exact == 100, std::to_string(exact) + "/100 exact"};
}

// ------------------------------------------------------------------ 2

Outcome identity_warp() {
  FixtureSpec spec;
  spec.identities = 10;
  spec.poses = 2;
  spec.size = 256;
  double worst = 0;
  int samples = 0;
  double warp_seconds = 0;
  for (int id = 0; id < spec.identities; ++id) {
    for (int pose = 0; pose < spec.poses; ++pose) {
      const FixtureSample s = render_fixture_sample(spec, id, 0, pose);
      const auto t0 = std::chrono::steady_clock::now();
      const WarpResult w = warp(build_uv_index(s.image, s.iuv), s.iuv);
      warp_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (std::size_t p = 0; p < s.image.pixel_count(); ++p) {
        if (w.covered.at(p) < 0.5f) continue;
        for (int c = 0; c < 3; ++c) worst = std::max(worst, double(std::abs(w.warped.at(p, c) - s.image.at(p, c))));
      }
      ++samples;
    }
  }
  const bool ok = samples == 20 && worst <= 2.0 && warp_seconds < 30.0;
  return {ok, std::to_string(samples) + " samples at 256, worst " + fmt("%.3g", worst) + "/255 (<= 2), warp time " +
                  fmt("%.2f", warp_seconds) + " s (< 30)"};
}

// ------------------------------------------------------------------ 3

Outcome warp_oracle() {
  double worst = 0;
  std::size_t mismatched_cover = 0, vertex_inexact = 0, vertices = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const oracle::ToyPair t = oracle::toy_pair(seed);
    const UvIndex index = build_uv_index(t.model, t.model_iuv);
    const WarpResult w = warp(index, t.person_iuv);
    for (std::size_t p = 0; p < w.warped.pixel_count(); ++p) {
      Rgb want{0, 0, 0};
      const bool hit =
          oracle::oracle_lookup(index, t.person_iuv.part(p), t.person_iuv.u(p), t.person_iuv.v(p), want);
      mismatched_cover += (w.covered.at(p) == 1.0f) != hit;
      for (int c = 0; c < 3; ++c) worst = std::max(worst, double(std::abs(w.warped.at(p, c) - want[c])));
    }
    for (const PartBucket* b : index.buckets()) {
      for (int vi : b->vertices) {
        const UvSample& s = b->samples[vi];
        Rgb c{};
        ++vertices;
        vertex_inexact += !index.lookup(b->part, s.u, s.v, c) || !(c == s.color);
      }
    }
  }
  const bool ok = worst <= 1.0 && mismatched_cover == 0 && vertex_inexact == 0;
  return {ok, "50 16x16 pairs, worst " + fmt("%.3g", worst) + "/255 (<= 1), coverage mismatches " +
                  std::to_string(mismatched_cover) + ", inexact vertices " + std::to_string(vertex_inexact) + "/" +
                  std::to_string(vertices)};
}

// ------------------------------------------------------------------ 4

Outcome loss_analytics() {
  FeatureExtractor<float> ex(8, 0x76676731ULL);
  const auto x = random_tensor<float>({2, 3, 64, 64}, 17);
  const FeatureLoss self = feature_losses(ex, x, x, 1.0, 1.0, static_cast<TensorF*>(nullptr));
  nn::Tensor<double> f(1, 2, 1, 2);
  f[0] = 1;
  f[1] = 2;
  f[2] = 3;
  f[3] = 4;
  const GramMatrix g = gram(f);
  const bool gram_ok = g.channels == 2 && g.values == std::vector<double>{5, 11, 11, 25};
  const double pgan = pgan_loss(TensorF(1, 1, 30, 30), TensorF(1, 1, 30, 30)).d_loss;
  const bool ok = std::abs(self.perceptual) <= 1e-6 && std::abs(self.style) <= 1e-6 && gram_ok &&
                  std::abs(pgan - 2 * std::log(2.0)) <= 1e-6;
  return {ok, "self perceptual " + fmt("%.2g", self.perceptual) + ", self style " + fmt("%.2g", self.style) +
                  ", gram " + (gram_ok ? "[[5,11],[11,25]]" : "wrong") + ", pgan(0) - 2 log 2 = " +
                  fmt("%.2g", pgan - 2 * std::log(2.0))};
}

// ------------------------------------------------------------------ 5

Outcome gradients() {
  using T = nn::Tensor<double>;
  FeatureExtractor<double> ex(4, 99);
  const T p = random_tensor<double>({1, 3, 4, 4}, 31), t = random_tensor<double>({1, 3, 4, 4}, 32);
  const double e_l1 = oracle::gradient_error([&](const T& v) { return l1_loss(v, t).value; }, p, l1_loss(p, t).grad);
  const double e_l2 = oracle::gradient_error([&](const T& v) { return l2_loss(v, t).value; }, p, l2_loss(p, t).grad);
  const double e_perc = oracle::gradient_error([&](const T& v) { return perceptual_loss(ex, v, t).value; }, p,
                                               perceptual_loss(ex, p, t).grad);
  const double e_style =
      oracle::gradient_error([&](const T& v) { return style_loss(ex, v, t).value; }, p, style_loss(ex, p, t).grad);
  const double worst = std::max({e_l1, e_l2, e_perc, e_style});
  return {worst <= 1e-3, "max relative error l1 " + fmt("%.2g", e_l1) + ", l2 " + fmt("%.2g", e_l2) +
                             ", perceptual " + fmt("%.2g", e_perc) + ", style " + fmt("%.2g", e_style) +
                             " (<= 1e-3)"};
}

// ------------------------------------------------------------------ 6

Outcome contracts() {
  const TrainConfig cfg = toy_config();
  int rejected = 0, accepted = 0, out_of_range = 0, generators = 0;
  std::map<Stage, int> expect = {{Stage::Pan, 12}, {Stage::Ftn, 6}};
  for (auto [stage, channels] : expect) {
    Generator g(stage, cfg.generator_spec(stage));
    init_weights(g, 3);
    for (int c = 1; c <= 16; ++c) {
      try {
        g.forward(TensorF(1, c, 16, 16));
        accepted += c == channels;
      } catch (const DomainError&) {
        rejected += c != channels;
      }
    }
  }
  for (Stage s : {Stage::Pan, Stage::Trn, Stage::Roi, Stage::Ftn}) {
    Generator g(s, cfg.generator_spec(s));
    init_weights(g, 4);
    for (double scale : {1.0, 100.0}) {
      const TensorF y = g.forward(random_tensor<float>({2, stage_in_channels(s), 64, 64}, 5, -scale, scale));
      const float lo = s == Stage::Roi ? 0.0f : -1.0f;
      for (float v : y.span()) out_of_range += !(v >= lo && v <= 1.0f);
      ++generators;
    }
  }
  const bool ok = rejected == 30 && accepted == 2 && out_of_range == 0;
  return {ok, "wrong channel counts rejected " + std::to_string(rejected) + "/30, right ones accepted " +
                  std::to_string(accepted) + "/2, out-of-range outputs " + std::to_string(out_of_range) + " over " +
                  std::to_string(generators) + " generator runs"};
}

// ------------------------------------------------------------------ 7

Outcome branch_purity() {
  TrainConfig cfg = toy_config();
  cfg.resolution = 32;
  Generator gen(Stage::Pan, cfg.generator_spec(Stage::Pan));
  Discriminator disc(cfg.discriminator_spec());
  init_weights(gen, 1);
  init_weights(disc, 2);
  const nn::AdamConfig ac{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8};
  nn::Adam go(gen.named_parameters(), ac), dopt(disc.named_parameters(), ac);
  FeatureExtractor<float> ex(cfg.extractor_width, 1);
  StageNets nets{gen, disc, go, dopt, ex};
  StageBatch b{random_tensor<float>({2, 12, 32, 32}, 1), random_tensor<float>({2, 3, 32, 32}, 2),
               random_tensor<float>({2, 3, 32, 32}, 3)};
  const LossReport r = joint_step(nets, &b, &b, cfg);
  std::string unpaired, paired;
  for (const auto& t : r.branch(Branch::Unpaired)->terms) unpaired += (unpaired.empty() ? "" : ",") + t.name;
  for (const auto& t : r.branch(Branch::Paired)->terms) paired += (paired.empty() ? "" : ",") + t.name;
  const bool ok = unpaired == "d_loss,g_gan" && paired == "d_loss,g_gan,l1,l2,perc,style";
  return {ok, "unpaired {" + unpaired + "}, paired {" + paired + "}"};
}

// ------------------------------------------------------------------ 8-10

struct ToyRun {
  fs::path dir;
  StageResult roi, pan, trn, ftn;
  std::uint64_t pan_before = 0, trn_before = 0;  // generator checksums loaded before FTN training
  double seconds = 0;
};

ToyRun toy_run(const TrainConfig& cfg, const Manifest& m, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(dir);
  ToyRun r;
  r.dir = dir;
  r.roi = train_roi(cfg, m, dir);
  r.pan = train_stage(Stage::Pan, cfg, m, dir);
  r.trn = train_stage(Stage::Trn, cfg, m, dir);
  Pipeline before = load_pipeline(dir, {Stage::Pan, Stage::Trn});
  r.pan_before = nn::parameter_checksum(*before.pan);
  r.trn_before = nn::parameter_checksum(*before.trn);
  r.ftn = train_stage(Stage::Ftn, cfg, m, dir);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

struct SelfTryOn {
  double with_passthrough = 0;
  double network_only = 0;
};

SelfTryOn self_tryon(const fs::path& run, const Manifest& m, int resolution) {
  Pipeline nets = load_pipeline(run, {Stage::Pan, Stage::Trn, Stage::Roi, Stage::Ftn});
  SelfTryOn out;
  for (const auto& r : m.records) {
    const LoadedSample s = load_sample(m, r, resolution);
    for (bool pass : {true, false}) {
      const TryOnResult t = infer_tryon(nets, s.image, s.image, s.iuv, s.iuv, &s.mask, pass);
      const Reconstruction rec = reconstruction_loss(t.output, s.image);
      (pass ? out.with_passthrough : out.network_only) += rec.l1 / m.records.size();
    }
  }
  return out;
}

bool valid_image(const ImageTensor& img, int side) {
  return img.height() == side && img.width() == side && img.in_range();
}

Outcome gallery_integrity(const ToyRun& run, const Manifest& m, const fs::path& manifest_path, int side) {
  GalleryArgs args;
  args.manifest = manifest_path;
  args.run_name = run.dir.string();
  args.out_dir = run.dir / "gallery";
  args.rows = 5;
  const CommandResult cr = cmd_eval_gallery(args);
  int rows_ok = 0;
  for (int i = 0; i < args.rows; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "row_%03d.png", i);
    if (!fs::exists(args.out_dir / name)) continue;
    const ImageTensor row = load_image(args.out_dir / name);
    rows_ok += row.height() == side && row.width() == kGalleryPanels * side;
  }

  Pipeline nets = load_pipeline(run.dir, {Stage::Pan, Stage::Trn, Stage::Roi, Stage::Ftn});
  int invariant_ok = 0;
  const auto rows = gallery_rows(nets, m, args.rows, toy_config().seed, true);
  for (const GalleryRow& g : rows) {
    const TryOnResult& t = g.result;
    bool ok = valid_image(t.warped, side) && valid_image(t.aligned, side) && valid_image(t.merged, side) &&
              valid_image(t.refined, side) && valid_image(t.output, side) && valid_image(t.garment, side) &&
              valid_image(t.person_rest, side);
    ok = ok && t.covered.is_hard() && t.region.is_hard() && t.roi.is_hard();
    ok = ok && t.merged == merge_textures(t.warped, t.aligned, t.region);
    invariant_ok += ok;
  }

  const bool pan_same = nn::parameter_checksum(*nets.pan) == run.pan_before && run.pan.gen_checksum == run.pan_before;
  const bool trn_same = nn::parameter_checksum(*nets.trn) == run.trn_before && run.trn.gen_checksum == run.trn_before;
  const bool ok = cr.exit_code == 0 && rows_ok == 5 && invariant_ok == 5 && pan_same && trn_same;
  return {ok, "gallery exit " + std::to_string(cr.exit_code) + ", 7-panel rows " + std::to_string(rows_ok) +
                  "/5, rows with valid intermediates " + std::to_string(invariant_ok) + "/5, PAN " +
                  (pan_same ? "unchanged" : "CHANGED") + ", TRN " + (trn_same ? "unchanged" : "CHANGED") +
                  " after FTN"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path work = fs::temp_directory_path() / "m2e_acceptance";
  bool keep = false;
  app.add_option("--work-dir", work, "scratch directory for fixtures and runs")->capture_default_str();
  app.add_flag("--keep", keep, "keep the scratch directory");
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  auto report = [&](int n, const std::string& title, const std::function<Outcome()>& body, double limit_s) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0 && s >= limit_s) {
      o.pass = false;
      o.detail += "; over time limit " + fmt("%.0f", limit_s) + " s";
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, title.c_str(), o.detail.c_str(),
                s);
    std::fflush(stdout);
  };

  report(1, "compositing algebra", compositing, 5);
  report(2, "identity warp", identity_warp, 0);
  report(3, "warp oracle", warp_oracle, 0);
  report(4, "loss analytics", loss_analytics, 0);
  report(5, "gradient checks", gradients, 60);
  report(6, "shape and range contracts", contracts, 0);
  report(7, "branch purity", branch_purity, 0);

  // The toy runs are single-threaded so the second one can be compared bit for bit.
  TrainConfig cfg = toy_config();
  cfg.threads = 1;
  kernels::set_threads(1);
  Manifest manifest;
  fs::path manifest_path = work / "manifest.txt";
  ToyRun a, b;
  bool have_a = false;

  report(8, "toy training", [&]() -> Outcome {
    FixtureSpec spec;
    spec.identities = 8;
    spec.poses = 2;
    spec.size = cfg.resolution;
    fs::remove_all(work);
    synth_fixture(work / "data", spec);
    manifest = build_manifest(work / "data").manifest;
    write_manifest(manifest_path, manifest);
    a = toy_run(cfg, manifest, work / "run_a");
    have_a = true;
    const double iou = a.roi.metrics.at("iou_final");
    const double l1_0 = a.pan.metrics.at("paired_l1_initial"), l1_1 = a.pan.metrics.at("paired_l1_final");
    const double drop = 1.0 - l1_1 / l1_0;
    const SelfTryOn self = self_tryon(a.dir, manifest, cfg.resolution);
    const bool ok = iou >= 0.8 && drop >= 0.5 && self.with_passthrough <= 0.15 && a.seconds <= 900;
    return {ok, "(a) RoI IoU after " + std::to_string(a.roi.steps) + " iterations " + fmt("%.3f", iou) +
                    " (>= 0.8); (b) PAN paired l1 " + fmt("%.4f", l1_0) + " -> " + fmt("%.4f", l1_1) + " over " +
                    std::to_string(a.pan.steps) + " joint steps, drop " + fmt("%.1f%%", 100 * drop) +
                    " (>= 50%); (c) self try-on l1 " + fmt("%.4f", self.with_passthrough) +
                    " (<= 0.15; network only " + fmt("%.4f", self.network_only) + "); training " +
                    fmt("%.0f", a.seconds) + " s (<= 900)"};
  }, 0);

  report(9, "determinism", [&]() -> Outcome {
    if (!have_a) return {false, "first toy run unavailable"};
    b = toy_run(cfg, manifest, work / "run_b");
    const bool tel = slurp(a.dir / "telemetry.tsv") == slurp(b.dir / "telemetry.tsv");
    int same = 0;
    for (auto [x, y] : {std::pair{&a.roi, &b.roi}, {&a.pan, &b.pan}, {&a.trn, &b.trn}, {&a.ftn, &b.ftn}}) {
      same += x->checkpoint_checksum == y->checkpoint_checksum && slurp(x->checkpoint) == slurp(y->checkpoint);
    }
    return {tel && same == 4, std::string("telemetry ") + (tel ? "identical" : "DIFFERS") +
                                  ", checkpoints identical " + std::to_string(same) + "/4"};
  }, 0);

  report(10, "pipeline integrity", [&]() -> Outcome {
    if (!have_a) return {false, "toy run unavailable"};
    return gallery_integrity(a, manifest, manifest_path, cfg.resolution);
  }, 0);

  if (!keep) fs::remove_all(work);
  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
