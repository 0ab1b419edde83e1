#include "m2e/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>

#include "m2e/error.hpp"
#include "m2e/nn/kernels.hpp"

namespace fs = std::filesystem;

namespace m2e {

std::uint64_t derive_seed(std::uint64_t seed, SeedSalt salt, Stage stage) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(salt) * 16 + static_cast<std::uint64_t>(stage)));
}

namespace {

// Fixed seed of the random-weight extractor; independent of the training seed.
constexpr std::uint64_t kExtractorSeed = 0x76676731ULL;

std::string fmt9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void add_scaled(TensorF& acc, const TensorF& g, double w) {
  if (w == 0.0) return;
  const float s = static_cast<float>(w);
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * g[i];
}

void check_term(const std::string& name, double v, const TrainConfig& cfg) {
  if (std::isnan(v) || !std::isfinite(v) || v > cfg.abort_threshold) {
    throw TrainingError("loss term " + name + " diverged: " + fmt9(v));
  }
}

}  // namespace

fs::path default_run_root() {
  const char* env = std::getenv("M2E_RUN_DIR");
  return env && *env ? fs::path(env) : fs::path("runs");
}

const ReportTerm* BranchReport::find(const std::string& name) const {
  for (const auto& t : terms) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const BranchReport* LossReport::branch(Branch b) const {
  for (const auto& r : branches) {
    if (r.branch == b) return &r;
  }
  return nullptr;
}

// ------------------------------------------------------------- telemetry

Telemetry::Telemetry(const fs::path& path, Stage stage) : path_(path), stage_(stage_name(stage)) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<std::string> keep;
  {
    std::ifstream is(path);
    std::string line;
    while (std::getline(is, line)) {
      const auto a = line.find('\t');
      const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
      if (a != std::string::npos && b != std::string::npos && line.substr(a + 1, b - a - 1) == stage_) continue;
      keep.push_back(line);
    }
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write telemetry " + path.string());
  for (const auto& l : keep) os << l << '\n';
}

void Telemetry::record(std::int64_t step, const std::string& term, double value) {
  std::ofstream os(path_, std::ios::app);
  os << step << '\t' << stage_ << '\t' << term << '\t' << fmt9(value) << '\n';
  if (!os) throw InputError("cannot write telemetry " + path_.string());
}

// ------------------------------------------------------------ joint step

namespace {

BranchReport run_branch(StageNets& n, const StageBatch& b, Branch branch, const TrainConfig& cfg) {
  const LossWeights& w = cfg.weights;
  const TensorF fake = n.gen.forward(b.input);
  const TensorF real_in = nn::concat_channels<float>({&b.target, &b.target_iuv});
  const TensorF fake_in = nn::concat_channels<float>({&fake, &b.target_iuv});

  // Discriminator on the detached fake.
  n.disc.set_requires_grad(true);
  n.disc_opt.zero_grad();
  const auto real_loss = bce_logits(n.disc.forward(real_in), true);
  n.disc.backward(real_loss.grad);
  const auto fake_loss = bce_logits(n.disc.forward(fake_in), false);
  n.disc.backward(fake_loss.grad);
  const double d_loss = real_loss.value + fake_loss.value;
  check_term("d_loss", d_loss, cfg);
  n.disc_opt.step();

  // Generator through the updated, frozen discriminator.
  n.disc.set_requires_grad(false);
  auto g_adv = bce_logits(n.disc.forward(fake_in), true);
  for (auto& g : g_adv.grad.span()) g *= static_cast<float>(w.gan);
  TensorF grad = nn::slice_channels(n.disc.backward(g_adv.grad), 0, 3);
  n.disc.set_requires_grad(true);

  BranchReport report{branch, {}};
  std::map<std::string, std::pair<double, double>> values{{"d_loss", {d_loss, 1.0}},
                                                          {"g_gan", {g_adv.value, w.gan}}};
  if (branch == Branch::Paired) {
    const auto l1 = l1_loss(fake, b.target);
    const auto l2 = l2_loss(fake, b.target);
    add_scaled(grad, l1.grad, w.l1);
    add_scaled(grad, l2.grad, w.l2);
    TensorF feat_grad;
    const bool need = w.perc != 0.0 || w.style != 0.0;
    const FeatureLoss fl = feature_losses(n.extractor, fake, b.target, w.perc, w.style, need ? &feat_grad : nullptr);
    if (need) add_scaled(grad, feat_grad, 1.0);
    values["l1"] = {l1.value, w.l1};
    values["l2"] = {l2.value, w.l2};
    values["perc"] = {fl.perceptual, w.perc};
    values["style"] = {fl.style, w.style};
  }
  for (const auto& name : branch_terms(branch)) {
    const auto& [v, wt] = values.at(name);
    check_term(name, v, cfg);
    report.terms.push_back({name, v, wt});
  }

  n.gen_opt.zero_grad();
  n.gen.backward(grad);
  n.gen_opt.step();
  return report;
}

}  // namespace

LossReport joint_step(StageNets& nets, const StageBatch* paired, const StageBatch* unpaired, const TrainConfig& cfg) {
  LossReport report;
  if (paired) report.branches.push_back(run_branch(nets, *paired, Branch::Paired, cfg));
  if (unpaired) report.branches.push_back(run_branch(nets, *unpaired, Branch::Unpaired, cfg));
  return report;
}

// ----------------------------------------------------------- checkpoints

fs::path checkpoint_path(const fs::path& run_dir, Stage stage, int epoch) {
  return run_dir / "ckpt" / (stage_name(stage) + "_" + std::to_string(epoch));
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir, Stage stage) {
  const fs::path dir = run_dir / "ckpt";
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return std::nullopt;
  const std::regex re(stage_name(stage) + "_([0-9]+)");
  std::optional<fs::path> best;
  long best_epoch = -1;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && std::regex_match(name, m, re)) {
      const long epoch = std::stol(m[1].str());
      if (epoch > best_epoch) {
        best_epoch = epoch;
        best = e.path();
      }
    }
  }
  return best;
}

Checkpoint load_checkpoint(const fs::path& path) {
  Checkpoint c;
  c.params = nn::read_param_file(path);
  c.path = path;
  const auto& meta = c.params.meta;
  auto need = [&](const std::string& k) -> const std::string& {
    const auto it = meta.find(k);
    if (it == meta.end()) throw InputError("checkpoint " + path.string() + " lacks " + k);
    return it->second;
  };
  c.stage = parse_stage(need("stage"));
  c.epoch = std::stoi(need("epoch"));
  c.step = std::stoll(need("step"));
  for (const auto& [k, v] : meta) {
    if (k.rfind("config.", 0) == 0) c.config.set(k.substr(7), v);
  }
  return c;
}

Checkpoint require_checkpoint(const fs::path& run_dir, Stage stage) {
  const auto p = latest_checkpoint(run_dir, stage);
  if (!p) throw MissingStateError("missing upstream checkpoint: " + stage_name(stage) + " under " + run_dir.string());
  return load_checkpoint(*p);
}

std::unique_ptr<Generator> restore_generator(const Checkpoint& ckpt) {
  auto g = std::make_unique<Generator>(ckpt.stage, ckpt.config.generator_spec(ckpt.stage));
  nn::import_module(*g, "gen", ckpt.params);
  g->set_requires_grad(false);
  return g;
}

namespace {

void export_adam(nn::Adam& opt, const std::string& tag, nn::ParamFile& file) {
  const auto& params = opt.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    file.put("adam." + tag + ".m/" + params[k].name, opt.first_moments()[k]);
    file.put("adam." + tag + ".v/" + params[k].name, opt.second_moments()[k]);
  }
  file.meta["adam." + tag + ".steps"] = std::to_string(opt.steps());
}

std::pair<fs::path, std::uint64_t> write_checkpoint(const fs::path& run_dir, Stage stage, int epoch,
                                                    std::int64_t step, const TrainConfig& cfg, Generator& gen,
                                                    nn::Adam& gen_opt, Discriminator* disc, nn::Adam* disc_opt) {
  nn::ParamFile file;
  file.meta["format"] = "m2e-checkpoint";
  file.meta["stage"] = stage_name(stage);
  file.meta["epoch"] = std::to_string(epoch);
  file.meta["step"] = std::to_string(step);
  for (const auto& [k, v] : cfg.entries()) file.meta["config." + k] = v;
  nn::export_module(gen, "gen", file);
  export_adam(gen_opt, "gen", file);
  if (disc) {
    nn::export_module(*disc, "disc", file);
    export_adam(*disc_opt, "disc", file);
  }
  const fs::path path = checkpoint_path(run_dir, stage, epoch);
  nn::write_param_file(path, file);
  return {path, file.checksum};
}

void remove_stage_checkpoints(const fs::path& run_dir, Stage stage) {
  while (auto p = latest_checkpoint(run_dir, stage)) fs::remove(*p);
}

}  // namespace

// -------------------------------------------------------------- pipeline

Pipeline load_pipeline(const fs::path& run_dir, const std::vector<Stage>& stages) {
  Pipeline p;
  for (Stage s : stages) {
    const Checkpoint ckpt = require_checkpoint(run_dir, s);
    if (p.resolution != 0 && p.resolution != ckpt.config.resolution) {
      throw InputError("checkpoint resolutions disagree under " + run_dir.string());
    }
    p.resolution = ckpt.config.resolution;
    auto g = restore_generator(ckpt);
    switch (s) {
      case Stage::Pan: p.pan = std::move(g); break;
      case Stage::Trn: p.trn = std::move(g); break;
      case Stage::Roi: p.roi = std::move(g); break;
      case Stage::Ftn: p.ftn = std::move(g); break;
    }
  }
  return p;
}

namespace {

void require_net(const std::unique_ptr<Generator>& g, Stage s) {
  if (!g) throw MissingStateError("missing checkpoint: " + stage_name(s));
}

struct Upstream {
  WarpResult warp;
  ImageTensor aligned, merged, refined;
  BinaryMask region, roi_soft, roi;
  RoiSplit split;
};

// Runs the frozen pipeline far enough to feed `upto`'s generator.
Upstream run_upstream(Pipeline& nets, Stage upto, const ImageTensor& model, const IuvMap& model_iuv,
                      const ImageTensor& person, const IuvMap& person_iuv) {
  Upstream u;
  u.warp = warp(build_uv_index(model, model_iuv), person_iuv);
  if (upto == Stage::Pan) return u;
  require_net(nets.pan, Stage::Pan);
  u.aligned = pan_forward(*nets.pan, model, model_iuv, person_iuv, u.warp.warped);
  u.region = texture_region(u.warp.warped);
  u.merged = merge_textures(u.warp.warped, u.aligned, u.region);
  if (upto == Stage::Trn) return u;
  require_net(nets.trn, Stage::Trn);
  require_net(nets.roi, Stage::Roi);
  u.refined = trn_forward(*nets.trn, u.merged, u.region);
  u.roi_soft = roi_forward(*nets.roi, person, person_iuv);
  u.roi = u.roi_soft.binarized(0.5f);
  u.split = roi_split(u.refined, person, u.roi);
  return u;
}

}  // namespace

TryOnResult infer_tryon(Pipeline& nets, const ImageTensor& model, const ImageTensor& person, const IuvMap& model_iuv,
                        const IuvMap& person_iuv, const BinaryMask* parsing, bool passthrough) {
  for (Stage s : {Stage::Pan, Stage::Trn, Stage::Roi, Stage::Ftn}) {
    const auto& g = s == Stage::Pan ? nets.pan : s == Stage::Trn ? nets.trn : s == Stage::Roi ? nets.roi : nets.ftn;
    require_net(g, s);
  }
  if (!model.same_shape(person) || model.height() != model_iuv.height() || model.width() != model_iuv.width() ||
      person.height() != person_iuv.height() || person.width() != person_iuv.width()) {
    throw InputError("try-on inputs must share one resolution");
  }
  Upstream u = run_upstream(nets, Stage::Ftn, model, model_iuv, person, person_iuv);
  TryOnResult r;
  r.output = ftn_forward(*nets.ftn, u.split.garment, u.split.person);
  if (passthrough) r.output = merge_textures(r.output, person, u.roi);
  r.warped = std::move(u.warp.warped);
  r.covered = std::move(u.warp.covered);
  r.aligned = std::move(u.aligned);
  r.region = std::move(u.region);
  r.merged = std::move(u.merged);
  r.refined = std::move(u.refined);
  r.roi_soft = std::move(u.roi_soft);
  r.roi = std::move(u.roi);
  r.garment = std::move(u.split.garment);
  r.person_rest = std::move(u.split.person);
  if (parsing) {
    if (!parsing->same_shape(person)) throw InputError("parsing mask does not match the person image");
    r.union_mask = union_roi(*parsing, person_iuv, default_upper_parts());
  }
  return r;
}

// -------------------------------------------------------------- training

namespace {

// Loaded records plus cached per-pair generator inputs.
class StageData {
 public:
  StageData(Stage stage, const Manifest& m, int resolution, Pipeline& upstream)
      : stage_(stage), manifest_(m), resolution_(resolution), upstream_(upstream) {}

  const LoadedSample& sample(std::size_t i) {
    auto it = samples_.find(i);
    if (it == samples_.end()) {
      it = samples_.emplace(i, load_sample(manifest_, manifest_.records.at(i), resolution_)).first;
    }
    return it->second;
  }

  const TensorF& target(std::size_t i) {
    auto it = targets_.find(i);
    if (it == targets_.end()) it = targets_.emplace(i, image_tensor(sample(i).image)).first;
    return it->second;
  }

  const TensorF& target_iuv(std::size_t i) {
    auto it = iuvs_.find(i);
    if (it == iuvs_.end()) it = iuvs_.emplace(i, encode_iuv(sample(i).iuv)).first;
    return it->second;
  }

  TensorF input(std::size_t model, std::size_t person) {
    const auto key = std::make_pair(model, person);
    if (auto it = inputs_.find(key); it != inputs_.end()) return it->second;
    const LoadedSample& m = sample(model);
    const LoadedSample& p = sample(person);
    TensorF x;
    if (stage_ == Stage::Roi) {
      x = roi_input(p.image, p.iuv);
    } else {
      Upstream u = run_upstream(upstream_, stage_, m.image, m.iuv, p.image, p.iuv);
      switch (stage_) {
        case Stage::Pan: x = pan_input(m.image, m.iuv, p.iuv, u.warp.warped); break;
        case Stage::Trn: x = trn_input(u.merged, u.region); break;
        case Stage::Ftn: x = ftn_input(u.split.garment, u.split.person); break;
        case Stage::Roi: break;
      }
    }
    if (cached_bytes_ + x.size() * sizeof(float) <= kCacheBytes) {
      cached_bytes_ += x.size() * sizeof(float);
      inputs_.emplace(key, x);
    }
    return x;
  }

  StageBatch batch(const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    std::vector<TensorF> xs, ts, ds;
    for (const auto& [m, p] : pairs) {
      xs.push_back(input(m, p));
      ts.push_back(target(p));
      ds.push_back(target_iuv(p));
    }
    return {nn::stack_batch<float>(xs), nn::stack_batch<float>(ts), nn::stack_batch<float>(ds)};
  }

 private:
  static constexpr std::size_t kCacheBytes = std::size_t{1} << 30;

  Stage stage_;
  const Manifest& manifest_;
  int resolution_;
  Pipeline& upstream_;
  std::map<std::size_t, LoadedSample> samples_;
  std::map<std::size_t, TensorF> targets_, iuvs_;
  std::map<std::pair<std::size_t, std::size_t>, TensorF> inputs_;
  std::size_t cached_bytes_ = 0;
};

// Endless reshuffled passes over a fixed list.
template <typename Item>
class Cursor {
 public:
  Cursor(std::vector<Item> items, std::uint64_t seed) : items_(std::move(items)), rng_(seed) { rng_.shuffle(items_); }
  Item next() {
    if (pos_ == items_.size()) {
      rng_.shuffle(items_);
      pos_ = 0;
    }
    return items_[pos_++];
  }

 private:
  std::vector<Item> items_;
  Rng rng_;
  std::size_t pos_ = 0;
};

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::vector<Stage> upstream_of(Stage s) {
  switch (s) {
    case Stage::Pan: return {};
    case Stage::Trn: return {Stage::Pan};
    case Stage::Roi: return {};
    case Stage::Ftn: return {Stage::Pan, Stage::Trn, Stage::Roi};
  }
  return {};
}

void apply_threads(const TrainConfig& cfg) {
  if (cfg.threads > 0) kernels::set_threads(cfg.threads);
}

nn::AdamConfig adam_config(const TrainConfig& cfg) {
  return {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8};
}

struct Schedule {
  std::int64_t steps_per_epoch = 1;
  std::int64_t total = 0;
  int final_epoch = 0;
};

Schedule make_schedule(Stage stage, const TrainConfig& cfg, std::size_t items) {
  Schedule s;
  s.steps_per_epoch = std::max<std::int64_t>(1, ceil_div(static_cast<std::int64_t>(items), cfg.batch_size));
  s.total = cfg.iterations(stage) > 0 ? cfg.iterations(stage) : cfg.epochs(stage) * s.steps_per_epoch;
  s.final_epoch = static_cast<int>(ceil_div(s.total, s.steps_per_epoch));
  return s;
}

void log_epoch_means(Telemetry& tel, std::int64_t step, const std::vector<std::map<std::string, double>>& history,
                     std::size_t from) {
  std::map<std::string, std::pair<double, int>> acc;
  for (std::size_t i = from; i < history.size(); ++i) {
    for (const auto& [k, v] : history[i]) {
      acc[k].first += v;
      acc[k].second += 1;
    }
  }
  for (const auto& [k, sc] : acc) tel.record(step, "epoch_mean." + k, sc.first / sc.second);
}

double roi_iou(Generator& roi, StageData& data, const Manifest& m, double* l1_out) {
  double iou = 0.0, l1 = 0.0;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const LoadedSample& s = data.sample(i);
    const BinaryMask truth = union_roi(s.mask, s.iuv, default_upper_parts());
    const BinaryMask pred = roi_forward(roi, s.image, s.iuv);
    iou += mask_iou(pred.binarized(0.5f), truth);
    l1 += l1_loss(mask_tensor(pred), mask_tensor(truth)).value;
  }
  const double n = static_cast<double>(m.records.size());
  if (l1_out) *l1_out = l1 / n;
  return iou / n;
}

double paired_l1(Generator& gen, StageData& data, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  double sum = 0.0;
  for (const auto& [m, p] : pairs) sum += l1_loss(gen.forward(data.input(m, p)), data.target(p)).value;
  return pairs.empty() ? 0.0 : sum / static_cast<double>(pairs.size());
}

}  // namespace

StageResult train_roi(const TrainConfig& cfg, const Manifest& manifest, const fs::path& run_dir) {
  cfg.validate();
  manifest.validate();
  apply_threads(cfg);
  for (const auto& r : manifest.records) {
    if (r.mask_path.empty()) throw InputError("missing parsing mask for " + r.identity + "/" + r.outfit + "/" + r.pose);
  }
  const Stage stage = Stage::Roi;
  Pipeline none;
  StageData data(stage, manifest, cfg.resolution, none);
  Generator roi(stage, cfg.generator_spec(stage));
  init_weights(roi, derive_seed(cfg.seed, SeedSalt::GenInit, stage));
  nn::Adam opt(roi.named_parameters(), adam_config(cfg));

  // Pseudo ground truth per record.
  std::map<std::size_t, TensorF> truth;
  auto pseudo = [&](std::size_t i) -> const TensorF& {
    auto it = truth.find(i);
    if (it == truth.end()) {
      const LoadedSample& s = data.sample(i);
      it = truth.emplace(i, mask_tensor(union_roi(s.mask, s.iuv, default_upper_parts()))).first;
    }
    return it->second;
  };

  std::vector<std::size_t> ids(manifest.records.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  Cursor<std::size_t> cursor(ids, derive_seed(cfg.seed, SeedSalt::PairOrder, stage));
  const Schedule sched = make_schedule(stage, cfg, ids.size());

  remove_stage_checkpoints(run_dir, stage);
  Telemetry tel(run_dir / "telemetry.tsv", stage);
  StageResult res;
  double l1_0 = 0.0;
  res.metrics["iou_initial"] = roi_iou(roi, data, manifest, &l1_0);
  res.metrics["l1_initial"] = l1_0;

  std::size_t epoch_start = 0;
  for (std::int64_t step = 1; step <= sched.total; ++step) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::vector<TensorF> ts;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t i = cursor.next();
      pairs.emplace_back(i, i);
      ts.push_back(pseudo(i));
    }
    StageBatch batch = data.batch(pairs);
    const TensorF out = roi.forward(batch.input);
    const auto l1 = l1_loss(out, nn::stack_batch<float>(ts));
    check_term("l1", l1.value, cfg);
    opt.zero_grad();
    roi.backward(l1.grad);
    opt.step();
    res.history.push_back({{"l1", l1.value}});
    tel.record(step, "l1", l1.value);
    if (step % sched.steps_per_epoch == 0 || step == sched.total) {
      const int epoch = static_cast<int>(ceil_div(step, sched.steps_per_epoch));
      log_epoch_means(tel, step, res.history, epoch_start);
      epoch_start = res.history.size();
      if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != sched.final_epoch) {
        write_checkpoint(run_dir, stage, epoch, step, cfg, roi, opt, nullptr, nullptr);
      }
    }
  }
  double l1_f = 0.0;
  res.metrics["iou_final"] = roi_iou(roi, data, manifest, &l1_f);
  res.metrics["l1_final"] = l1_f;
  tel.record(sched.total, "eval.iou", res.metrics["iou_final"]);
  tel.record(sched.total, "eval.l1", l1_f);

  const auto [path, sum] = write_checkpoint(run_dir, stage, sched.final_epoch, sched.total, cfg, roi, opt, nullptr,
                                            nullptr);
  res.checkpoint = path;
  res.checkpoint_checksum = sum;
  res.gen_checksum = nn::parameter_checksum(roi);
  res.steps = sched.total;
  res.epochs = sched.final_epoch;
  return res;
}

StageResult train_stage(Stage stage, const TrainConfig& cfg, const Manifest& manifest, const fs::path& run_dir) {
  if (stage == Stage::Roi) return train_roi(cfg, manifest, run_dir);
  cfg.validate();
  manifest.validate();
  apply_threads(cfg);

  Pipeline upstream = load_pipeline(run_dir, upstream_of(stage));
  if (upstream.resolution != 0 && upstream.resolution != cfg.resolution) {
    throw InputError("upstream checkpoints were trained at resolution " + std::to_string(upstream.resolution));
  }
  StageData data(stage, manifest, cfg.resolution, upstream);

  const auto paired_list = pair_same_identity(manifest);
  if (cfg.paired_steps > 0 && paired_list.empty()) {
    throw InputError("manifest has no same-identity pairs for paired training");
  }
  std::optional<UnpairedSampler> sampler;
  if (cfg.unpaired_steps > 0) sampler.emplace(manifest, derive_seed(cfg.seed, SeedSalt::Unpaired, stage));

  Generator gen(stage, cfg.generator_spec(stage));
  Discriminator disc(cfg.discriminator_spec());
  init_weights(gen, derive_seed(cfg.seed, SeedSalt::GenInit, stage));
  init_weights(disc, derive_seed(cfg.seed, SeedSalt::DiscInit, stage));
  nn::Adam gen_opt(gen.named_parameters(), adam_config(cfg));
  nn::Adam disc_opt(disc.named_parameters(), adam_config(cfg));
  FeatureExtractor<float> extractor(cfg.extractor_width, kExtractorSeed);
  if (!cfg.extractor_weights.empty()) extractor.load_weights(cfg.extractor_weights);
  StageNets nets{gen, disc, gen_opt, disc_opt, extractor};

  const Schedule sched =
      make_schedule(stage, cfg, paired_list.empty() ? manifest.records.size() : paired_list.size());
  Cursor<std::pair<std::size_t, std::size_t>> cursor(
      paired_list.empty() ? std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}} : paired_list,
      derive_seed(cfg.seed, SeedSalt::PairOrder, stage));

  remove_stage_checkpoints(run_dir, stage);
  Telemetry tel(run_dir / "telemetry.tsv", stage);
  StageResult res;
  res.metrics["paired_l1_initial"] = paired_l1(gen, data, paired_list);

  auto draw = [&](bool paired) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (int b = 0; b < cfg.batch_size; ++b) pairs.push_back(paired ? cursor.next() : sampler->next());
    return data.batch(pairs);
  };

  std::size_t epoch_start = 0;
  const int cycle = std::max(cfg.paired_steps, cfg.unpaired_steps);
  for (std::int64_t step = 1; step <= sched.total; ++step) {
    std::map<std::string, double> terms;
    for (int k = 0; k < cycle; ++k) {
      std::optional<StageBatch> pb, ub;
      if (k < cfg.paired_steps) pb = draw(true);
      if (k < cfg.unpaired_steps) ub = draw(false);
      const LossReport rep = joint_step(nets, pb ? &*pb : nullptr, ub ? &*ub : nullptr, cfg);
      for (const auto& br : rep.branches) {
        const std::string prefix = br.branch == Branch::Paired ? "paired." : "unpaired.";
        for (const auto& t : br.terms) terms[prefix + t.name] += t.value / cycle;
      }
    }
    for (const auto& [k, v] : terms) tel.record(step, k, v);
    res.history.push_back(std::move(terms));
    if (step % sched.steps_per_epoch == 0 || step == sched.total) {
      const int epoch = static_cast<int>(ceil_div(step, sched.steps_per_epoch));
      log_epoch_means(tel, step, res.history, epoch_start);
      epoch_start = res.history.size();
      if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 && epoch != sched.final_epoch) {
        write_checkpoint(run_dir, stage, epoch, step, cfg, gen, gen_opt, &disc, &disc_opt);
      }
    }
  }
  res.metrics["paired_l1_final"] = paired_l1(gen, data, paired_list);
  tel.record(sched.total, "eval.paired_l1", res.metrics["paired_l1_final"]);

  const auto [path, sum] =
      write_checkpoint(run_dir, stage, sched.final_epoch, sched.total, cfg, gen, gen_opt, &disc, &disc_opt);
  res.checkpoint = path;
  res.checkpoint_checksum = sum;
  res.gen_checksum = nn::parameter_checksum(gen);
  res.steps = sched.total;
  res.epochs = sched.final_epoch;
  return res;
}

}  // namespace m2e
