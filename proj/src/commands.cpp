#include "m2e/commands.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "m2e/error.hpp"
#include "m2e/image_io.hpp"
#include "m2e/nn/kernels.hpp"
#include "m2e/uvwarp.hpp"

namespace fs = std::filesystem;

namespace m2e {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InputError*>(&e)) return kExitInput;
  if (dynamic_cast<const DomainError*>(&e)) return kExitDomain;
  if (dynamic_cast<const TrainingError*>(&e)) return kExitDomain;
  if (dynamic_cast<const MissingStateError*>(&e)) return kExitMissingState;
  return kExitInput;
}

CommandResult guarded(const std::function<CommandResult()>& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    return {exit_code_for(e), {}, e.what()};
  }
}

fs::path run_dir_for(const std::string& run_name) {
  if (run_name.empty()) throw InputError("empty run name");
  return default_run_root() / run_name;
}

TrainConfig resolve_config(const std::optional<fs::path>& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig cfg;
  if (file) apply_config_file(cfg, *file);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

CommandResult cmd_make_manifest(const ManifestArgs& args) {
  const ManifestBuild b = build_manifest(args.root, args.split);
  b.manifest.validate();
  write_manifest(args.out, b.manifest);
  std::string summary = std::to_string(b.manifest.records.size()) + " records";
  if (!b.warnings.empty()) summary += ", " + std::to_string(b.warnings.size()) + " skipped";
  return {kExitOk, {args.out}, summary};
}

CommandResult cmd_make_fixture(const FixtureArgs& args) {
  synth_fixture(args.out, args.spec);
  const int n = args.spec.identities * args.spec.outfits * args.spec.poses;
  return {kExitOk, {args.out}, std::to_string(n) + " fixture samples"};
}

CommandResult cmd_warp(const WarpArgs& args) {
  const ImageTensor model = load_image(args.model_img);
  const IuvMap model_iuv = load_iuv(args.model_iuv);
  const IuvMap person_iuv = load_iuv(args.person_iuv);
  if (!person_iuv.has_foreground()) throw DomainError("no dense pose coverage in " + args.person_iuv.string());
  const WarpResult w = warp(build_uv_index(model, model_iuv), person_iuv);
  fs::path covered = args.out;
  covered.replace_filename(args.out.stem().string() + ".covered.png");
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  save_image(args.out, w.warped);
  save_mask(covered, w.covered);
  return {kExitOk, {args.out, covered}, std::to_string(w.covered.count_ones()) + " covered pixels"};
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

CommandResult cmd_train(const TrainArgs& args) {
  std::vector<Stage> stages;
  if (args.stage == "all") {
    stages = {Stage::Roi, Stage::Pan, Stage::Trn, Stage::Ftn};
  } else {
    stages = {parse_stage(args.stage)};
  }
  const TrainConfig cfg = resolve_config(args.config, args.overrides);
  const Manifest manifest = read_manifest(args.manifest);
  manifest.validate();
  const fs::path run = run_dir_for(args.run_name);
  save_config(run / "config.txt", cfg);

  CommandResult out;
  out.artifacts.push_back(run / "config.txt");
  std::ostringstream summary;
  for (Stage s : stages) {
    const StageResult r = train_stage(s, cfg, manifest, run);
    out.artifacts.push_back(r.checkpoint);
    summary << stage_name(s) << ": " << r.steps << " steps";
    for (const auto& [k, v] : r.metrics) summary << ", " << k << " " << fmt(v);
    summary << "; ";
  }
  out.artifacts.push_back(run / "telemetry.tsv");
  out.summary = summary.str();
  return out;
}

namespace {

void require_file(const std::optional<fs::path>& p) {
  std::error_code ec;
  if (p && !fs::is_regular_file(*p, ec)) throw InputError("missing file: " + p->string());
}

}  // namespace

CommandResult cmd_tryon(const TryOnArgs& args) {
  for (const auto& p : {args.model_img, args.person_img, args.model_iuv, args.person_iuv}) require_file(p);
  require_file(args.parsing);
  const TrainConfig cfg = resolve_config(args.config, args.overrides);
  if (cfg.threads > 0) kernels::set_threads(cfg.threads);
  const fs::path run = run_dir_for(args.run_name);
  Pipeline nets = load_pipeline(run, {Stage::Pan, Stage::Trn, Stage::Roi, Stage::Ftn});
  const int res = nets.resolution;

  const ImageTensor model = to_signed(fit_image(load_image(args.model_img), res));
  const ImageTensor person = to_signed(fit_image(load_image(args.person_img), res));
  const IuvMap model_iuv = fit_iuv(load_iuv(args.model_iuv), res);
  const IuvMap person_iuv = fit_iuv(load_iuv(args.person_iuv), res);
  std::optional<BinaryMask> parsing;
  if (args.parsing) parsing = fit_mask(load_mask(*args.parsing), res).binarized(0.5f);

  const TryOnResult r = infer_tryon(nets, model, person, model_iuv, person_iuv, parsing ? &*parsing : nullptr,
                                    cfg.composite_passthrough);
  const fs::path dir = args.out_dir.value_or(run / "tryon");
  fs::create_directories(dir);
  CommandResult out;
  auto put_image = [&](const std::string& name, const ImageTensor& img) {
    save_image(dir / name, img);
    out.artifacts.push_back(dir / name);
  };
  put_image("output.png", r.output);
  if (args.save_intermediates) {
    put_image("warped.png", r.warped);
    put_image("aligned.png", r.aligned);
    put_image("merged.png", r.merged);
    put_image("refined.png", r.refined);
    save_mask(dir / "roi.png", r.roi);
    out.artifacts.push_back(dir / "roi.png");
  }
  out.summary = "roi " + std::to_string(r.roi.count_ones()) + " px";
  if (r.union_mask) out.summary += ", iou vs parsing union " + fmt(mask_iou(r.roi, *r.union_mask));
  return out;
}

// ---------------------------------------------------------------- gallery

std::vector<GalleryRow> gallery_rows(Pipeline& nets, const Manifest& m, int rows, std::uint64_t seed,
                                     bool passthrough) {
  m.validate();
  if (rows < 1) throw InputError("gallery needs at least one row");
  UnpairedSampler sampler(m, seed);
  std::vector<GalleryRow> out;
  for (int i = 0; i < rows; ++i) {
    const auto [mi, pi] = sampler.next();
    const LoadedSample ms = load_sample(m, m.records[mi], nets.resolution);
    const LoadedSample ps = load_sample(m, m.records[pi], nets.resolution);
    GalleryRow row{mi, pi, ms.image, ps.image, {}};
    row.result = infer_tryon(nets, ms.image, ps.image, ms.iuv, ps.iuv, nullptr, passthrough);
    out.push_back(std::move(row));
  }
  return out;
}

ImageTensor tile_row(const GalleryRow& row) {
  const TryOnResult& r = row.result;
  const ImageTensor* panels[kGalleryPanels] = {&row.model_img, &row.person_img, &r.warped, &r.aligned,
                                               &r.merged,      &r.refined,      &r.output};
  const int h = row.model_img.height(), w = row.model_img.width();
  ImageTensor tile(h, w * kGalleryPanels, Range::Byte);
  for (int k = 0; k < kGalleryPanels; ++k) {
    const ImageTensor bytes = quantize_bytes(panels[k]->range() == Range::Byte ? *panels[k] : to_byte(*panels[k]));
    if (bytes.height() != h || bytes.width() != w) throw InputError("gallery panels differ in size");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) tile.at(y, k * w + x, c) = bytes.at(y, x, c);
      }
    }
  }
  return tile;
}

CommandResult cmd_eval_gallery(const GalleryArgs& args) {
  const TrainConfig cfg = resolve_config(args.config, args.overrides);
  if (cfg.threads > 0) kernels::set_threads(cfg.threads);
  const Manifest m = read_manifest(args.manifest);
  m.validate();
  Pipeline nets = load_pipeline(run_dir_for(args.run_name), {Stage::Pan, Stage::Trn, Stage::Roi, Stage::Ftn});
  const auto rows = gallery_rows(nets, m, args.rows, cfg.seed, cfg.composite_passthrough);

  fs::create_directories(args.out_dir);
  CommandResult out;
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>try-on gallery</title></head><body>\n"
       << "<p>M | P | M'_W | M'_A | M^ | M'_R | P'</p>\n<table>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "row_%03zu.png", i);
    save_image(args.out_dir / name, tile_row(rows[i]));
    out.artifacts.push_back(args.out_dir / name);
    const SampleRecord& mr = m.records[rows[i].model];
    const SampleRecord& pr = m.records[rows[i].person];
    html << "<tr><td>" << mr.identity << "/" << mr.outfit << "/" << mr.pose << " &rarr; " << pr.identity << "/"
         << pr.outfit << "/" << pr.pose << "</td><td><img src=\"" << name << "\"></td></tr>\n";
  }
  html << "</table>\n</body></html>\n";
  {
    std::ofstream os(args.out_dir / "index.html", std::ios::trunc);
    os << html.str();
    if (!os) throw InputError("cannot write " + (args.out_dir / "index.html").string());
  }
  out.artifacts.push_back(args.out_dir / "index.html");
  out.summary = std::to_string(rows.size()) + " gallery rows";
  return out;
}

}  // namespace m2e
