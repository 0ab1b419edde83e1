// m2e command-line front end. Exit codes: 0 ok, 2 input error, 3 domain
// error, 4 missing model state.

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>

#include "m2e/commands.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// One flag per config key, spelled with dashes or underscores. Values are
// collected in command-line order and applied over the config file.
void add_config_flags(CLI::App* cmd, Overrides& out) {
  for (const auto& [key, value] : m2e::TrainConfig{}.entries()) {
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    std::string names = "--" + dashed;
    if (dashed != key) names += ",--" + key;
    cmd->add_option_function<std::string>(
           names, [&out, k = key](const std::string& v) { out.emplace_back(k, v); }, "config key " + key)
        ->default_str(value)
        ->group("Config overrides");
  }
}

int report(const m2e::CommandResult& r) {
  if (r.exit_code == m2e::kExitOk) {
    for (const auto& a : r.artifacts) std::cout << a.string() << "\n";
    std::cout << r.summary << std::endl;
  } else {
    std::cerr << "error: " << r.summary << std::endl;
  }
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-pose guided virtual try-on: manifests, warping, stage training, inference."};
  app.require_subcommand(1);

  m2e::ManifestArgs manifest;
  auto* mk = app.add_subcommand("make-manifest", "Index an image/iuv/mask tree into a manifest");
  mk->add_option("--root", manifest.root, "dataset root")->required();
  mk->add_option("--out", manifest.out, "manifest file to write")->required();
  mk->add_option("--split", manifest.split, "split label")->capture_default_str();

  m2e::FixtureArgs fixture;
  auto* fx = app.add_subcommand("make-fixture", "Render the synthetic fixture tree");
  fx->add_option("--out", fixture.out, "output directory")->required();
  fx->add_option("--seed", fixture.spec.seed)->capture_default_str();
  fx->add_option("--identities", fixture.spec.identities)->capture_default_str();
  fx->add_option("--outfits", fixture.spec.outfits)->capture_default_str();
  fx->add_option("--poses", fixture.spec.poses)->capture_default_str();
  fx->add_option("--size", fixture.spec.size)->capture_default_str();

  m2e::WarpArgs warp;
  auto* wp = app.add_subcommand("warp", "Warp a model image onto a person's dense pose");
  wp->add_option("--model-img", warp.model_img)->required();
  wp->add_option("--model-iuv", warp.model_iuv)->required();
  wp->add_option("--person-iuv", warp.person_iuv)->required();
  wp->add_option("--out", warp.out, "warped image; coverage goes to <stem>.covered.png")->required();

  m2e::TrainArgs train;
  std::string train_config;
  auto* tr = app.add_subcommand("train", "Train one stage (pan, trn, ftn, roi) or all of them");
  tr->add_option("--stage", train.stage)->required()->check(CLI::IsMember({"pan", "trn", "ftn", "roi", "all"}));
  tr->add_option("--config", train_config, "key = value config file");
  tr->add_option("--manifest", train.manifest)->required();
  tr->add_option("--run-name", train.run_name, "run directory under $M2E_RUN_DIR (default ./runs)")->required();
  add_config_flags(tr, train.overrides);

  m2e::TryOnArgs tryon;
  std::string tryon_parsing, tryon_out, tryon_config;
  auto* to = app.add_subcommand("tryon", "Dress the person in the model's garment");
  to->add_option("--model-img", tryon.model_img)->required();
  to->add_option("--person-img", tryon.person_img)->required();
  to->add_option("--model-iuv", tryon.model_iuv)->required();
  to->add_option("--person-iuv", tryon.person_iuv)->required();
  to->add_option("--parsing", tryon_parsing, "person clothes mask, used for the union diagnostic");
  to->add_option("--run-name", tryon.run_name)->required();
  to->add_option("--out-dir", tryon_out, "default <run>/tryon");
  to->add_flag("--save-intermediates", tryon.save_intermediates);
  to->add_option("--config", tryon_config);
  add_config_flags(to, tryon.overrides);

  m2e::GalleryArgs gallery;
  std::string gallery_config;
  auto* gl = app.add_subcommand("eval-gallery", "Write 7-panel rows M, P, M'_W, M'_A, M^, M'_R, P'");
  gl->add_option("--manifest", gallery.manifest)->required();
  gl->add_option("--run-name", gallery.run_name)->required();
  gl->add_option("--out-dir", gallery.out_dir)->required();
  gl->add_option("--rows", gallery.rows)->capture_default_str();
  gl->add_option("--config", gallery_config);
  add_config_flags(gl, gallery.overrides);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : m2e::kExitInput;
  }

  auto opt = [](const std::string& s) -> std::optional<std::filesystem::path> {
    if (s.empty()) return std::nullopt;
    return std::filesystem::path(s);
  };
  if (*mk) return report(m2e::guarded([&] { return m2e::cmd_make_manifest(manifest); }));
  if (*fx) return report(m2e::guarded([&] { return m2e::cmd_make_fixture(fixture); }));
  if (*wp) return report(m2e::guarded([&] { return m2e::cmd_warp(warp); }));
  if (*tr) {
    train.config = opt(train_config);
    return report(m2e::guarded([&] { return m2e::cmd_train(train); }));
  }
  if (*to) {
    tryon.parsing = opt(tryon_parsing);
    tryon.out_dir = opt(tryon_out);
    tryon.config = opt(tryon_config);
    return report(m2e::guarded([&] { return m2e::cmd_tryon(tryon); }));
  }
  gallery.config = opt(gallery_config);
  return report(m2e::guarded([&] { return m2e::cmd_eval_gallery(gallery); }));
}
