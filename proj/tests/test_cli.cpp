#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "m2e/commands.hpp"
#include "m2e/error.hpp"
#include "m2e/image_io.hpp"
#include "support.hpp"

using namespace m2e;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string err;
};

// Runs the m2e binary with M2E_RUN_DIR pointing at `runs`.
Run cli(const fs::path& runs, const std::string& args) {
  static int n = 0;
  const fs::path err = runs / ("stderr_" + std::to_string(n++) + ".txt");
  fs::create_directories(runs);
  const std::string cmd = "M2E_RUN_DIR='" + runs.string() + "' '" + M2E_CLI_PATH + "' " + args + " > /dev/null 2> '" +
                          err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

const std::string kTiny =
    " --resolution 32 --batch-size 2 --gen-width 4 --gen-blocks 1 --disc-width 4 --extractor-width 2"
    " --iterations-roi 2 --iterations-pan 2 --iterations-trn 2 --iterations-ftn 2 --threads 1";

std::string sample(const fs::path& data, int id, int pose, const std::string& kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "id%03d/outfit0/pose%d.%s.png", id, pose, kind.c_str());
  return "'" + (data / buf).string() + "'";
}

}  // namespace

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(InputError("x")) == 2);
  CHECK(exit_code_for(DomainError("x")) == 3);
  CHECK(exit_code_for(TrainingError("x")) == 3);
  CHECK(exit_code_for(MissingStateError("x")) == 4);
  CHECK(exit_code_for(std::runtime_error("x")) == 2);
  const CommandResult r = guarded([]() -> CommandResult { throw MissingStateError("gone"); });
  CHECK(r.exit_code == 4);
  CHECK(r.summary.find("gone") != std::string::npos);
}

TEST_CASE("config resolution: file then overrides") {
  test::TempDir dir("cli_config");
  {
    std::ofstream os(dir / "c.txt");
    os << "# toy\nbatch_size = 1\nseed = 7\n";
  }
  const TrainConfig c = resolve_config(dir / "c.txt", {{"batch_size", "3"}});
  CHECK(c.batch_size == 3);
  CHECK(c.seed == 7);
  CHECK_THROWS_AS(resolve_config(dir / "absent.txt", {}), InputError);
  CHECK_THROWS_AS(resolve_config(std::nullopt, {{"batch_size", "0"}}), InputError);
}

TEST_CASE("command line end to end") {
  test::TempDir dir("cli_e2e");
  const fs::path runs = dir / "runs";
  const fs::path data = dir / "data";
  const std::string d = "'" + data.string() + "'";

  REQUIRE(cli(runs, "make-fixture --out " + d + " --identities 4 --poses 2 --size 32").code == 0);

  SUBCASE("manifests") {
    CHECK(cli(runs, "make-manifest --root " + d + " --out '" + (dir / "m.txt").string() + "'").code == 0);
    CHECK(read_manifest(dir / "m.txt").records.size() == 8);

    fs::create_directories(dir / "empty");
    const Run empty = cli(runs, "make-manifest --root '" + (dir / "empty").string() + "' --out '" +
                                    (dir / "e.txt").string() + "'");
    CHECK(empty.code == 2);
    CHECK(empty.err.find("empty manifest") != std::string::npos);

    { std::ofstream(data / "id001/outfit0/pose0.iuv.png", std::ios::trunc); }
    const Run unreadable = cli(runs, "make-manifest --root " + d + " --out '" + (dir / "u.txt").string() + "'");
    CHECK(unreadable.code == 2);
    CHECK(unreadable.err.find("pose0.iuv.png") != std::string::npos);

    CHECK(cli(runs, "make-manifest --root " + d).code == 2);
    CHECK(cli(runs, "no-such-command").code == 2);
  }

  SUBCASE("warp") {
    const std::string out = "'" + (dir / "w" / "warped.png").string() + "'";
    CHECK(cli(runs, "warp --model-img " + sample(data, 0, 0, "image") + " --model-iuv " + sample(data, 0, 0, "iuv") +
                        " --person-iuv " + sample(data, 0, 1, "iuv") + " --out " + out)
              .code == 0);
    CHECK(fs::exists(dir / "w" / "warped.png"));
    CHECK(fs::exists(dir / "w" / "warped.covered.png"));

    ImageTensor corrupt(32, 32, Range::Byte);
    corrupt.at(0, 0, 0) = 200;
    save_image(dir / "corrupt.iuv.png", corrupt);
    const std::string bad = "'" + (dir / "corrupt.iuv.png").string() + "'";
    CHECK(cli(runs, "warp --model-img " + sample(data, 0, 0, "image") + " --model-iuv " + bad + " --person-iuv " +
                        sample(data, 0, 1, "iuv") + " --out " + out)
              .code == 3);
    save_iuv(dir / "blank.iuv.png", IuvMap(32, 32));
    const std::string blank = "'" + (dir / "blank.iuv.png").string() + "'";
    CHECK(cli(runs, "warp --model-img " + sample(data, 0, 0, "image") + " --model-iuv " + sample(data, 0, 0, "iuv") +
                        " --person-iuv " + blank + " --out " + out)
              .code == 3);
    CHECK(cli(runs, "warp --model-img '" + (dir / "absent.png").string() + "' --model-iuv " +
                        sample(data, 0, 0, "iuv") + " --person-iuv " + sample(data, 0, 1, "iuv") + " --out " + out)
              .code == 2);
  }

  SUBCASE("train, try on and gallery") {
    const std::string man = "'" + (dir / "m.txt").string() + "'";
    REQUIRE(cli(runs, "make-manifest --root " + d + " --out " + man).code == 0);

    const Run missing = cli(runs, "train --stage ftn --manifest " + man + " --run-name r" + kTiny);
    CHECK(missing.code == 4);
    CHECK(missing.err.find("missing upstream checkpoint") != std::string::npos);

    {
      std::ofstream os(dir / "cfg.txt");
      os << "batch_size = 1\nseed = 5\n";
    }
    REQUIRE(cli(runs, "train --stage all --manifest " + man + " --run-name r --config '" +
                          (dir / "cfg.txt").string() + "'" + kTiny)
                .code == 0);
    for (const char* s : {"roi", "pan", "trn", "ftn"}) CHECK(latest_checkpoint(runs / "r", parse_stage(s)).has_value());
    const TrainConfig saved = load_config(runs / "r" / "config.txt");
    CHECK(saved.batch_size == 2);  // the flag wins over the file
    CHECK(saved.seed == 5);

    // Rerunning a stage with the same seed reproduces its telemetry.
    const std::string tel = slurp(runs / "r" / "telemetry.tsv");
    REQUIRE(cli(runs, "train --stage roi --manifest " + man + " --run-name r --config '" +
                          (dir / "cfg.txt").string() + "'" + kTiny)
                .code == 0);
    const std::string tel2 = slurp(runs / "r" / "telemetry.tsv");
    auto roi_lines = [](const std::string& t) {
      std::istringstream is(t);
      std::string line, out;
      while (std::getline(is, line)) {
        if (line.find("\troi\t") != std::string::npos) out += line + "\n";
      }
      return out;
    };
    CHECK_FALSE(roi_lines(tel).empty());
    CHECK(roi_lines(tel) == roi_lines(tel2));

    const std::string io = " --model-img " + sample(data, 0, 0, "image") + " --person-img " +
                           sample(data, 1, 1, "image") + " --model-iuv " + sample(data, 0, 0, "iuv") +
                           " --person-iuv " + sample(data, 1, 1, "iuv");
    const fs::path out = dir / "tryon";
    CHECK(cli(runs, "tryon" + io + " --parsing '" + (dir / "absent.mask.png").string() + "' --run-name r").code == 2);
    CHECK(cli(runs, "tryon" + io + " --run-name nothing_here").code == 4);
    REQUIRE(cli(runs, "tryon" + io + " --parsing " + sample(data, 1, 1, "mask") + " --run-name r --out-dir '" +
                          out.string() + "' --save-intermediates")
                .code == 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(out)) files += e.path().extension() == ".png";
    CHECK(files == 6);
    const ImageTensor p = load_image(out / "output.png");
    CHECK(p.height() == 32);

    const fs::path g1 = dir / "g1", g2 = dir / "g2";
    REQUIRE(cli(runs, "eval-gallery --manifest " + man + " --run-name r --rows 5 --out-dir '" + g1.string() + "'")
                .code == 0);
    REQUIRE(cli(runs, "eval-gallery --manifest " + man + " --run-name r --rows 5 --out-dir '" + g2.string() + "'")
                .code == 0);
    for (int i = 0; i < 5; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "row_%03d.png", i);
      REQUIRE(fs::exists(g1 / name));
      const ImageTensor row = load_image(g1 / name);
      CHECK(row.height() == 32);
      CHECK(row.width() == kGalleryPanels * 32);
      CHECK(slurp(g1 / name) == slurp(g2 / name));
    }
    CHECK_FALSE(fs::exists(g1 / "row_005.png"));
    CHECK(fs::exists(g1 / "index.html"));
    CHECK(cli(runs, "eval-gallery --manifest '" + (dir / "absent.txt").string() + "' --run-name r --out-dir '" +
                        (dir / "g3").string() + "'")
              .code == 2);
  }
}
