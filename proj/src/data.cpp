#include "m2e/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "m2e/error.hpp"
#include "m2e/image_io.hpp"

namespace fs = std::filesystem;

namespace m2e {

namespace {

constexpr const char* kImageSuffix = ".image.png";
constexpr const char* kIuvSuffix = ".iuv.png";
constexpr const char* kMaskSuffix = ".mask.png";

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> sorted_dirs(const fs::path& p) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void require_readable(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) throw InputError("unreadable file: " + p.string());
  std::ifstream is(p, std::ios::binary);
  char c;
  if (!is || !is.read(&c, 1)) throw InputError("unreadable file: " + p.string());
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, '\t')) out.push_back(cur);
  return out;
}

}  // namespace

void Manifest::validate() const {
  if (records.empty()) throw InputError("empty manifest");
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const auto& r : records) {
    if (!seen.emplace(r.identity, r.outfit, r.pose).second) {
      throw InputError("duplicate manifest record " + r.identity + "/" + r.outfit + "/" + r.pose);
    }
  }
}

ManifestBuild build_manifest(const fs::path& root, const std::string& split) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw InputError("manifest root is not a directory: " + root.string());
  ManifestBuild out;
  out.manifest.root = root;
  out.manifest.split = split;
  for (const auto& id_dir : sorted_dirs(root)) {
    for (const auto& outfit_dir : sorted_dirs(id_dir)) {
      // Every pose named by any of the three files.
      std::set<std::string> poses;
      for (const auto& e : fs::directory_iterator(outfit_dir)) {
        const std::string name = e.path().filename().string();
        for (const char* suffix : {kImageSuffix, kIuvSuffix, kMaskSuffix}) {
          if (ends_with(name, suffix)) poses.insert(name.substr(0, name.size() - std::string(suffix).size()));
        }
      }
      const std::string identity = id_dir.filename().string();
      const std::string outfit = outfit_dir.filename().string();
      for (const auto& pose : poses) {
        SampleRecord r{identity, outfit, pose, "", "", ""};
        const fs::path rel = fs::path(identity) / outfit;
        std::vector<std::string> missing;
        std::string* slots[] = {&r.image_path, &r.iuv_path, &r.mask_path};
        const char* suffixes[] = {kImageSuffix, kIuvSuffix, kMaskSuffix};
        for (int k = 0; k < 3; ++k) {
          const fs::path file = outfit_dir / (pose + suffixes[k]);
          if (!fs::exists(file, ec)) {
            missing.push_back(file.filename().string());
            continue;
          }
          require_readable(file);
          *slots[k] = (rel / (pose + suffixes[k])).generic_string();
        }
        if (!missing.empty()) {
          std::string msg = "skipping " + identity + "/" + outfit + "/" + pose + ": missing";
          for (const auto& m : missing) msg += " " + m;
          out.warnings.push_back(msg);
          continue;
        }
        out.manifest.records.push_back(std::move(r));
      }
    }
  }
  out.manifest.validate();
  return out;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  m.validate();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write manifest " + path.string());
  os << "#m2e-manifest 1\n";
  os << "#root " << m.root.string() << "\n";
  os << "#split " << m.split << "\n";
  for (const auto& r : m.records) {
    os << r.identity << '\t' << r.outfit << '\t' << r.pose << '\t' << r.image_path << '\t' << r.iuv_path << '\t'
       << (r.mask_path.empty() ? "-" : r.mask_path) << '\n';
  }
  if (!os) throw InputError("cannot write manifest " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("missing manifest: " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("#m2e-manifest", 0) == 0) {
        header = true;
      } else if (line.rfind("#root ", 0) == 0) {
        const fs::path root = line.substr(6);
        m.root = root.is_absolute() ? root : path.parent_path() / root;
      } else if (line.rfind("#split ", 0) == 0) {
        m.split = line.substr(7);
      }
      continue;
    }
    const auto f = split_tabs(line);
    if (f.size() != 6) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 6 tab-separated fields");
    }
    m.records.push_back({f[0], f[1], f[2], f[3], f[4], f[5] == "-" ? "" : f[5]});
  }
  if (!header) throw InputError("not a manifest file: " + path.string());
  m.validate();
  return m;
}

std::vector<std::pair<std::size_t, std::size_t>> pair_same_identity(const Manifest& m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < m.records.size(); ++a) {
    for (std::size_t b = 0; b < m.records.size(); ++b) {
      const auto& ra = m.records[a];
      const auto& rb = m.records[b];
      if (ra.identity == rb.identity && ra.outfit == rb.outfit && ra.pose != rb.pose) out.emplace_back(a, b);
    }
  }
  return out;
}

UnpairedSampler::UnpairedSampler(const Manifest& m, std::uint64_t seed) : rng_(seed) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < m.records.size(); ++i) groups[m.records[i].identity].push_back(i);
  if (groups.size() < 2) throw InputError("unpaired sampling needs at least two identities");
  for (auto& [name, idx] : groups) {
    names_.push_back(name);
    by_identity_.push_back(std::move(idx));
  }
}

std::pair<std::size_t, std::size_t> UnpairedSampler::next() {
  const std::size_t n = names_.size();
  const std::size_t a = rng_.uniform_index(n);
  std::size_t b = rng_.uniform_index(n - 1);
  if (b >= a) ++b;
  const auto& ra = by_identity_[a];
  const auto& rb = by_identity_[b];
  const std::size_t model = ra[rng_.uniform_index(ra.size())];
  const std::size_t person = rb[rng_.uniform_index(rb.size())];
  return {model, person};
}

LoadedSample load_sample(const Manifest& m, const SampleRecord& r, int resolution) {
  LoadedSample s;
  const ImageTensor img = load_image(m.resolve(r.image_path));
  const IuvMap iuv = load_iuv(m.resolve(r.iuv_path));
  if (img.height() != iuv.height() || img.width() != iuv.width()) {
    throw InputError("image and dense pose sizes differ for " + r.image_path);
  }
  s.image = to_signed(fit_image(img, resolution));
  s.iuv = fit_iuv(iuv, resolution);
  if (r.mask_path.empty()) {
    s.mask = BinaryMask(resolution, resolution);
  } else {
    s.mask = fit_mask(load_mask(m.resolve(r.mask_path)), resolution);
  }
  return s;
}

}  // namespace m2e
