#include "m2e/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>

#include "m2e/error.hpp"

namespace m2e {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw InputError("config " + key + ": not an integer: " + v);
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InputError("config " + key + ": not a number: " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw InputError("config " + key + ": not a boolean: " + v);
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define M2E_DOUBLE(name, member)                                                                        \
  {name,                                                                                                \
   {[](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_double(k, v); }, \
    [](const TrainConfig& c) { return fmt_double(c.member); }}}
#define M2E_INT(name, member)                                                                                   \
  {name,                                                                                                        \
   {[](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_int<decltype(c.member)>(k, v); }, \
    [](const TrainConfig& c) { return std::to_string(c.member); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      M2E_DOUBLE("learning_rate", learning_rate),
      M2E_DOUBLE("adam_beta1", adam_beta1),
      M2E_DOUBLE("adam_beta2", adam_beta2),
      M2E_INT("epochs_pan", epochs_pan),
      M2E_INT("epochs_trn", epochs_trn),
      M2E_INT("epochs_ftn", epochs_ftn),
      M2E_INT("epochs_roi", epochs_roi),
      M2E_INT("iterations_pan", iterations_pan),
      M2E_INT("iterations_trn", iterations_trn),
      M2E_INT("iterations_ftn", iterations_ftn),
      M2E_INT("iterations_roi", iterations_roi),
      M2E_INT("batch_size", batch_size),
      M2E_INT("seed", seed),
      M2E_INT("resolution", resolution),
      M2E_DOUBLE("w_gan", weights.gan),
      M2E_DOUBLE("w_l1", weights.l1),
      M2E_DOUBLE("w_l2", weights.l2),
      M2E_DOUBLE("w_perc", weights.perc),
      M2E_DOUBLE("w_style", weights.style),
      M2E_INT("paired_steps", paired_steps),
      M2E_INT("unpaired_steps", unpaired_steps),
      M2E_INT("gen_width", gen_width),
      M2E_INT("gen_blocks", gen_blocks),
      M2E_INT("disc_width", disc_width),
      M2E_INT("disc_stages", disc_stages),
      M2E_INT("extractor_width", extractor_width),
      {"extractor_weights",
       {[](TrainConfig& c, const std::string&, const std::string& v) { c.extractor_weights = v; },
        [](const TrainConfig& c) { return c.extractor_weights; }}},
      M2E_INT("threads", threads),
      {"composite_passthrough",
       {[](TrainConfig& c, const std::string& k, const std::string& v) { c.composite_passthrough = parse_bool(k, v); },
        [](const TrainConfig& c) { return std::string(c.composite_passthrough ? "true" : "false"); }}},
      M2E_INT("checkpoint_every", checkpoint_every),
      M2E_DOUBLE("abort_threshold", abort_threshold),
  };
  return table;
}

#undef M2E_DOUBLE
#undef M2E_INT

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(*this, key, trim(value));
      return;
    }
  }
  throw InputError("unknown config key: " + key);
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, field] : fields()) out.emplace_back(name, field.get(*this));
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw InputError("invalid config: " + m); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam betas in [0,1)");
  for (int e : {epochs_pan, epochs_trn, epochs_ftn, epochs_roi}) {
    if (e < 0) fail("epochs must be non-negative");
  }
  for (int i : {iterations_pan, iterations_trn, iterations_ftn, iterations_roi}) {
    if (i < 0) fail("iterations must be non-negative");
  }
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (resolution < 32 || (resolution & (resolution - 1)) != 0) fail("resolution must be a power of two >= 32");
  if (paired_steps < 0 || unpaired_steps < 0 || paired_steps + unpaired_steps == 0) {
    fail("alternation needs at least one paired or unpaired step");
  }
  if (gen_width < 1 || gen_blocks < 0 || disc_width < 1 || disc_stages < 1 || extractor_width < 1) {
    fail("network widths must be positive");
  }
  if (threads < 0) fail("threads must be non-negative");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
  if (!(abort_threshold > 0.0)) fail("abort_threshold must be positive");
  try {
    weights.validate();
  } catch (const DomainError& e) {
    fail(e.what());
  }
}

int TrainConfig::epochs(Stage s) const {
  switch (s) {
    case Stage::Pan: return epochs_pan;
    case Stage::Trn: return epochs_trn;
    case Stage::Roi: return epochs_roi;
    case Stage::Ftn: return epochs_ftn;
  }
  return 0;
}

int TrainConfig::iterations(Stage s) const {
  switch (s) {
    case Stage::Pan: return iterations_pan;
    case Stage::Trn: return iterations_trn;
    case Stage::Roi: return iterations_roi;
    case Stage::Ftn: return iterations_ftn;
  }
  return 0;
}

GeneratorSpec TrainConfig::generator_spec(Stage s) const { return default_generator_spec(s, gen_width, gen_blocks); }

DiscriminatorSpec TrainConfig::discriminator_spec() const { return {6, disc_width, disc_stages}; }

void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("missing config file: " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

TrainConfig load_config(const std::filesystem::path& path) {
  TrainConfig cfg;
  apply_config_file(cfg, path);
  return cfg;
}

void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InputError("cannot write config " + path.string());
  for (const auto& [k, v] : cfg.entries()) os << k << " = " << v << "\n";
}

TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.resolution = 64;
  cfg.batch_size = 2;
  cfg.gen_width = 16;
  cfg.gen_blocks = 6;
  cfg.disc_width = 16;
  cfg.extractor_width = 4;
  cfg.iterations_roi = 50;
  cfg.iterations_pan = 200;
  cfg.iterations_trn = 100;
  cfg.iterations_ftn = 100;
  cfg.checkpoint_every = 0;
  return cfg;
}

}  // namespace m2e
