#include "m2e/nn/param_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "m2e/error.hpp"
#include "m2e/nn/optim.hpp"

namespace m2e::nn {
namespace {

constexpr char kMagic[8] = {'M', '2', 'E', 'P', 'A', 'R', 'A', 'M'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw InputError("truncated parameter file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>* ParamFile::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void ParamFile::put(std::string name, Tensor<float> t) {
  for (auto& [n, existing] : tensors) {
    if (n == name) {
      existing = std::move(t);
      return;
    }
  }
  tensors.emplace_back(std::move(name), std::move(t));
}

std::vector<std::uint8_t> serialize(const ParamFile& file) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(file.meta.size()));
  for (const auto& [k, v] : file.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, t] : file.tensors) {
    w.str(name);
    w.u32(4);
    w.u32(static_cast<std::uint32_t>(t.n()));
    w.u32(static_cast<std::uint32_t>(t.c()));
    w.u32(static_cast<std::uint32_t>(t.h()));
    w.u32(static_cast<std::uint32_t>(t.w()));
    for (float x : t.span()) w.f32(x);
  }
  const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
  w.u64(sum);
  return std::move(w.buffer());
}

ParamFile deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kMagic) + 12 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw InputError("not a parameter file");
  }
  const std::uint64_t expect = fnv1a(bytes.data(), bytes.size() - 8);
  ParamFile out;
  Reader rd(bytes);
  rd.u64();  // magic
  if (rd.u32() != kVersion) throw InputError("unsupported parameter file version");
  const std::uint32_t meta = rd.u32();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = rd.str();
    out.meta[k] = rd.str();
  }
  const std::uint32_t count = rd.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = rd.str();
    if (rd.u32() != 4) throw InputError("unsupported tensor rank in parameter file");
    Shape s;
    s.n = static_cast<int>(rd.u32());
    s.c = static_cast<int>(rd.u32());
    s.h = static_cast<int>(rd.u32());
    s.w = static_cast<int>(rd.u32());
    rd.need(s.size() * 4);
    Tensor<float> t(s);
    for (auto& x : t.span()) x = rd.f32();
    out.tensors.emplace_back(std::move(name), std::move(t));
  }
  out.checksum = rd.u64();
  if (out.checksum != expect) throw InputError("parameter file checksum mismatch");
  if (rd.pos() != bytes.size()) throw InputError("trailing bytes in parameter file");
  return out;
}

void write_param_file(const std::filesystem::path& path, ParamFile& file) {
  const auto bytes = serialize(file);
  std::uint64_t sum = 0;
  for (int i = 0; i < 8; ++i) sum |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
  file.checksum = sum;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InputError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw InputError("cannot write " + path.string());
}

ParamFile read_param_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("missing parameter file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const InputError& e) {
    throw InputError(std::string(e.what()) + ": " + path.string());
  }
}

void export_module(Module<float>& module, const std::string& prefix, ParamFile& file) {
  for (auto& np : module.named_parameters()) file.put(prefix + "/" + np.name, np.param->value);
}

void import_module(Module<float>& module, const std::string& prefix, const ParamFile& file) {
  for (auto& np : module.named_parameters()) {
    const std::string key = prefix + "/" + np.name;
    const Tensor<float>* t = file.find(key);
    if (!t) throw InputError("parameter file lacks " + key);
    if (!(t->shape() == np.param->value.shape())) {
      throw InputError("shape mismatch for " + key + ": file " + t->shape().str() + ", model " +
                       np.param->value.shape().str());
    }
    np.param->value = *t;
  }
}

}  // namespace m2e::nn
