#include "m2e/networks.hpp"

#include <algorithm>

#include "m2e/error.hpp"
#include "m2e/nn/optim.hpp"

namespace m2e {

using nn::Conv2d;
using nn::ConvTranspose2d;
using nn::InstanceNorm2d;
using nn::LeakyReLU;
using nn::ReLU;
using nn::ResidualBlock;

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Pan: return "pan";
    case Stage::Trn: return "trn";
    case Stage::Roi: return "roi";
    case Stage::Ftn: return "ftn";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::Pan, Stage::Trn, Stage::Roi, Stage::Ftn}) {
    if (stage_name(s) == name) return s;
  }
  throw InputError("unknown stage '" + name + "' (expected pan, trn, roi or ftn)");
}

int stage_in_channels(Stage s) {
  switch (s) {
    case Stage::Pan: return 12;
    case Stage::Trn: return 4;
    case Stage::Roi: return 6;
    case Stage::Ftn: return 6;
  }
  return 0;
}

int stage_out_channels(Stage s) { return s == Stage::Roi ? 1 : 3; }

GeneratorSpec default_generator_spec(Stage s, int width, int residual_blocks) {
  GeneratorSpec spec;
  spec.in_channels = stage_in_channels(s);
  spec.out_channels = stage_out_channels(s);
  spec.width = width;
  spec.residual_blocks = residual_blocks;
  spec.sigmoid_head = s == Stage::Roi;
  return spec;
}

// ------------------------------------------------------------- generator

Generator::Generator(Stage stage, const GeneratorSpec& spec) : stage_(stage), spec_(spec) {
  const std::string tag = stage_name(stage);
  if (spec.in_channels != stage_in_channels(stage)) {
    throw DomainError(tag + " consumes exactly " + std::to_string(stage_in_channels(stage)) +
                      " input channels, spec has " + std::to_string(spec.in_channels));
  }
  if (spec.out_channels != stage_out_channels(stage) || spec.sigmoid_head != (stage == Stage::Roi)) {
    throw DomainError(tag + " output head does not match its contract");
  }
  if (spec.width < 1 || spec.residual_blocks < 0) throw DomainError("invalid generator width or block count");

  const int w = spec.width;
  net_.emplace<Conv2d<float>>("enc0", spec.in_channels, w, 7, 1, 3);
  net_.emplace<InstanceNorm2d<float>>("enc0_norm");
  net_.emplace<ReLU<float>>("enc0_relu");
  net_.emplace<Conv2d<float>>("enc1", w, 2 * w, 3, 2, 1);
  net_.emplace<InstanceNorm2d<float>>("enc1_norm");
  net_.emplace<ReLU<float>>("enc1_relu");
  net_.emplace<Conv2d<float>>("enc2", 2 * w, 4 * w, 3, 2, 1);
  net_.emplace<InstanceNorm2d<float>>("enc2_norm");
  net_.emplace<ReLU<float>>("enc2_relu");
  for (int i = 0; i < spec.residual_blocks; ++i) {
    net_.emplace<ResidualBlock<float>>("res" + std::to_string(i), 4 * w);
  }
  net_.emplace<ConvTranspose2d<float>>("dec0", 4 * w, 2 * w, 4, 2, 1);
  net_.emplace<InstanceNorm2d<float>>("dec0_norm");
  net_.emplace<ReLU<float>>("dec0_relu");
  net_.emplace<ConvTranspose2d<float>>("dec1", 2 * w, w, 4, 2, 1);
  net_.emplace<InstanceNorm2d<float>>("dec1_norm");
  net_.emplace<ReLU<float>>("dec1_relu");
  net_.emplace<Conv2d<float>>("head", w, spec.out_channels, 7, 1, 3);
  if (spec.sigmoid_head) {
    net_.emplace<nn::Sigmoid<float>>("sigmoid");
  } else {
    net_.emplace<nn::Tanh<float>>("tanh");
  }
}

TensorF Generator::forward(const TensorF& x) {
  const std::string tag = stage_name(stage_);
  if (x.c() != spec_.in_channels) {
    throw DomainError(tag + " expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                      std::to_string(x.c()));
  }
  if (x.h() % 4 != 0 || x.w() % 4 != 0 || x.h() < 4 || x.w() < 4) {
    throw DomainError(tag + " input side must be a positive multiple of 4, got " + x.shape().str());
  }
  if (!x.all_finite()) throw DomainError(tag + " input contains non-finite values");
  return net_.forward(x);
}

TensorF Generator::backward(const TensorF& grad_out) { return net_.backward(grad_out); }

void Generator::collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<float>>& out) {
  net_.collect_parameters(prefix, out);
}

// --------------------------------------------------------- discriminator

Discriminator::Discriminator(const DiscriminatorSpec& spec) : spec_(spec) {
  if (spec.in_channels != 6) {
    throw DomainError("discriminator consumes exactly 6 input channels, got " +
                      std::to_string(spec.in_channels));
  }
  if (spec.stride2_stages < 1 || spec.width < 1) throw DomainError("invalid discriminator spec");
  int ch = spec.width;
  net_.emplace<Conv2d<float>>("c0", spec.in_channels, ch, 4, 2, 1);
  net_.emplace<LeakyReLU<float>>("c0_act");
  for (int i = 1; i < spec.stride2_stages; ++i) {
    const int next = std::min(ch * 2, spec.width * 8);
    const std::string id = "c" + std::to_string(i);
    net_.emplace<Conv2d<float>>(id, ch, next, 4, 2, 1);
    net_.emplace<InstanceNorm2d<float>>(id + "_norm");
    net_.emplace<LeakyReLU<float>>(id + "_act");
    ch = next;
  }
  const std::string id = "c" + std::to_string(spec.stride2_stages);
  net_.emplace<Conv2d<float>>(id, ch, spec.width * 8, 4, 1, 1);
  net_.emplace<InstanceNorm2d<float>>(id + "_norm");
  net_.emplace<LeakyReLU<float>>(id + "_act");
  net_.emplace<Conv2d<float>>("logit", spec.width * 8, 1, 4, 1, 1);
}

int Discriminator::output_side(int input) const {
  int s = input;
  for (int i = 0; i < spec_.stride2_stages; ++i) s = (s + 2 - 4) / 2 + 1;
  s -= 1;  // k4 s1 p1
  s -= 1;
  return s;
}

TensorF Discriminator::forward(const TensorF& x) {
  if (x.c() != spec_.in_channels) {
    throw DomainError("discriminator expects 6 input channels, got " + std::to_string(x.c()));
  }
  if (output_side(x.h()) < 1 || output_side(x.w()) < 1) {
    throw DomainError("discriminator input too small: " + x.shape().str());
  }
  if (!x.all_finite()) throw DomainError("discriminator input contains non-finite values");
  return net_.forward(x);
}

TensorF Discriminator::backward(const TensorF& grad_out) { return net_.backward(grad_out); }

void Discriminator::collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<float>>& out) {
  net_.collect_parameters(prefix, out);
}

void init_weights(nn::Module<float>& net, std::uint64_t seed) { nn::init_normal(net, seed, 0.02); }

// ------------------------------------------------------------ conversion

TensorF image_tensor(const ImageTensor& img) {
  if (img.range() != Range::UnitSigned) throw DomainError("network input must be unit_signed");
  const int h = img.height(), w = img.width();
  TensorF t(1, 3, h, w);
  for (int c = 0; c < 3; ++c) {
    float* dst = t.channel(0, c);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) dst[p] = img.at(p, c);
  }
  return t;
}

ImageTensor tensor_image(const TensorF& t, int n) {
  if (t.c() != 3) throw DomainError("image tensor must have 3 channels, got " + std::to_string(t.c()));
  ImageTensor img(t.h(), t.w(), Range::UnitSigned);
  for (int c = 0; c < 3; ++c) {
    const float* src = t.channel(n, c);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) img.at(p, c) = std::clamp(src[p], -1.0f, 1.0f);
  }
  return img;
}

TensorF mask_tensor(const BinaryMask& mask) {
  TensorF t(1, 1, mask.height(), mask.width());
  std::copy(mask.values().begin(), mask.values().end(), t.data());
  return t;
}

BinaryMask tensor_mask(const TensorF& t, int n) {
  if (t.c() != 1) throw DomainError("mask tensor must have 1 channel, got " + std::to_string(t.c()));
  BinaryMask m(t.h(), t.w());
  const float* src = t.channel(n, 0);
  for (std::size_t p = 0; p < m.pixel_count(); ++p) m.at(p) = std::clamp(src[p], 0.0f, 1.0f);
  return m;
}

TensorF encode_iuv(const IuvMap& iuv) {
  TensorF t(1, 3, iuv.height(), iuv.width());
  float* part = t.channel(0, 0);
  float* u = t.channel(0, 1);
  float* v = t.channel(0, 2);
  for (std::size_t p = 0; p < iuv.pixel_count(); ++p) {
    part[p] = 2.0f * static_cast<float>(iuv.part(p)) / kNumParts - 1.0f;
    u[p] = 2.0f * iuv.u(p) - 1.0f;
    v[p] = 2.0f * iuv.v(p) - 1.0f;
  }
  return t;
}

namespace {

template <typename A, typename B>
void require_same(const A& a, const B& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw InputError(std::string(what) + ": dimension mismatch (" + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
}

}  // namespace

TensorF pan_input(const ImageTensor& model, const IuvMap& model_iuv, const IuvMap& person_iuv,
                  const ImageTensor& warped) {
  require_same(model, model_iuv, "pan");
  require_same(model, person_iuv, "pan");
  require_same(model, warped, "pan");
  const TensorF a = image_tensor(model), b = encode_iuv(model_iuv), c = encode_iuv(person_iuv),
                d = image_tensor(warped);
  return nn::concat_channels<float>({&a, &b, &c, &d});
}

TensorF trn_input(const ImageTensor& merged, const BinaryMask& region) {
  require_same(merged, region, "trn");
  const TensorF a = image_tensor(merged), b = mask_tensor(region);
  return nn::concat_channels<float>({&a, &b});
}

TensorF roi_input(const ImageTensor& person, const IuvMap& person_iuv) {
  require_same(person, person_iuv, "roi");
  const TensorF a = image_tensor(person), b = encode_iuv(person_iuv);
  return nn::concat_channels<float>({&a, &b});
}

TensorF ftn_input(const ImageTensor& garment, const ImageTensor& person_rest) {
  require_same(garment, person_rest, "ftn");
  const TensorF a = image_tensor(garment), b = image_tensor(person_rest);
  return nn::concat_channels<float>({&a, &b});
}

TensorF disc_input(const ImageTensor& img, const IuvMap& iuv) {
  require_same(img, iuv, "discriminator");
  const TensorF a = image_tensor(img), b = encode_iuv(iuv);
  return nn::concat_channels<float>({&a, &b});
}

ImageTensor pan_forward(Generator& pan, const ImageTensor& model, const IuvMap& model_iuv,
                        const IuvMap& person_iuv, const ImageTensor& warped) {
  return tensor_image(pan.forward(pan_input(model, model_iuv, person_iuv, warped)));
}

ImageTensor trn_forward(Generator& trn, const ImageTensor& merged, const BinaryMask& region) {
  return tensor_image(trn.forward(trn_input(merged, region)));
}

BinaryMask roi_forward(Generator& roi, const ImageTensor& person, const IuvMap& person_iuv) {
  return tensor_mask(roi.forward(roi_input(person, person_iuv)));
}

ImageTensor ftn_forward(Generator& ftn, const ImageTensor& garment, const ImageTensor& person_rest) {
  return tensor_image(ftn.forward(ftn_input(garment, person_rest)));
}

TensorF disc_forward(Discriminator& disc, const ImageTensor& img, const IuvMap& iuv) {
  return disc.forward(disc_input(img, iuv));
}

const std::set<int>& default_upper_parts() {
  static const std::set<int> parts{1, 2, 15, 16, 17, 18, 19, 20, 21, 22};
  return parts;
}

BinaryMask union_roi(const BinaryMask& clothes, const IuvMap& iuv, const std::set<int>& upper_parts) {
  require_same(clothes, iuv, "union_roi");
  BinaryMask out(clothes.height(), clothes.width());
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const float body = upper_parts.count(iuv.part(p)) ? 1.0f : 0.0f;
    out.at(p) = std::max(clothes.at(p), body);
  }
  return out;
}

}  // namespace m2e
