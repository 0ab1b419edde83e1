#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "m2e/image.hpp"
#include "m2e/nn/layers.hpp"

namespace m2e {

using TensorF = nn::Tensor<float>;

/// The four trainable generators, in pipeline order of training.
enum class Stage { Pan, Trn, Roi, Ftn };

std::string stage_name(Stage s);  // "pan", "trn", "roi", "ftn"
/// Throws InputError on an unknown name.
Stage parse_stage(const std::string& name);

/// Fixed input-channel contract per stage:
///   pan 12 = M(3) + M_D(3) + P_D(3) + M'_W(3)
///   trn  4 = M^(3) + R(1)
///   roi  6 = P(3) + P_D(3)
///   ftn  6 = M^'_R(3) + P^(3)
int stage_in_channels(Stage s);
int stage_out_channels(Stage s);

/// Encoder: 7x7 stride-1 conv to `width`, then two 3x3 stride-2 convs to
/// 4*width at 1/4 resolution. Residual blocks at 4*width. Decoder: two 4x4
/// stride-2 transposed convs and a 7x7 conv into a tanh (or sigmoid) head.
/// Instance norm and ReLU follow every conv except the head.
struct GeneratorSpec {
  int in_channels = 12;
  int out_channels = 3;
  int width = 64;
  int residual_blocks = 6;
  bool sigmoid_head = false;
};

GeneratorSpec default_generator_spec(Stage s, int width = 64, int residual_blocks = 6);

/// Patch discriminator on an image concatenated with its encoded dense pose:
/// a 4x4 stride-2 conv + LeakyReLU(0.2), then `stride2_stages - 1` more
/// stride-2 convs with instance norm, one stride-1 conv at 8*width and a
/// stride-1 conv to a one-channel logit map. With three stride-2 stages a
/// 256 input gives a 30x30 grid and a 64 input a 6x6 grid.
struct DiscriminatorSpec {
  int in_channels = 6;
  int width = 64;
  int stride2_stages = 3;
};

class Generator : public nn::Module<float> {
 public:
  /// Throws DomainError when `spec` breaks the stage's channel contract.
  Generator(Stage stage, const GeneratorSpec& spec);

  /// Rejects inputs with the wrong channel count, non-finite values, or a side not divisible by 4.
  TensorF forward(const TensorF& x) override;
  TensorF backward(const TensorF& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<float>>& out) override;

  Stage stage() const { return stage_; }
  const GeneratorSpec& spec() const { return spec_; }

 private:
  Stage stage_;
  GeneratorSpec spec_;
  nn::Sequential<float> net_;
};

class Discriminator : public nn::Module<float> {
 public:
  explicit Discriminator(const DiscriminatorSpec& spec);

  TensorF forward(const TensorF& x) override;
  TensorF backward(const TensorF& grad_out) override;
  void collect_parameters(const std::string& prefix, std::vector<nn::NamedParameter<float>>& out) override;

  const DiscriminatorSpec& spec() const { return spec_; }
  /// Side of the logit grid for a square input of side `input`.
  int output_side(int input) const;

 private:
  DiscriminatorSpec spec_;
  nn::Sequential<float> net_;
};

/// Gaussian N(0, 0.02) weights and zero biases, deterministic in `seed`.
void init_weights(nn::Module<float>& net, std::uint64_t seed);

// Raster <-> tensor conversions. Tensors are (1, C, H, W).

/// Requires a unit_signed image.
TensorF image_tensor(const ImageTensor& img);
/// Maps sample `n` of a 3-channel tensor to a unit_signed image, clamping to [-1, 1].
ImageTensor tensor_image(const TensorF& t, int n = 0);
TensorF mask_tensor(const BinaryMask& mask);
/// Clamps to [0, 1].
BinaryMask tensor_mask(const TensorF& t, int n = 0);
/// Three channels in [-1, 1]: part / 24, u and v, each mapped x -> 2x - 1.
TensorF encode_iuv(const IuvMap& iuv);

// Per-sample input assembly. Each checks matching dimensions (InputError).
TensorF pan_input(const ImageTensor& model, const IuvMap& model_iuv, const IuvMap& person_iuv,
                  const ImageTensor& warped);
TensorF trn_input(const ImageTensor& merged, const BinaryMask& region);
TensorF roi_input(const ImageTensor& person, const IuvMap& person_iuv);
TensorF ftn_input(const ImageTensor& garment, const ImageTensor& person_rest);
TensorF disc_input(const ImageTensor& img, const IuvMap& iuv);

ImageTensor pan_forward(Generator& pan, const ImageTensor& model, const IuvMap& model_iuv,
                        const IuvMap& person_iuv, const ImageTensor& warped);
ImageTensor trn_forward(Generator& trn, const ImageTensor& merged, const BinaryMask& region);
/// Soft mask in [0, 1]; binarize at 0.5 for hard use.
BinaryMask roi_forward(Generator& roi, const ImageTensor& person, const IuvMap& person_iuv);
ImageTensor ftn_forward(Generator& ftn, const ImageTensor& garment, const ImageTensor& person_rest);
/// Logit map (1, 1, G, G).
TensorF disc_forward(Discriminator& disc, const ImageTensor& img, const IuvMap& iuv);

/// Dense-pose parts treated as upper body for the region of interest:
/// torso (1, 2), upper arms (15-18) and lower arms (19-22).
const std::set<int>& default_upper_parts();

/// out[p] = max(clothes[p], 1 if part[p] is in `upper_parts`).
BinaryMask union_roi(const BinaryMask& clothes, const IuvMap& iuv, const std::set<int>& upper_parts);

}  // namespace m2e
