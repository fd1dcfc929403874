#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecrf/densecrf.hpp"
#include "ecrf/ecrf_layer.hpp"
#include "ecrf/gradtheory.hpp"
#include "ecrf/gridcore.hpp"
#include "ecrf/superpixel.hpp"

namespace ecrf::toynet {

enum class Mode { baseline, joint, ecrf };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

struct ConvSpec {
  int channels = 16;
  int kernel = 3;
  int stride = 1;
};

struct NetConfig {
  std::vector<ConvSpec> layers{{16, 3, 2}, {32, 3, 2}, {32, 3, 1}};
  int num_classes = 8;

  int feature_stride() const;
  int feature_channels() const;
  void validate() const;
  // DimensionError unless the total stride divides both sides.
  void check_input(int height, int width) const;
};

struct EcrfOptions {
  bool use_pairwise = true;
  bool use_superpixel = true;
  int embed_dim = 16;
  int position_dim = 16;
  double position_base = 10000.0;
  std::optional<int> window_radius;  // all pairs when empty
  double embed_gain = 1.0;
};

struct JointOptions {
  densecrf::GaussianKernelParams kernel;
  int radius = 4;
};

struct ModelConfig {
  NetConfig net;
  Mode mode = Mode::baseline;
  EcrfOptions ecrf;
  JointOptions joint;

  void validate() const;
};

template <typename T>
struct ConvLayer {
  ConvSpec spec;
  int in_channels = 0;
  std::vector<T> weight;  // kernel x kernel x out x in, row-major
  std::vector<T> bias;
};

template <typename T>
struct ParamSlot {
  std::string name;
  std::span<T> values;
  std::vector<int> dims;
  bool decay = true;
};

template <typename T>
struct Model {
  ModelConfig config;
  std::vector<ConvLayer<T>> convs;
  std::vector<T> classifier;  // C x n, column c is the class weight W_c
  layer::EcrfParams<T> ecrf;  // empty outside ecrf mode

  // Kaiming fan-in conv and embed weights, zero biases and compat map.
  static Model initialized(const ModelConfig& config, std::mt19937_64& rng);
  static Model zeros(const ModelConfig& config);
  Model zeros_like() const { return zeros(config); }

  // Fixed order shared by checkpoints and the optimizer. The compat bias is
  // the only slot excluded from weight decay.
  std::vector<ParamSlot<T>> parameters();
  std::vector<ParamSlot<const T>> parameters() const;

  gradtheory::ClassifierWeights class_weights() const;

  template <typename U>
  Model<U> cast() const;
};

// Per-image inputs that stay fixed during training.
template <typename T>
struct PreparedSample {
  Tensor3<T> input;            // H x W x 3
  LabelMap targets;            // labels at feature resolution (may be empty)
  layer::EcrfContext<T> ecrf;  // ecrf mode
  // Joint mode: CSR list of window neighbours and their Gaussian weights.
  std::vector<int> joint_begin;
  std::vector<int> joint_col;
  std::vector<T> joint_weight;
};

// `labels` and `sp` may be null; `sp` is required in ecrf mode.
template <typename T>
PreparedSample<T> prepare_sample(const ModelConfig& config, const Image& image, const LabelMap* labels,
                                 const superpixel::SuperpixelMap* sp);

template <typename T>
struct ForwardState {
  std::vector<Tensor3<T>> activations;  // [0] input, [l + 1] relu(conv_l)
  layer::EcrfActivation<T> ecrf;
  Tensor3<T> refined;  // classifier input (F or F*)
  Tensor3<T> logits;
  Tensor3<T> probs;   // softmax(logits)
  Tensor3<T> output;  // final distribution; refined probabilities in joint mode

  const Tensor3<T>& features() const { return activations.back(); }
};

template <typename T>
ForwardState<T> forward(const Model<T>& model, const PreparedSample<T>& sample);

// Mean cross entropy of `state.output` against the targets, ignoring
// kIgnoreLabel. Zero when no cell is labelled.
template <typename T>
T loss_value(const ForwardState<T>& state, const PreparedSample<T>& sample);

// Accumulates scale * dLoss/dtheta into `grads` and returns the loss.
template <typename T>
T backward(const Model<T>& model, const PreparedSample<T>& sample, const ForwardState<T>& state, Model<T>& grads,
           T scale = T(1));

// Bilinear resize with half-pixel centers.
template <typename T>
Tensor3<T> upsample_bilinear(const Tensor3<T>& src, int out_height, int out_width);

// Full-resolution argmax of the upsampled output distribution.
template <typename T>
LabelMap predict(const Model<T>& model, const PreparedSample<T>& sample, int height, int width);

}  // namespace ecrf::toynet
