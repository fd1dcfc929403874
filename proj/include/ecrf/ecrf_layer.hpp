#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "ecrf/gridcore.hpp"
#include "ecrf/neighborhood.hpp"
#include "ecrf/superpixel.hpp"
#include "ecrf/tensor.hpp"

// Embedded CRF layer: message passing on high-level features,
//
//   F*_i = (F_i + sum_{j in G(i)} psi(i,j) F_j + s * F^S_i) / Z_i
//   psi(i,j) = mu(i,j) * k(i,j)
//   k(i,j)   = max(0, e_i . e_j),  e_i = A [color_i, pos_i] + a
//   mu(i,j)  = sigmoid(u . F_i + v . F_j + b)
//   F^S_i    = mean of F over the superpixel block containing i
//   Z_i      = 1 + sum_j psi(i,j) + s
//
// with s = 1 when superpixel pooling is enabled. Disabled terms drop out of
// both the sum and Z_i, so with both off F* = F.
namespace ecrf::layer {

template <typename T>
struct EcrfParams {
  int feature_channels = 0;
  int token_dim = 0;  // 3 color channels + position embedding size
  int embed_dim = 0;
  std::vector<T> embed_weight;   // embed_dim x token_dim, row-major
  std::vector<T> embed_bias;     // embed_dim
  std::vector<T> compat_weight;  // 2C: [u for F_i, v for F_j]
  T compat_bias = T(0);
  bool use_pairwise = true;
  bool use_superpixel = true;
  Neighborhood neighborhood;

  static EcrfParams zeros(int feature_channels, int position_dim, int embed_dim);
  // Fan-in scaled Gaussian embed weights, zero biases and compat map.
  static EcrfParams initialized(int feature_channels, int position_dim, int embed_dim, std::mt19937_64& rng,
                                double embed_gain = 1.0);

  int position_dim() const { return token_dim - 3; }
  void validate() const;

  template <typename U>
  EcrfParams<U> cast() const;
};

template <typename T>
struct EcrfGrads {
  std::vector<T> embed_weight;
  std::vector<T> embed_bias;
  std::vector<T> compat_weight;
  T compat_bias = T(0);

  static EcrfGrads zeros_like(const EcrfParams<T>& params);
  bool all_zero() const;
};

// Per-image inputs at feature resolution; constant during training.
template <typename T>
struct EcrfContext {
  int height = 0;
  int width = 0;
  Tensor3<T> tokens;                 // cells x token_dim: [color, position]
  superpixel::SuperpixelMap blocks;  // at feature resolution
  std::vector<int> block_sizes;
};

// Area-averages colors, builds sinusoidal positions on the given frequency
// ladder base and resamples the superpixel map (nearest neighbour) to
// height x width.
template <typename T>
EcrfContext<T> make_context(const Image& image, const superpixel::SuperpixelMap& sp, int height, int width,
                            int position_dim, double position_base = 10000.0);

template <typename T>
struct EcrfActivation {
  bool valid = false;
  EcrfParams<T> params;
  Tensor3<T> tokens;
  std::vector<std::int32_t> block_ids;
  std::vector<int> block_sizes;

  Tensor3<T> input;
  Tensor3<T> embedded;          // cells x embed_dim
  std::vector<T> row_logit;     // u . F_i
  std::vector<T> col_logit;     // v . F_j
  std::vector<int> pair_begin;  // CSR over pairs (i, j), j in G(i)
  std::vector<int> pair_col;
  std::vector<T> compat;        // mu(i, j)
  std::vector<T> kernel;        // k(i, j), clamped at zero
  Tensor3<T> pooled;            // F^S
  std::vector<T> normalizers;   // Z_i
  Tensor3<T> output;            // F*
};

template <typename T>
struct EcrfBackward {
  Tensor3<T> grad_features;
  EcrfGrads<T> grad_params;
};

template <typename T>
std::vector<T> kernel_embed(std::span<const T> token, const EcrfParams<T>& params);

// N x N matrix of clamped kernel values over all pairs (diagonal included).
template <typename T>
std::vector<T> kernel_matrix(const EcrfContext<T>& context, const EcrfParams<T>& params);

template <typename T>
T feature_compat(std::span<const T> f_i, std::span<const T> f_j, const EcrfParams<T>& params);

template <typename T>
Tensor3<T> superpixel_pool(const Tensor3<T>& features, const superpixel::SuperpixelMap& blocks);

template <typename T>
std::pair<Tensor3<T>, EcrfActivation<T>> ecrf_forward(const Tensor3<T>& features, const EcrfContext<T>& context,
                                                      const EcrfParams<T>& params);

template <typename T>
std::pair<Tensor3<T>, EcrfActivation<T>> ecrf_forward(const Tensor3<T>& features, const Image& image,
                                                      const superpixel::SuperpixelMap& sp,
                                                      const EcrfParams<T>& params);

template <typename T>
EcrfBackward<T> ecrf_backward(const EcrfActivation<T>& activation, const Tensor3<T>& upstream);

// Number of pairwise buffers built by ecrf_forward since process start.
long pair_buffer_allocations();

}  // namespace ecrf::layer
