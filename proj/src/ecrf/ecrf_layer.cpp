#include "ecrf/ecrf_layer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace ecrf::layer {
namespace {

std::atomic<long> g_pair_buffers{0};

template <typename T>
T dot(const T* a, const T* b, int n) {
  T s = T(0);
  for (int k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

template <typename T>
T sigmoid(T z) {
  return z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
}

template <typename T>
void check_finite(std::span<const T> values, int channels, const char* what) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw NumericError(std::string("ecrf_forward: non-finite ") + what + " at cell " +
                         std::to_string(k / static_cast<std::size_t>(channels)));
    }
  }
}

}  // namespace

long pair_buffer_allocations() { return g_pair_buffers.load(); }

template <typename T>
EcrfParams<T> EcrfParams<T>::zeros(int feature_channels, int position_dim, int embed_dim) {
  EcrfParams p;
  p.feature_channels = feature_channels;
  p.token_dim = 3 + position_dim;
  p.embed_dim = embed_dim;
  p.embed_weight.assign(static_cast<std::size_t>(embed_dim) * p.token_dim, T(0));
  p.embed_bias.assign(embed_dim, T(0));
  p.compat_weight.assign(2 * static_cast<std::size_t>(feature_channels), T(0));
  p.validate();
  return p;
}

template <typename T>
EcrfParams<T> EcrfParams<T>::initialized(int feature_channels, int position_dim, int embed_dim,
                                         std::mt19937_64& rng, double embed_gain) {
  EcrfParams p = zeros(feature_channels, position_dim, embed_dim);
  std::normal_distribution<double> normal(0.0, embed_gain * std::sqrt(2.0 / p.token_dim));
  for (T& w : p.embed_weight) w = static_cast<T>(normal(rng));
  return p;
}

template <typename T>
void EcrfParams<T>::validate() const {
  if (feature_channels < 1 || embed_dim < 1 || token_dim < 3) {
    throw ParameterError("EcrfParams: need C >= 1, d_k >= 1 and a color token");
  }
  if (embed_weight.size() != static_cast<std::size_t>(embed_dim) * token_dim ||
      embed_bias.size() != static_cast<std::size_t>(embed_dim) ||
      compat_weight.size() != 2 * static_cast<std::size_t>(feature_channels)) {
    throw DimensionError("EcrfParams: tensor sizes disagree with dimensions");
  }
  auto finite = [](const std::vector<T>& v) {
    return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
  };
  if (!finite(embed_weight) || !finite(embed_bias) || !finite(compat_weight) || !std::isfinite(compat_bias)) {
    throw NumericError("EcrfParams: non-finite weight");
  }
  if (neighborhood.radius && *neighborhood.radius < 1) throw ParameterError("EcrfParams: window radius must be >= 1");
}

template <typename T>
template <typename U>
EcrfParams<U> EcrfParams<T>::cast() const {
  EcrfParams<U> p;
  p.feature_channels = feature_channels;
  p.token_dim = token_dim;
  p.embed_dim = embed_dim;
  p.embed_weight.assign(embed_weight.begin(), embed_weight.end());
  p.embed_bias.assign(embed_bias.begin(), embed_bias.end());
  p.compat_weight.assign(compat_weight.begin(), compat_weight.end());
  p.compat_bias = static_cast<U>(compat_bias);
  p.use_pairwise = use_pairwise;
  p.use_superpixel = use_superpixel;
  p.neighborhood = neighborhood;
  return p;
}

template <typename T>
EcrfGrads<T> EcrfGrads<T>::zeros_like(const EcrfParams<T>& params) {
  EcrfGrads g;
  g.embed_weight.assign(params.embed_weight.size(), T(0));
  g.embed_bias.assign(params.embed_bias.size(), T(0));
  g.compat_weight.assign(params.compat_weight.size(), T(0));
  return g;
}

template <typename T>
bool EcrfGrads<T>::all_zero() const {
  auto zero = [](const std::vector<T>& v) { return std::all_of(v.begin(), v.end(), [](T x) { return x == T(0); }); };
  return zero(embed_weight) && zero(embed_bias) && zero(compat_weight) && compat_bias == T(0);
}

template <typename T>
EcrfContext<T> make_context(const Image& image, const superpixel::SuperpixelMap& sp, int height, int width,
                            int position_dim, double position_base) {
  if (image.height() != sp.height || image.width() != sp.width) {
    throw DimensionError("make_context: image and superpixel map differ in size");
  }
  EcrfContext<T> ctx;
  ctx.height = height;
  ctx.width = width;
  const Image colors = (image.height() == height && image.width() == width) ? image
                                                                            : area_downsample(image, height, width);
  const PositionField pos = position_embedding(height, width, position_dim, position_base);
  ctx.tokens = Tensor3<T>(height, width, 3 + position_dim);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) ctx.tokens(y, x, c) = static_cast<T>(colors(y, x, c));
      for (int d = 0; d < position_dim; ++d) ctx.tokens(y, x, 3 + d) = static_cast<T>(pos(y, x, d));
    }
  }
  ctx.blocks = (sp.height == height && sp.width == width) ? sp : superpixel::resample_nearest(sp, height, width);
  ctx.block_sizes.assign(ctx.blocks.block_count, 0);
  for (std::int32_t id : ctx.blocks.block_ids) ++ctx.block_sizes[id];
  return ctx;
}

template <typename T>
std::vector<T> kernel_embed(std::span<const T> token, const EcrfParams<T>& params) {
  if (static_cast<int>(token.size()) != params.token_dim) {
    throw ParameterError("kernel_embed: token has " + std::to_string(token.size()) + " entries, expected " +
                         std::to_string(params.token_dim));
  }
  std::vector<T> e(params.embed_dim);
  for (int r = 0; r < params.embed_dim; ++r) {
    e[r] = params.embed_bias[r] +
           dot(params.embed_weight.data() + static_cast<std::size_t>(r) * params.token_dim, token.data(),
               params.token_dim);
  }
  return e;
}

template <typename T>
std::vector<T> kernel_matrix(const EcrfContext<T>& context, const EcrfParams<T>& params) {
  const int n = context.tokens.cells();
  Tensor3<T> embedded(context.height, context.width, params.embed_dim);
  for (int i = 0; i < n; ++i) {
    const std::vector<T> e = kernel_embed(context.tokens.cell(i), params);
    std::copy(e.begin(), e.end(), embedded.cell(i).begin());
  }
  std::vector<T> k(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      k[static_cast<std::size_t>(i) * n + j] =
          std::max(T(0), dot(embedded.cell(i).data(), embedded.cell(j).data(), params.embed_dim));
    }
  }
  return k;
}

template <typename T>
T feature_compat(std::span<const T> f_i, std::span<const T> f_j, const EcrfParams<T>& params) {
  const int c = params.feature_channels;
  if (static_cast<int>(f_i.size()) != c || static_cast<int>(f_j.size()) != c) {
    throw DimensionError("feature_compat: feature size differs from compat map");
  }
  const T z = dot(params.compat_weight.data(), f_i.data(), c) + dot(params.compat_weight.data() + c, f_j.data(), c) +
              params.compat_bias;
  return sigmoid(z);
}

template <typename T>
Tensor3<T> superpixel_pool(const Tensor3<T>& features, const superpixel::SuperpixelMap& blocks) {
  if (blocks.height != features.height() || blocks.width != features.width()) {
    throw DimensionError("superpixel_pool: superpixel map not at feature resolution");
  }
  const int c = features.channels();
  std::vector<T> sums(static_cast<std::size_t>(blocks.block_count) * c, T(0));
  std::vector<int> counts(blocks.block_count, 0);
  for (int i = 0; i < features.cells(); ++i) {
    const std::int32_t b = blocks.block_ids[i];
    ++counts[b];
    auto f = features.cell(i);
    for (int k = 0; k < c; ++k) sums[static_cast<std::size_t>(b) * c + k] += f[k];
  }
  Tensor3<T> pooled(features.height(), features.width(), c);
  for (int i = 0; i < features.cells(); ++i) {
    const std::int32_t b = blocks.block_ids[i];
    auto p = pooled.cell(i);
    for (int k = 0; k < c; ++k) p[k] = sums[static_cast<std::size_t>(b) * c + k] / static_cast<T>(counts[b]);
  }
  return pooled;
}

template <typename T>
std::pair<Tensor3<T>, EcrfActivation<T>> ecrf_forward(const Tensor3<T>& features, const EcrfContext<T>& context,
                                                      const EcrfParams<T>& params) {
  params.validate();
  if (features.height() != context.height || features.width() != context.width) {
    throw DimensionError("ecrf_forward: features and context differ in resolution");
  }
  if (features.channels() != params.feature_channels) {
    throw DimensionError("ecrf_forward: feature channels differ from the compat map");
  }
  if (context.tokens.channels() != params.token_dim) {
    throw DimensionError("ecrf_forward: token size differs from the embed map");
  }
  const int n = features.cells();
  const int c = features.channels();
  const int w = features.width();
  const T s = params.use_superpixel ? T(1) : T(0);

  EcrfActivation<T> act;
  act.params = params;
  act.input = features;
  act.normalizers.assign(n, T(1) + s);
  Tensor3<T> out(features.height(), features.width(), c);

  if (!params.use_pairwise && !params.use_superpixel) {
    act.output = features;
    act.valid = true;
    return {features, std::move(act)};
  }

  // Unnormalized numerator, starts as the unary term.
  Tensor3<T> numer = features;

  if (params.use_pairwise) {
    g_pair_buffers.fetch_add(1);
    act.tokens = context.tokens;
    act.embedded = Tensor3<T>(features.height(), features.width(), params.embed_dim);
    for (int i = 0; i < n; ++i) {
      const std::vector<T> e = kernel_embed(context.tokens.cell(i), params);
      std::copy(e.begin(), e.end(), act.embedded.cell(i).begin());
    }
    act.row_logit.resize(n);
    act.col_logit.resize(n);
    for (int i = 0; i < n; ++i) {
      act.row_logit[i] = dot(params.compat_weight.data(), features.cell(i).data(), c);
      act.col_logit[i] = dot(params.compat_weight.data() + c, features.cell(i).data(), c);
    }

    act.pair_begin.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) {
      const int yi = i / w, xi = i % w;
      int count = 0;
      if (params.neighborhood.is_all_pairs()) {
        count = n - 1;
      } else {
        const int r = *params.neighborhood.radius;
        const int rows = std::min(yi + r, features.height() - 1) - std::max(yi - r, 0) + 1;
        const int cols = std::min(xi + r, w - 1) - std::max(xi - r, 0) + 1;
        count = rows * cols - 1;
      }
      act.pair_begin[i + 1] = act.pair_begin[i] + count;
    }
    const std::size_t pairs = act.pair_begin[n];
    act.pair_col.resize(pairs);
    act.compat.resize(pairs);
    act.kernel.resize(pairs);

#pragma omp parallel for schedule(static) if (n >= 256)
    for (int i = 0; i < n; ++i) {
      const int yi = i / w, xi = i % w;
      int t = act.pair_begin[i];
      auto emit = [&](int j) {
        act.pair_col[t] = j;
        const T k = std::max(T(0), dot(act.embedded.cell(i).data(), act.embedded.cell(j).data(), params.embed_dim));
        const T mu = sigmoid(act.row_logit[i] + act.col_logit[j] + params.compat_bias);
        act.kernel[t] = k;
        act.compat[t] = mu;
        ++t;
      };
      if (params.neighborhood.is_all_pairs()) {
        for (int j = 0; j < n; ++j) {
          if (j != i) emit(j);
        }
      } else {
        const int r = *params.neighborhood.radius;
        for (int y = std::max(yi - r, 0); y <= std::min(yi + r, features.height() - 1); ++y) {
          for (int x = std::max(xi - r, 0); x <= std::min(xi + r, w - 1); ++x) {
            if (y != yi || x != xi) emit(y * w + x);
          }
        }
      }
      T* acc = numer.cell(i).data();
      T z = T(0);
      for (int p = act.pair_begin[i]; p < act.pair_begin[i + 1]; ++p) {
        const T psi = act.compat[p] * act.kernel[p];
        if (psi == T(0)) continue;
        z += psi;
        const T* fj = features.cell(act.pair_col[p]).data();
        for (int k = 0; k < c; ++k) acc[k] += psi * fj[k];
      }
      act.normalizers[i] += z;
    }
  }

  if (params.use_superpixel) {
    act.block_ids = context.blocks.block_ids;
    act.block_sizes = context.block_sizes;
    act.pooled = superpixel_pool(features, context.blocks);
    for (std::size_t k = 0; k < numer.size(); ++k) numer.storage()[k] += act.pooled.storage()[k];
  }

  for (int i = 0; i < n; ++i) {
    auto num = numer.cell(i);
    auto o = out.cell(i);
    const T z = act.normalizers[i];
    for (int k = 0; k < c; ++k) o[k] = num[k] / z;
  }
  check_finite<T>(out.data(), c, "output");
  act.output = out;
  act.valid = true;
  return {std::move(out), std::move(act)};
}

template <typename T>
std::pair<Tensor3<T>, EcrfActivation<T>> ecrf_forward(const Tensor3<T>& features, const Image& image,
                                                      const superpixel::SuperpixelMap& sp,
                                                      const EcrfParams<T>& params) {
  const EcrfContext<T> ctx =
      make_context<T>(image, sp, features.height(), features.width(), params.position_dim());
  return ecrf_forward(features, ctx, params);
}

template <typename T>
EcrfBackward<T> ecrf_backward(const EcrfActivation<T>& act, const Tensor3<T>& upstream) {
  if (!act.valid) throw StateError("ecrf_backward: no forward activation retained");
  if (!upstream.same_shape(act.output)) throw DimensionError("ecrf_backward: upstream shape mismatch");
  const EcrfParams<T>& params = act.params;
  const int n = act.input.cells();
  const int c = act.input.channels();

  EcrfBackward<T> result;
  result.grad_params = EcrfGrads<T>::zeros_like(params);
  if (!params.use_pairwise && !params.use_superpixel) {
    result.grad_features = upstream;
    return result;
  }

  // h_i = dL/d(numerator_i); dL/dZ_i = -h_i . F*_i
  Tensor3<T> h(act.input.height(), act.input.width(), c);
  std::vector<T> grad_z(n);
  for (int i = 0; i < n; ++i) {
    auto g = upstream.cell(i);
    auto hi = h.cell(i);
    for (int k = 0; k < c; ++k) hi[k] = g[k] / act.normalizers[i];
    grad_z[i] = -dot(hi.data(), act.output.cell(i).data(), c);
  }
  Tensor3<T> grad = h;

  if (params.use_pairwise) {
    const int dk = params.embed_dim;
    Tensor3<T> grad_embed(act.input.height(), act.input.width(), dk);
    std::vector<T> row_sum(n, T(0));
    std::vector<T> col_sum(n, T(0));
    for (int i = 0; i < n; ++i) {
      const T* hi = h.cell(i).data();
      const T* ei = act.embedded.cell(i).data();
      T* gei = grad_embed.cell(i).data();
      for (int p = act.pair_begin[i]; p < act.pair_begin[i + 1]; ++p) {
        const int j = act.pair_col[p];
        const T mu = act.compat[p];
        const T k = act.kernel[p];
        const T grad_psi = dot(hi, act.input.cell(j).data(), c) + grad_z[i];
        if (k > T(0)) {
          const T psi = mu * k;
          T* gj = grad.cell(j).data();
          for (int q = 0; q < c; ++q) gj[q] += psi * hi[q];
          const T grad_k = grad_psi * mu;
          const T* ej = act.embedded.cell(j).data();
          T* gej = grad_embed.cell(j).data();
          for (int q = 0; q < dk; ++q) {
            gei[q] += grad_k * ej[q];
            gej[q] += grad_k * ei[q];
          }
          const T grad_logit = grad_psi * k * mu * (T(1) - mu);
          row_sum[i] += grad_logit;
          col_sum[j] += grad_logit;
        }
      }
    }
    const T* u = params.compat_weight.data();
    const T* v = params.compat_weight.data() + c;
    EcrfGrads<T>& gp = result.grad_params;
    for (int i = 0; i < n; ++i) {
      const T* fi = act.input.cell(i).data();
      T* gi = grad.cell(i).data();
      for (int q = 0; q < c; ++q) {
        gp.compat_weight[q] += row_sum[i] * fi[q];
        gp.compat_weight[c + q] += col_sum[i] * fi[q];
        gi[q] += row_sum[i] * u[q] + col_sum[i] * v[q];
      }
      gp.compat_bias += row_sum[i];
      const T* ge = grad_embed.cell(i).data();
      const T* x = act.tokens.cell(i).data();
      for (int r = 0; r < dk; ++r) {
        gp.embed_bias[r] += ge[r];
        T* row = gp.embed_weight.data() + static_cast<std::size_t>(r) * params.token_dim;
        for (int q = 0; q < params.token_dim; ++q) row[q] += ge[r] * x[q];
      }
    }
  }

  if (params.use_superpixel) {
    const int blocks = static_cast<int>(act.block_sizes.size());
    std::vector<T> block_grad(static_cast<std::size_t>(blocks) * c, T(0));
    for (int i = 0; i < n; ++i) {
      const std::int32_t b = act.block_ids[i];
      auto hi = h.cell(i);
      for (int q = 0; q < c; ++q) block_grad[static_cast<std::size_t>(b) * c + q] += hi[q];
    }
    for (int i = 0; i < n; ++i) {
      const std::int32_t b = act.block_ids[i];
      const T inv = T(1) / static_cast<T>(act.block_sizes[b]);
      auto gi = grad.cell(i);
      for (int q = 0; q < c; ++q) gi[q] += block_grad[static_cast<std::size_t>(b) * c + q] * inv;
    }
  }

  result.grad_features = std::move(grad);
  return result;
}

#define ECRF_INSTANTIATE(T)                                                                                       \
  template struct EcrfParams<T>;                                                                                  \
  template struct EcrfGrads<T>;                                                                                   \
  template EcrfContext<T> make_context<T>(const Image&, const superpixel::SuperpixelMap&, int, int, int, double);        \
  template std::vector<T> kernel_embed<T>(std::span<const T>, const EcrfParams<T>&);                             \
  template std::vector<T> kernel_matrix<T>(const EcrfContext<T>&, const EcrfParams<T>&);                         \
  template T feature_compat<T>(std::span<const T>, std::span<const T>, const EcrfParams<T>&);                    \
  template Tensor3<T> superpixel_pool<T>(const Tensor3<T>&, const superpixel::SuperpixelMap&);                   \
  template std::pair<Tensor3<T>, EcrfActivation<T>> ecrf_forward<T>(const Tensor3<T>&, const EcrfContext<T>&,    \
                                                                    const EcrfParams<T>&);                       \
  template std::pair<Tensor3<T>, EcrfActivation<T>> ecrf_forward<T>(                                             \
      const Tensor3<T>&, const Image&, const superpixel::SuperpixelMap&, const EcrfParams<T>&);                  \
  template EcrfBackward<T> ecrf_backward<T>(const EcrfActivation<T>&, const Tensor3<T>&);

ECRF_INSTANTIATE(float)
ECRF_INSTANTIATE(double)

template EcrfParams<double> EcrfParams<float>::cast<double>() const;
template EcrfParams<float> EcrfParams<double>::cast<float>() const;
template EcrfParams<float> EcrfParams<float>::cast<float>() const;
template EcrfParams<double> EcrfParams<double>::cast<double>() const;

}  // namespace ecrf::layer
