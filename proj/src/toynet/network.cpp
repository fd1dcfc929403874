#include "ecrf/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ecrf::toynet {
namespace {

int conv_out(int size, int stride) { return (size + stride - 1) / stride; }

template <typename T>
Tensor3<T> conv_relu(const Tensor3<T>& in, const ConvLayer<T>& layer) {
  const int k = layer.spec.kernel, s = layer.spec.stride, pad = k / 2;
  const int cin = layer.in_channels, cout = layer.spec.channels;
  const int oh = conv_out(in.height(), s), ow = conv_out(in.width(), s);
  Tensor3<T> out(oh, ow, cout);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      T* o = out.cell(y * ow + x).data();
      std::copy(layer.bias.begin(), layer.bias.end(), o);
      for (int ky = 0; ky < k; ++ky) {
        const int iy = y * s + ky - pad;
        if (iy < 0 || iy >= in.height()) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = x * s + kx - pad;
          if (ix < 0 || ix >= in.width()) continue;
          const T* src = in.cell(iy * in.width() + ix).data();
          const T* w = layer.weight.data() + static_cast<std::size_t>(ky * k + kx) * cout * cin;
          for (int oc = 0; oc < cout; ++oc) {
            T acc = T(0);
            const T* wr = w + static_cast<std::size_t>(oc) * cin;
            for (int ic = 0; ic < cin; ++ic) acc += wr[ic] * src[ic];
            o[oc] += acc;
          }
        }
      }
      for (int oc = 0; oc < cout; ++oc) o[oc] = std::max(o[oc], T(0));
    }
  }
  return out;
}

// `grad_out` is the gradient w.r.t. the post-ReLU output and is masked here.
template <typename T>
Tensor3<T> conv_relu_backward(const Tensor3<T>& in, const Tensor3<T>& out, const Tensor3<T>& grad_out,
                              const ConvLayer<T>& layer, ConvLayer<T>& grads, bool need_input_grad) {
  const int k = layer.spec.kernel, s = layer.spec.stride, pad = k / 2;
  const int cin = layer.in_channels, cout = layer.spec.channels;
  const int oh = out.height(), ow = out.width();
  Tensor3<T> grad_in(in.height(), in.width(), cin);
  std::vector<T> g(cout);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const int i = y * ow + x;
      bool any = false;
      for (int oc = 0; oc < cout; ++oc) {
        g[oc] = out.cell(i)[oc] > T(0) ? grad_out.cell(i)[oc] : T(0);
        grads.bias[oc] += g[oc];
        any = any || g[oc] != T(0);
      }
      if (!any) continue;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = y * s + ky - pad;
        if (iy < 0 || iy >= in.height()) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = x * s + kx - pad;
          if (ix < 0 || ix >= in.width()) continue;
          const int j = iy * in.width() + ix;
          const T* src = in.cell(j).data();
          T* gsrc = grad_in.cell(j).data();
          const std::size_t base = static_cast<std::size_t>(ky * k + kx) * cout * cin;
          for (int oc = 0; oc < cout; ++oc) {
            const T go = g[oc];
            if (go == T(0)) continue;
            T* gw = grads.weight.data() + base + static_cast<std::size_t>(oc) * cin;
            for (int ic = 0; ic < cin; ++ic) gw[ic] += go * src[ic];
            if (need_input_grad) {
              const T* w = layer.weight.data() + base + static_cast<std::size_t>(oc) * cin;
              for (int ic = 0; ic < cin; ++ic) gsrc[ic] += go * w[ic];
            }
          }
        }
      }
    }
  }
  return grad_in;
}

template <typename T>
Tensor3<T> classify(const Tensor3<T>& features, const std::vector<T>& w, int num_classes) {
  const int C = features.channels();
  Tensor3<T> logits(features.height(), features.width(), num_classes);
  for (int i = 0; i < features.cells(); ++i) {
    auto f = features.cell(i);
    auto out = logits.cell(i);
    for (int c = 0; c < C; ++c) {
      const T* row = w.data() + static_cast<std::size_t>(c) * num_classes;
      for (int a = 0; a < num_classes; ++a) out[a] += f[c] * row[a];
    }
  }
  return logits;
}

template <typename T>
Tensor3<T> softmax(const Tensor3<T>& logits) {
  Tensor3<T> p(logits.height(), logits.width(), logits.channels());
  for (int i = 0; i < logits.cells(); ++i) {
    auto l = logits.cell(i);
    auto out = p.cell(i);
    const T m = *std::max_element(l.begin(), l.end());
    T sum = T(0);
    for (std::size_t a = 0; a < l.size(); ++a) sum += out[a] = std::exp(l[a] - m);
    for (T& v : out) v /= sum;
  }
  return p;
}

template <typename M, typename S>
std::vector<S> collect(M& model) {
  std::vector<S> slots;
  using Elem = typename decltype(S::values)::element_type;
  auto add = [&](std::string name, auto& vec, std::vector<int> dims, bool decay = true) {
    slots.push_back(S{std::move(name), std::span<Elem>(vec.data(), vec.size()), std::move(dims), decay});
  };
  for (std::size_t l = 0; l < model.convs.size(); ++l) {
    auto& conv = model.convs[l];
    const int k = conv.spec.kernel;
    add("conv" + std::to_string(l) + ".weight", conv.weight, {k, k, conv.spec.channels, conv.in_channels});
    add("conv" + std::to_string(l) + ".bias", conv.bias, {conv.spec.channels});
  }
  add("classifier.weight", model.classifier, {model.config.net.feature_channels(), model.config.net.num_classes});
  if (model.config.mode == Mode::ecrf) {
    auto& e = model.ecrf;
    add("ecrf.embed_weight", e.embed_weight, {e.embed_dim, e.token_dim});
    add("ecrf.embed_bias", e.embed_bias, {e.embed_dim});
    add("ecrf.compat_weight", e.compat_weight, {2 * e.feature_channels});
    slots.push_back(S{"ecrf.compat_bias", std::span<Elem>(&e.compat_bias, 1), {1}, false});
  }
  return slots;
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::baseline: return "baseline";
    case Mode::joint: return "joint";
    case Mode::ecrf: return "ecrf";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  if (name == "baseline") return Mode::baseline;
  if (name == "joint") return Mode::joint;
  if (name == "ecrf") return Mode::ecrf;
  throw ParameterError("unknown mode '" + std::string(name) + "' (baseline | joint | ecrf)");
}

int NetConfig::feature_stride() const {
  int s = 1;
  for (const auto& l : layers) s *= l.stride;
  return s;
}

int NetConfig::feature_channels() const { return layers.empty() ? 3 : layers.back().channels; }

void NetConfig::validate() const {
  if (num_classes < 2) throw ParameterError("NetConfig: num_classes must be >= 2");
  for (const auto& l : layers) {
    if (l.channels < 1 || l.stride < 1 || l.kernel < 1 || l.kernel % 2 == 0) {
      throw ParameterError("NetConfig: conv layers need channels >= 1, stride >= 1 and an odd kernel");
    }
  }
}

void NetConfig::check_input(int height, int width) const {
  const int s = feature_stride();
  if (height % s != 0 || width % s != 0) {
    throw DimensionError("feature stride " + std::to_string(s) + " does not divide " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
}

void ModelConfig::validate() const {
  net.validate();
  if (mode == Mode::ecrf) {
    if (ecrf.embed_dim < 1) throw ParameterError("ecrf embed_dim must be >= 1");
    if (ecrf.position_dim < 2 || ecrf.position_dim % 2 != 0) {
      throw ParameterError("ecrf position_dim must be even and >= 2");
    }
    if (!(ecrf.position_base > 1.0)) throw ParameterError("ecrf position_base must be > 1");
    if (ecrf.window_radius && *ecrf.window_radius < 1) throw ParameterError("ecrf window radius must be >= 1");
  }
  if (mode == Mode::joint) {
    joint.kernel.validate();
    if (joint.radius < 1) throw ParameterError("joint radius must be >= 1");
  }
}

template <typename T>
Model<T> Model<T>::zeros(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  int in = 3;
  for (const auto& spec : config.net.layers) {
    ConvLayer<T> conv;
    conv.spec = spec;
    conv.in_channels = in;
    conv.weight.assign(static_cast<std::size_t>(spec.kernel) * spec.kernel * spec.channels * in, T(0));
    conv.bias.assign(spec.channels, T(0));
    m.convs.push_back(std::move(conv));
    in = spec.channels;
  }
  m.classifier.assign(static_cast<std::size_t>(in) * config.net.num_classes, T(0));
  if (config.mode == Mode::ecrf) {
    m.ecrf = layer::EcrfParams<T>::zeros(in, config.ecrf.position_dim, config.ecrf.embed_dim);
    m.ecrf.use_pairwise = config.ecrf.use_pairwise;
    m.ecrf.use_superpixel = config.ecrf.use_superpixel;
    m.ecrf.neighborhood = config.ecrf.window_radius ? Neighborhood::window(*config.ecrf.window_radius)
                                                    : Neighborhood::all_pairs();
  }
  return m;
}

template <typename T>
Model<T> Model<T>::initialized(const ModelConfig& config, std::mt19937_64& rng) {
  Model m = zeros(config);
  for (auto& conv : m.convs) {
    const int fan_in = conv.spec.kernel * conv.spec.kernel * conv.in_channels;
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (T& w : conv.weight) w = static_cast<T>(normal(rng));
  }
  std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / config.net.feature_channels()));
  for (T& w : m.classifier) w = static_cast<T>(normal(rng));
  if (config.mode == Mode::ecrf) {
    auto e = layer::EcrfParams<T>::initialized(config.net.feature_channels(), config.ecrf.position_dim,
                                               config.ecrf.embed_dim, rng, config.ecrf.embed_gain);
    e.use_pairwise = m.ecrf.use_pairwise;
    e.use_superpixel = m.ecrf.use_superpixel;
    e.neighborhood = m.ecrf.neighborhood;
    m.ecrf = std::move(e);
  }
  return m;
}

template <typename T>
std::vector<ParamSlot<T>> Model<T>::parameters() {
  return collect<Model<T>, ParamSlot<T>>(*this);
}

template <typename T>
std::vector<ParamSlot<const T>> Model<T>::parameters() const {
  return collect<const Model<T>, ParamSlot<const T>>(*this);
}

template <typename T>
gradtheory::ClassifierWeights Model<T>::class_weights() const {
  return gradtheory::ClassifierWeights(config.net.feature_channels(), config.net.num_classes,
                                       gradtheory::Vec(classifier.begin(), classifier.end()));
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> m = Model<U>::zeros(config);
  auto src = parameters();
  auto dst = m.parameters();
  for (std::size_t s = 0; s < src.size(); ++s) {
    for (std::size_t k = 0; k < src[s].values.size(); ++k) dst[s].values[k] = static_cast<U>(src[s].values[k]);
  }
  return m;
}

template <typename T>
PreparedSample<T> prepare_sample(const ModelConfig& config, const Image& image, const LabelMap* labels,
                                 const superpixel::SuperpixelMap* sp) {
  config.validate();
  if (image.empty()) throw DimensionError("prepare_sample: empty image");
  config.net.check_input(image.height(), image.width());
  const int stride = config.net.feature_stride();
  const int fh = image.height() / stride, fw = image.width() / stride;

  PreparedSample<T> s;
  s.input = image.tensor().template cast<T>();
  if (labels) {
    if (labels->height() != image.height() || labels->width() != image.width()) {
      throw DimensionError("prepare_sample: label map does not match the image");
    }
    labels->validate(config.net.num_classes);
    s.targets = downsample_labels(*labels, stride);
  }
  if (config.mode == Mode::ecrf) {
    if (!sp) throw ParameterError("prepare_sample: ecrf mode needs a superpixel map");
    if (sp->height != image.height() || sp->width != image.width()) {
      throw DimensionError("prepare_sample: superpixel map does not match the image");
    }
    s.ecrf = layer::make_context<T>(image, *sp, fh, fw, config.ecrf.position_dim,
                                      config.ecrf.position_base);
  }
  if (config.mode == Mode::joint) {
    const Image small = area_downsample(image, fh, fw);
    const int r = config.joint.radius;
    s.joint_begin.push_back(0);
    for (int y = 0; y < fh; ++y) {
      for (int x = 0; x < fw; ++x) {
        const std::array<double, 3> ci{small(y, x, 0), small(y, x, 1), small(y, x, 2)};
        for (int yy = std::max(0, y - r); yy <= std::min(fh - 1, y + r); ++yy) {
          for (int xx = std::max(0, x - r); xx <= std::min(fw - 1, x + r); ++xx) {
            if (yy == y && xx == x) continue;
            const std::array<double, 3> cj{small(yy, xx, 0), small(yy, xx, 1), small(yy, xx, 2)};
            const double w = densecrf::gaussian_kernel({double(y), double(x)}, {double(yy), double(xx)}, ci, cj,
                                                       config.joint.kernel);
            s.joint_col.push_back(yy * fw + xx);
            s.joint_weight.push_back(static_cast<T>(w));
          }
        }
        s.joint_begin.push_back(static_cast<int>(s.joint_col.size()));
      }
    }
  }
  return s;
}

template <typename T>
ForwardState<T> forward(const Model<T>& model, const PreparedSample<T>& sample) {
  const auto& cfg = model.config;
  if (sample.input.channels() != 3) throw DimensionError("forward: input must have 3 channels");
  cfg.net.check_input(sample.input.height(), sample.input.width());

  ForwardState<T> st;
  st.activations.push_back(sample.input);
  for (const auto& conv : model.convs) st.activations.push_back(conv_relu(st.activations.back(), conv));
  const Tensor3<T>& f = st.activations.back();
  const int n = cfg.net.num_classes;

  if (cfg.mode == Mode::ecrf) {
    if (sample.ecrf.height != f.height() || sample.ecrf.width != f.width()) {
      throw DimensionError("forward: ecrf context does not match the feature grid");
    }
    auto [refined, act] = layer::ecrf_forward(f, sample.ecrf, model.ecrf);
    st.refined = std::move(refined);
    st.ecrf = std::move(act);
  } else {
    st.refined = f;
  }
  st.logits = classify(st.refined, model.classifier, n);
  st.probs = softmax(st.logits);

  if (cfg.mode == Mode::joint) {
    if (sample.joint_begin.size() != static_cast<std::size_t>(f.cells()) + 1) {
      throw DimensionError("forward: joint neighbourhood does not match the feature grid");
    }
    st.output = Tensor3<T>(f.height(), f.width(), n);
    for (int i = 0; i < f.cells(); ++i) {
      auto out = st.output.cell(i);
      auto own = st.probs.cell(i);
      T z = T(1);
      for (int a = 0; a < n; ++a) out[a] = own[a];
      for (int p = sample.joint_begin[i]; p < sample.joint_begin[i + 1]; ++p) {
        const T w = sample.joint_weight[p];
        auto pj = st.probs.cell(sample.joint_col[p]);
        for (int a = 0; a < n; ++a) out[a] += w * pj[a];
        z += w;
      }
      for (T& v : out) v /= z;
    }
  } else {
    st.output = st.probs;
  }
  return st;
}

template <typename T>
T loss_value(const ForwardState<T>& state, const PreparedSample<T>& sample) {
  const auto& t = sample.targets;
  if (t.height() != state.output.height() || t.width() != state.output.width()) {
    throw DimensionError("loss: targets do not match the output grid");
  }
  double sum = 0.0;
  int count = 0;
  for (int i = 0; i < t.cells(); ++i) {
    const int c = t.labels()[i];
    if (c == kIgnoreLabel) continue;
    sum -= std::log(static_cast<double>(state.output.cell(i)[c]));
    ++count;
  }
  return count ? static_cast<T>(sum / count) : T(0);
}

template <typename T>
T backward(const Model<T>& model, const PreparedSample<T>& sample, const ForwardState<T>& state, Model<T>& grads,
           T scale) {
  const auto& cfg = model.config;
  const T loss = loss_value(state, sample);
  if (!std::isfinite(loss)) throw NumericError("backward: non-finite loss");
  const int n = cfg.net.num_classes;
  const auto& t = sample.targets;
  int count = 0;
  for (std::int32_t c : t.labels()) count += c != kIgnoreLabel;
  if (count == 0) return loss;
  const T unit = scale / static_cast<T>(count);

  Tensor3<T> g_logits(state.logits.height(), state.logits.width(), n);
  if (cfg.mode == Mode::joint) {
    // dL/dP via the refinement, then through the softmax.
    Tensor3<T> g_probs(g_logits.height(), g_logits.width(), n);
    for (int i = 0; i < t.cells(); ++i) {
      const int c = t.labels()[i];
      if (c == kIgnoreLabel) continue;
      T z = T(1);
      for (int p = sample.joint_begin[i]; p < sample.joint_begin[i + 1]; ++p) z += sample.joint_weight[p];
      const T g = -unit / (state.output.cell(i)[c] * z);
      g_probs.cell(i)[c] += g;
      for (int p = sample.joint_begin[i]; p < sample.joint_begin[i + 1]; ++p) {
        g_probs.cell(sample.joint_col[p])[c] += sample.joint_weight[p] * g;
      }
    }
    for (int i = 0; i < t.cells(); ++i) {
      auto p = state.probs.cell(i);
      auto gp = g_probs.cell(i);
      T dot = T(0);
      for (int a = 0; a < n; ++a) dot += gp[a] * p[a];
      for (int a = 0; a < n; ++a) g_logits.cell(i)[a] = p[a] * (gp[a] - dot);
    }
  } else {
    for (int i = 0; i < t.cells(); ++i) {
      const int c = t.labels()[i];
      if (c == kIgnoreLabel) continue;
      auto p = state.probs.cell(i);
      auto g = g_logits.cell(i);
      for (int a = 0; a < n; ++a) g[a] = unit * p[a];
      g[c] -= unit;
    }
  }

  // Classifier: logits_i = W^T x_i.
  const Tensor3<T>& x = state.refined;
  const int C = x.channels();
  Tensor3<T> g_x(x.height(), x.width(), C);
  for (int i = 0; i < x.cells(); ++i) {
    auto xi = x.cell(i);
    auto gl = g_logits.cell(i);
    auto gx = g_x.cell(i);
    for (int c = 0; c < C; ++c) {
      const T* w = model.classifier.data() + static_cast<std::size_t>(c) * n;
      T* gw = grads.classifier.data() + static_cast<std::size_t>(c) * n;
      T acc = T(0);
      for (int a = 0; a < n; ++a) {
        gw[a] += xi[c] * gl[a];
        acc += w[a] * gl[a];
      }
      gx[c] = acc;
    }
  }

  Tensor3<T> g_features;
  if (cfg.mode == Mode::ecrf) {
    auto back = layer::ecrf_backward(state.ecrf, g_x);
    g_features = std::move(back.grad_features);
    auto& gp = back.grad_params;
    auto& ge = grads.ecrf;
    for (std::size_t k = 0; k < gp.embed_weight.size(); ++k) ge.embed_weight[k] += gp.embed_weight[k];
    for (std::size_t k = 0; k < gp.embed_bias.size(); ++k) ge.embed_bias[k] += gp.embed_bias[k];
    for (std::size_t k = 0; k < gp.compat_weight.size(); ++k) ge.compat_weight[k] += gp.compat_weight[k];
    ge.compat_bias += gp.compat_bias;
  } else {
    g_features = std::move(g_x);
  }

  for (std::size_t l = model.convs.size(); l-- > 0;) {
    g_features = conv_relu_backward(state.activations[l], state.activations[l + 1], g_features, model.convs[l],
                                    grads.convs[l], l > 0);
  }
  return loss;
}

template <typename T>
Tensor3<T> upsample_bilinear(const Tensor3<T>& src, int out_height, int out_width) {
  if (src.empty()) throw DimensionError("upsample_bilinear: empty input");
  const int h = src.height(), w = src.width(), ch = src.channels();
  Tensor3<T> out(out_height, out_width, ch);
  const double sy = static_cast<double>(h) / out_height, sx = static_cast<double>(w) / out_width;
  for (int y = 0; y < out_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, h - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
    const T ay = static_cast<T>(fy - y0);
    for (int x = 0; x < out_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, w - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
      const T ax = static_cast<T>(fx - x0);
      for (int c = 0; c < ch; ++c) {
        const T top = src(y0, x0, c) * (1 - ax) + src(y0, x1, c) * ax;
        const T bottom = src(y1, x0, c) * (1 - ax) + src(y1, x1, c) * ax;
        out(y, x, c) = top * (1 - ay) + bottom * ay;
      }
    }
  }
  return out;
}

template <typename T>
LabelMap predict(const Model<T>& model, const PreparedSample<T>& sample, int height, int width) {
  const auto state = forward(model, sample);
  const auto up = upsample_bilinear(state.output, height, width);
  LabelMap pred(height, width);
  for (int i = 0; i < up.cells(); ++i) {
    auto p = up.cell(i);
    pred.labels()[i] = static_cast<std::int32_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return pred;
}

#define ECRF_TOYNET_INSTANTIATE(T)                                                                              \
  template struct Model<T>;                                                                                     \
  template PreparedSample<T> prepare_sample<T>(const ModelConfig&, const Image&, const LabelMap*,               \
                                               const superpixel::SuperpixelMap*);                               \
  template ForwardState<T> forward<T>(const Model<T>&, const PreparedSample<T>&);                               \
  template T loss_value<T>(const ForwardState<T>&, const PreparedSample<T>&);                                   \
  template T backward<T>(const Model<T>&, const PreparedSample<T>&, const ForwardState<T>&, Model<T>&, T);      \
  template Tensor3<T> upsample_bilinear<T>(const Tensor3<T>&, int, int);                                        \
  template LabelMap predict<T>(const Model<T>&, const PreparedSample<T>&, int, int);

ECRF_TOYNET_INSTANTIATE(float)
ECRF_TOYNET_INSTANTIATE(double)

template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;

}  // namespace ecrf::toynet
