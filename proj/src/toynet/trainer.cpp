#include "ecrf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace ecrf::toynet {
namespace {

template <typename T>
std::vector<PreparedSample<T>> prepare_all(const ModelConfig& config, const std::vector<Sample>& data,
                                           const std::vector<superpixel::SuperpixelMap>& sp) {
  if (config.mode == Mode::ecrf && sp.size() != data.size()) {
    throw DimensionError("need one superpixel map per image (" + std::to_string(data.size()) + " images, " +
                         std::to_string(sp.size()) + " maps)");
  }
  std::vector<PreparedSample<T>> out(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    const superpixel::SuperpixelMap* map = k < sp.size() ? &sp[k] : nullptr;
    out[k] = prepare_sample<T>(config, data[k].image, &data[k].labels, map);
  }
  return out;
}

template <typename T>
void add_into(Model<T>& dst, const Model<T>& src) {
  auto d = dst.parameters();
  auto s = src.parameters();
  for (std::size_t k = 0; k < d.size(); ++k) {
    for (std::size_t e = 0; e < d[k].values.size(); ++e) d[k].values[e] += s[k].values[e];
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ParameterError("TrainConfig: lr0 must be > 0");
  if (!(poly_power > 0.0)) throw ParameterError("TrainConfig: poly_power must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ParameterError("TrainConfig: momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ParameterError("TrainConfig: weight_decay must be >= 0");
  if (total_iters < 1) throw ParameterError("TrainConfig: total_iters must be >= 1");
  if (batch < 1) throw ParameterError("TrainConfig: batch must be >= 1");
  if (eval_every < 0) throw ParameterError("TrainConfig: eval_every must be >= 0");
}

double poly_lr(int iter, const TrainConfig& config) {
  if (iter < 0 || iter > config.total_iters) throw ParameterError("poly_lr: iter outside [0, total_iters]");
  return config.lr0 * std::pow(1.0 - static_cast<double>(iter) / config.total_iters, config.poly_power);
}

template <typename T>
void sgd_step(Model<T>& model, const Model<T>& grads, Model<T>& velocity, double lr, double momentum,
              double weight_decay) {
  auto p = model.parameters();
  auto g = grads.parameters();
  auto v = velocity.parameters();
  if (p.size() != g.size() || p.size() != v.size()) throw DimensionError("sgd_step: parameter layouts differ");
  for (std::size_t s = 0; s < p.size(); ++s) {
    const double wd = p[s].decay ? weight_decay : 0.0;
    for (std::size_t k = 0; k < p[s].values.size(); ++k) {
      const double step = static_cast<double>(g[s].values[k]) + wd * static_cast<double>(p[s].values[k]);
      v[s].values[k] = static_cast<T>(momentum * v[s].values[k] + lr * step);
      p[s].values[k] -= v[s].values[k];
    }
  }
}

template <typename T>
double batch_gradient(const Model<T>& model, const std::vector<const PreparedSample<T>*>& batch, Model<T>& grads) {
  const int b = static_cast<int>(batch.size());
  std::vector<Model<T>> per_sample(b);
  std::vector<double> losses(b, 0.0);
  const T scale = T(1) / static_cast<T>(b);
#pragma omp parallel for schedule(dynamic, 1) if (b > 1)
  for (int k = 0; k < b; ++k) {
    per_sample[k] = model.zeros_like();
    const auto state = forward(model, *batch[k]);
    losses[k] = static_cast<double>(backward(model, *batch[k], state, per_sample[k], scale));
  }
  double loss = 0.0;
  for (int k = 0; k < b; ++k) {
    add_into(grads, per_sample[k]);
    loss += losses[k] / b;
  }
  return loss;
}

template <typename T>
EvalResult evaluate(const Model<T>& model, const std::vector<Sample>& data,
                    const std::vector<superpixel::SuperpixelMap>& sp) {
  const int n = model.config.net.num_classes;
  const auto prepared = prepare_all<T>(model.config, data, sp);
  std::vector<LabelMap> preds(data.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < static_cast<int>(data.size()); ++k) {
    preds[k] = predict(model, prepared[k], data[k].image.height(), data[k].image.width());
  }
  metrics::ConfusionMatrix confusion(n);
  EvalResult result;
  for (std::size_t k = 0; k < data.size(); ++k) {
    confusion.add(preds[k], data[k].labels);
    result.boundary += metrics::boundary_counts(preds[k], data[k].labels);
  }
  result.per_class_iou = confusion.iou();
  result.miou = confusion.mean_iou();
  result.fscore = result.boundary.fscore();
  return result;
}

TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const std::vector<Sample>& data,
                  const std::vector<superpixel::SuperpixelMap>& sp,
                  const std::function<void(const TrainLogEntry&)>& on_log) {
  config.validate();
  model_config.validate();
  if (data.empty()) throw DimensionError("train: empty dataset");
  const auto prepared = prepare_all<float>(model_config, data, sp);

  std::mt19937_64 rng(config.seed);
  TrainResult result{Model<float>::initialized(model_config, rng), Model<float>::zeros(model_config), {}};

  std::vector<int> order(data.size());
  std::size_t cursor = order.size();
  for (int iter = 0; iter < config.total_iters; ++iter) {
    std::vector<const PreparedSample<float>*> batch;
    for (int b = 0; b < config.batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(&prepared[order[cursor++]]);
    }
    Model<float> grads = result.model.zeros_like();
    TrainLogEntry entry;
    entry.iter = iter;
    entry.lr = poly_lr(iter, config);
    entry.loss = batch_gradient(result.model, batch, grads);
    if (!std::isfinite(entry.loss)) {
      throw NumericError("train: non-finite loss at iteration " + std::to_string(iter));
    }
    sgd_step(result.model, grads, result.velocity, entry.lr, config.momentum, config.weight_decay);
    const bool last = iter + 1 == config.total_iters;
    if (config.eval_every > 0 && ((iter + 1) % config.eval_every == 0 || last)) {
      const auto eval = evaluate(result.model, data, sp);
      entry.miou = eval.miou;
      entry.fscore = eval.fscore;
    }
    result.log.push_back(entry);
    if (on_log) on_log(entry);
  }
  return result;
}

template void sgd_step<float>(Model<float>&, const Model<float>&, Model<float>&, double, double, double);
template void sgd_step<double>(Model<double>&, const Model<double>&, Model<double>&, double, double, double);
template double batch_gradient<float>(const Model<float>&, const std::vector<const PreparedSample<float>*>&,
                                      Model<float>&);
template double batch_gradient<double>(const Model<double>&, const std::vector<const PreparedSample<double>*>&,
                                       Model<double>&);
template EvalResult evaluate<float>(const Model<float>&, const std::vector<Sample>&,
                                    const std::vector<superpixel::SuperpixelMap>&);
template EvalResult evaluate<double>(const Model<double>&, const std::vector<Sample>&,
                                     const std::vector<superpixel::SuperpixelMap>&);

}  // namespace ecrf::toynet
