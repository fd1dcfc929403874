#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ecrf/metrics.hpp"
#include "ecrf/network.hpp"
#include "ecrf/superpixel.hpp"
#include "ecrf/synth.hpp"

namespace ecrf::toynet {

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int total_iters = 300;
  double poly_power = 0.9;
  int batch = 4;
  std::uint64_t seed = 0;
  int eval_every = 0;  // 0 disables periodic evaluation

  void validate() const;
};

// lr0 * (1 - iter / total)^power.
double poly_lr(int iter, const TrainConfig& config);

// v = m v + lr (g + wd theta); theta -= v. Slots flagged decay = false skip
// the weight decay term.
template <typename T>
void sgd_step(Model<T>& model, const Model<T>& grads, Model<T>& velocity, double lr, double momentum,
              double weight_decay);

struct TrainLogEntry {
  int iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> miou;
  std::optional<double> fscore;
};

struct TrainResult {
  Model<float> model;
  Model<float> velocity;
  std::vector<TrainLogEntry> log;
};

struct EvalResult {
  double miou = 0.0;
  double fscore = 0.0;
  std::vector<double> per_class_iou;
  metrics::BoundaryCounts boundary;
};

// Dataset-level confusion matrix and pooled boundary counts. `sp` may be
// empty outside ecrf mode.
template <typename T>
EvalResult evaluate(const Model<T>& model, const std::vector<Sample>& data,
                    const std::vector<superpixel::SuperpixelMap>& sp);

// Gradient over a batch; samples run in parallel and are reduced in order, so
// the result does not depend on the thread count.
template <typename T>
double batch_gradient(const Model<T>& model, const std::vector<const PreparedSample<T>*>& batch, Model<T>& grads);

// Mini-batch SGD over shuffled epochs. All randomness comes from config.seed.
TrainResult train(const TrainConfig& config, const ModelConfig& model_config, const std::vector<Sample>& data,
                  const std::vector<superpixel::SuperpixelMap>& sp,
                  const std::function<void(const TrainLogEntry&)>& on_log = {});

}  // namespace ecrf::toynet
