#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cef/dataset.hpp"
#include "cef/errors.hpp"
#include "cef/metrics.hpp"
#include "cef/model.hpp"
#include "cef/ops.hpp"
#include "cef/synth.hpp"

namespace cef {

struct TrainConfig {
  std::size_t epochs = 200;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 1;
  std::optional<std::vector<float>> class_weights;
  std::size_t patience = 20;  // epochs without validation improvement

  void validate() const {
    if (epochs < 1) throw ParameterError("train: epochs must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("train: lr must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ParameterError("train: Adam betas must be in [0, 1)");
    if (!(eps > 0.0)) throw ParameterError("train: eps must be positive");
  }
};

template <class S>
struct AdamState {
  std::vector<std::vector<S>> m, v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update, applied tensor by tensor in order.
template <class S>
void adam_step(std::vector<Tensor<S>>& params, const std::vector<std::span<const S>>& grads,
               AdamState<S>& state, const TrainConfig& cfg) {
  if (grads.size() != params.size())
    throw ContractError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), S{0});
      state.v.emplace_back(p.numel(), S{0});
    }
  }
  if (state.m.size() != params.size())
    throw ContractError("adam_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].numel() || state.m[i].size() != params[i].numel())
      throw ContractError("adam_step: gradient " + std::to_string(i) + " has " +
                          std::to_string(grads[i].size()) + " values, parameter has " +
                          std::to_string(params[i].numel()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<S>(mj);
      v[j] = static_cast<S>(vj);
      const double update = cfg.lr * (mj / c1) / (std::sqrt(vj / c2) + cfg.eps);
      p[j] = static_cast<S>(p[j] - update);
    }
  }
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double train_accuracy = 0.0;  // frame accuracy of the training-mode forward passes
  std::optional<double> val_macro_f1;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double first_step_loss = 0.0;
};

struct TrainResult {
  ModelParams<float> params;  // best by validation macro F1 (last epoch without validation)
  TrainLog log;
};

/// Inverse class-frequency weights over all training frames, normalised to mean 1.
inline std::vector<float> inverse_frequency_weights(const std::vector<ModalityBundle>& data,
                                                    std::size_t classes) {
  std::vector<double> counts(classes, 0.0);
  for (const auto& b : data)
    for (int l : b.frame_targets())
      if (l >= 0 && static_cast<std::size_t>(l) < classes) counts[l] += 1.0;
  std::vector<double> w(classes);
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    w[c] = counts[c] > 0 ? 1.0 / counts[c] : 0.0;
    total += w[c];
  }
  std::vector<float> out(classes, 1.0f);
  std::size_t present = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; });
  for (std::size_t c = 0; c < classes; ++c)
    if (counts[c] > 0) out[c] = static_cast<float>(w[c] * present / total);
  return out;
}

/// Frame-level macro F1 of eval-mode predictions.
inline double validation_macro_f1(const std::vector<ModalityBundle>& data,
                                  const ModelParams<float>& params) {
  std::vector<int> preds, golds;
  for (const auto& b : data) {
    const auto p = predict(b, params);
    const auto g = b.frame_targets();
    preds.insert(preds.end(), p.labels.begin(), p.labels.end());
    golds.insert(golds.end(), g.begin(), g.end());
  }
  return macro_f1(confusion(preds, golds, params.config.classes)).macro_f1;
}

/// Adam on per-video cross-entropy, one video per step, visiting videos in a
/// seeded shuffled order each epoch. Stops early after `patience` epochs
/// without a validation improvement.
inline TrainResult train(const std::vector<ModalityBundle>& train_set,
                         const std::vector<ModalityBundle>& val_set, const ModelConfig& model_cfg,
                         const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  model_cfg.validate();
  cfg.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& b : *set) {
      if (!b.labeled()) throw DataError("train: video " + b.video_id + " has no label");
      for (int l : b.frame_targets())
        if (l < 0 || static_cast<std::size_t>(l) >= model_cfg.classes)
          throw LabelError("train: video " + b.video_id + " has label " + std::to_string(l) +
                           " outside [0, " + std::to_string(model_cfg.classes) + ")");
    }
  }
  if (cfg.class_weights && cfg.class_weights->size() != model_cfg.classes)
    throw ParameterError("train: class_weights must have one entry per class");

  auto params = init_params<float>(model_cfg, cfg.seed);
  params.set_requires_grad(true);
  auto tensors = params.tensors();
  AdamState<float> adam;

  std::vector<ModelInputs<float>> inputs;
  std::vector<std::vector<int>> targets;
  for (const auto& b : train_set) {
    inputs.push_back(to_inputs<float>(b));
    targets.push_back(b.frame_targets());
  }

  auto order_rng = detail::seeded_stream(cfg.seed, detail::fnv1a("order"), 0);
  auto dropout_rng = detail::seeded_stream(cfg.seed, detail::fnv1a("dropout"), 0);
  std::vector<std::size_t> order(train_set.size());

  TrainResult result;
  result.params = params.clone();
  std::optional<double> best_f1;
  std::size_t since_best = 0;
  std::optional<std::span<const float>> weights;
  if (cfg.class_weights) weights = std::span<const float>(*cfg.class_weights);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), order_rng);

    double loss_sum = 0.0;
    std::size_t correct = 0, frames = 0;
    for (std::size_t idx : order) {
      Graph<float> g;
      auto tr = forward(g, inputs[idx], params, Mode::train, dropout_rng);
      auto loss = cross_entropy(g, tr.logits, std::span<const int>(targets[idx]), weights);
      backward(g, loss);
      if (epoch == 1 && frames == 0) result.log.first_step_loss = loss.item();
      loss_sum += loss.item();
      const auto labels = argmax_rows<float>(tr.logits.data(), model_cfg.classes);
      for (std::size_t t = 0; t < labels.size(); ++t) correct += labels[t] == targets[idx][t];
      frames += labels.size();

      std::vector<std::span<const float>> grads;
      for (const auto& p : tensors) grads.push_back(p.grad());
      adam_step(tensors, grads, adam, cfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(frames);
    if (!val_set.empty()) rec.val_macro_f1 = validation_macro_f1(val_set, params);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (!rec.val_macro_f1 || !best_f1 || *rec.val_macro_f1 > *best_f1) {
      best_f1 = rec.val_macro_f1;
      result.params = params.clone();
      result.log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.params.set_requires_grad(false);
  return result;
}

/// Training log table (deterministic; wall time is reported separately).
inline std::string format_train_log(const TrainLog& log) {
  std::string out = "#epoch\tmean_loss\ttrain_frame_acc\tval_macro_f1\n";
  char buf[128];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t", e.epoch, e.mean_loss, e.train_accuracy);
    out += buf;
    if (e.val_macro_f1) {
      std::snprintf(buf, sizeof buf, "%.9g\n", *e.val_macro_f1);
      out += buf;
    } else {
      out += "-\n";
    }
  }
  return out;
}

inline std::string format_timing(const TrainLog& log) {
  std::string out = "#epoch\twall_seconds\n";
  char buf[64];
  for (const auto& e : log.epochs) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\n", e.epoch, e.wall_seconds);
    out += buf;
  }
  return out;
}

}  // namespace cef
