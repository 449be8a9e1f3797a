#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cef/errors.hpp"
#include "cef/predictions.hpp"

// Video-level aggregation of frame predictions and the trailing-window
// cross-model frame ensemble. Ties always resolve to the lowest class index.

namespace cef {

enum class AggregationMethod { vote, logits, probs };

inline std::string_view method_key(AggregationMethod m) {
  switch (m) {
    case AggregationMethod::vote: return "vote";
    case AggregationMethod::logits: return "logits";
    case AggregationMethod::probs: return "probs";
  }
  return "?";
}

/// Row labels used in comparison reports.
inline std::string_view method_title(AggregationMethod m) {
  switch (m) {
    case AggregationMethod::vote: return "Majority voting";
    case AggregationMethod::logits: return "Average logits";
    case AggregationMethod::probs: return "Average probabilities";
  }
  return "?";
}

inline AggregationMethod parse_method(std::string_view s) {
  if (s == "vote") return AggregationMethod::vote;
  if (s == "logits") return AggregationMethod::logits;
  if (s == "probs") return AggregationMethod::probs;
  throw UsageError("unknown aggregation method '" + std::string(s) + "' (vote, logits, probs)");
}

inline constexpr AggregationMethod kAllMethods[] = {
    AggregationMethod::vote, AggregationMethod::logits, AggregationMethod::probs};

namespace detail {

inline int modal_class(std::span<const std::size_t> counts) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c)
    if (counts[c] > counts[best]) best = c;
  return static_cast<int>(best);
}

inline int argmax_of_column_means(std::span<const float> values, std::size_t classes,
                                  const char* op) {
  if (classes == 0 || values.empty() || values.size() % classes != 0) {
    throw ContractError(std::string(op) + ": need at least one frame of " +
                        std::to_string(classes) + " classes");
  }
  const std::size_t frames = values.size() / classes;
  std::vector<double> means(classes, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < classes; ++c) means[c] += values[t * classes + c];
  for (auto& m : means) m /= static_cast<double>(frames);
  return static_cast<int>(std::max_element(means.begin(), means.end()) - means.begin());
}

}  // namespace detail

/// Most frequent label.
inline int majority_vote(std::span<const int> labels) {
  if (labels.empty()) throw ContractError("majority_vote: no frames");
  const int top = *std::max_element(labels.begin(), labels.end());
  if (*std::min_element(labels.begin(), labels.end()) < 0)
    throw LabelError("majority_vote: negative label");
  std::vector<std::size_t> counts(static_cast<std::size_t>(top) + 1, 0);
  for (int l : labels) ++counts[l];
  return detail::modal_class(counts);
}

/// Argmax of the per-class mean logit over frames ([T×K] row-major).
inline int average_logits(std::span<const float> logits, std::size_t classes) {
  return detail::argmax_of_column_means(logits, classes, "average_logits");
}

/// Argmax of the per-class mean probability; every row must sum to 1 (1e-5).
inline int average_probs(std::span<const float> probs, std::size_t classes) {
  if (classes > 0) {
    for (std::size_t t = 0; t * classes < probs.size(); ++t) {
      double total = 0.0;
      for (std::size_t c = 0; c < classes && t * classes + c < probs.size(); ++c)
        total += probs[t * classes + c];
      if (std::abs(total - 1.0) > 1e-5)
        throw ContractError("average_probs: row " + std::to_string(t) + " sums to " +
                            std::to_string(total));
    }
  }
  return detail::argmax_of_column_means(probs, classes, "average_probs");
}

inline int aggregate(const FramePredictions& p, AggregationMethod method) {
  switch (method) {
    case AggregationMethod::vote: return majority_vote(p.labels);
    case AggregationMethod::logits: return average_logits(p.logits, p.classes);
    case AggregationMethod::probs: return average_probs(p.probs, p.classes);
  }
  throw UsageError("unknown aggregation method");
}

/// For each frame t, pools every model's labels over frames
/// [max(0, t-window+1), t] and takes the modal class.
inline std::vector<int> sliding_window_ensemble(const std::vector<std::vector<int>>& models,
                                                std::size_t window = 10) {
  if (window < 1) throw ParameterError("sliding_window_ensemble: window must be >= 1");
  if (models.empty()) throw ContractError("sliding_window_ensemble: no models");
  const std::size_t frames = models.front().size();
  int top = 0;
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (models[m].size() != frames) {
      throw ContractError("sliding_window_ensemble: model " + std::to_string(m) + " has " +
                          std::to_string(models[m].size()) + " frames, model 0 has " +
                          std::to_string(frames));
    }
    for (int l : models[m]) {
      if (l < 0) throw LabelError("sliding_window_ensemble: negative label");
      top = std::max(top, l);
    }
  }
  // Running histogram over the trailing window.
  std::vector<std::size_t> counts(static_cast<std::size_t>(top) + 1, 0);
  std::vector<int> out(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    for (const auto& labels : models) ++counts[labels[t]];
    if (t >= window)
      for (const auto& labels : models) --counts[labels[t - window]];
    out[t] = detail::modal_class(counts);
  }
  return out;
}

}  // namespace cef
