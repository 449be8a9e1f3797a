#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "cef/tensor.hpp"

namespace cef {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;  // coordinates compared
  std::size_t skipped = 0;      // coordinates whose perturbation crossed a kink
  // Location of the worst coordinate.
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

/// Compares reverse-mode gradients against central differences.
///
/// `loss_fn(Graph<S>&)` must build a scalar loss from `params` deterministically;
/// the parameter tensors are perturbed in place and restored.
///
/// With `max_coordinates == 0` (or at least the parameter count) every
/// coordinate is checked. Otherwise every tensor contributes at least one
/// coordinate and the rest are drawn uniformly from `seed` until
/// `max_coordinates` have been compared.
///
/// A central difference is only an oracle where the loss is smooth on
/// [x-eps, x+eps]. When either perturbed evaluation takes a different ReLU
/// branch than the unperturbed one (see Graph::note_branches) the coordinate
/// is counted in `skipped` and, when sampling, replaced by a fresh draw.
template <class S, class LossFn>
GradCheckReport grad_check(LossFn&& loss_fn, std::vector<Tensor<S>> params, S epsilon,
                           std::size_t max_coordinates = 0, std::uint64_t seed = 0) {
  for (auto& p : params)
    if (!p.requires_grad()) p.set_requires_grad(true);

  std::vector<std::vector<S>> analytic;
  std::uint64_t base_signature = 0;
  {
    Graph<S> graph;
    auto loss = loss_fn(graph);
    base_signature = graph.branch_signature();
    backward(graph, loss);
    for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  std::size_t total = 0;
  for (const auto& p : params) total += p.numel();

  struct Eval {
    double loss;
    std::uint64_t signature;
  };
  auto eval = [&] {
    Graph<S> graph;
    graph.set_recording(false);
    const double loss = static_cast<double>(loss_fn(graph).item());
    return Eval{loss, graph.branch_signature()};
  };

  GradCheckReport report;
  // Returns false when the coordinate was skipped.
  auto check = [&](std::size_t tensor, std::size_t index) {
    S& x = params[tensor].data()[index];
    const S original = x;
    x = original + epsilon;
    const Eval plus = eval();
    x = original - epsilon;
    const Eval minus = eval();
    x = original;
    if (plus.signature != base_signature || minus.signature != base_signature) {
      ++report.skipped;
      return false;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * static_cast<double>(epsilon));
    const double a = static_cast<double>(analytic[tensor][index]);
    const double err = relative_error(a, numeric);
    ++report.coordinates;
    if (err >= report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_tensor = tensor;
      report.worst_index = index;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
    return true;
  };

  if (max_coordinates == 0 || total <= max_coordinates) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < params[i].numel(); ++j) check(i, j);
    return report;
  }

  std::mt19937_64 rng(seed);
  std::set<std::pair<std::size_t, std::size_t>> tried;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].numel() == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, params[i].numel() - 1);
    // A few attempts per tensor to land on a smooth coordinate.
    for (int attempt = 0; attempt < 8; ++attempt) {
      const std::size_t j = pick(rng);
      if (!tried.emplace(i, j).second) continue;
      if (check(i, j)) break;
    }
  }
  std::uniform_int_distribution<std::size_t> flat(0, total - 1);
  while (report.coordinates < max_coordinates && tried.size() < total) {
    std::size_t at = flat(rng), tensor = 0;
    while (at >= params[tensor].numel()) at -= params[tensor++].numel();
    if (!tried.emplace(tensor, at).second) continue;
    check(tensor, at);
  }
  return report;
}

}  // namespace cef
