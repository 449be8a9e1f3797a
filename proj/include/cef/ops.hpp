#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cef/errors.hpp"
#include "cef/tensor.hpp"

// Differentiable operations over Tensor<S>. Every op validates shapes, computes
// its value, rejects non-finite results, and records a backward rule on the
// graph when any input requires a gradient.

namespace cef {

namespace detail {

template <class S>
void require_finite(std::span<const S> values, const char* op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

template <class S>
void require_rank(const Tensor<S>& t, std::size_t rank, const char* op, const char* name) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must be rank " +
                         std::to_string(rank) + ", got " +
                         (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
  }
}

template <class S>
Tensor<S> make_output(Shape shape, std::vector<S> data, bool tracked, const char* op) {
  require_finite<S>(data, op);
  return Tensor<S>(std::move(shape), std::move(data), tracked);
}

// y[n] += alpha * x[n]
template <class S>
inline void axpy(S alpha, const S* x, S* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class S>
std::vector<S> transpose(std::span<const S> m, std::size_t rows, std::size_t cols) {
  std::vector<S> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = m[r * cols + c];
  return out;
}

}  // namespace detail

template <class S>
Tensor<S> matmul(Graph<S>& g, const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_rank(a, 2, "matmul", "lhs");
  detail::require_rank(b, 2, "matmul", "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  std::vector<S> out(m * n, S{0});
  const S* pa = a.data().data();
  const S* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    S* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) detail::axpy(pa[i * k + p], pb + p * n, row, n);
  }
  const bool tracked = g.should_record({&a, &b});
  auto y = detail::make_output<S>({m, n}, std::move(out), tracked, "matmul");
  if (tracked) {
    auto sa = a.storage(), sb = b.storage(), sy = y.storage();
    g.record("matmul", {sa, sb}, sy, [sa, sb, sy, m, k, n] {
      const S* gy = sy->grad.data();
      if (sa->requires_grad) {
        // da = gy * b^T
        auto bt = detail::transpose<S>(sb->data, k, n);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            detail::axpy(gy[i * n + j], bt.data() + j * k, sa->grad.data() + i * k, k);
      }
      if (sb->requires_grad) {
        // db = a^T * gy
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p)
            detail::axpy(sa->data[i * k + p], gy + i * n, sb->grad.data() + p * n, n);
      }
    });
  }
  return y;
}

template <class S>
Tensor<S> add(Graph<S>& g, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const bool tracked = g.should_record({&a, &b});
  auto y = detail::make_output<S>(a.shape(), std::move(out), tracked, "add");
  if (tracked) {
    auto sa = a.storage(), sb = b.storage(), sy = y.storage();
    g.record("add", {sa, sb}, sy, [sa, sb, sy] {
      const std::size_t n = sy->grad.size();
      if (sa->requires_grad) detail::axpy(S{1}, sy->grad.data(), sa->grad.data(), n);
      if (sb->requires_grad) detail::axpy(S{1}, sy->grad.data(), sb->grad.data(), n);
    });
  }
  return y;
}

/// x[M×N] + bias[N] broadcast over rows.
template <class S>
Tensor<S> add_bias(Graph<S>& g, const Tensor<S>& x, const Tensor<S>& bias) {
  detail::require_rank(x, 2, "add_bias", "input");
  detail::require_rank(bias, 1, "add_bias", "bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match input " + shape_str(x.shape()));
  }
  std::vector<S> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i) detail::axpy(S{1}, bias.data().data(), out.data() + i * n, n);
  const bool tracked = g.should_record({&x, &bias});
  auto y = detail::make_output<S>(x.shape(), std::move(out), tracked, "add_bias");
  if (tracked) {
    auto sx = x.storage(), sb = bias.storage(), sy = y.storage();
    g.record("add_bias", {sx, sb}, sy, [sx, sb, sy, m, n] {
      if (sx->requires_grad) detail::axpy(S{1}, sy->grad.data(), sx->grad.data(), m * n);
      if (sb->requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          detail::axpy(S{1}, sy->grad.data() + i * n, sb->grad.data(), n);
    });
  }
  return y;
}

template <class S>
Tensor<S> scale(Graph<S>& g, const Tensor<S>& x, S factor) {
  std::vector<S> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  const bool tracked = g.should_record({&x});
  auto y = detail::make_output<S>(x.shape(), std::move(out), tracked, "scale");
  if (tracked) {
    auto sx = x.storage(), sy = y.storage();
    g.record("scale", {sx}, sy, [sx, sy, factor] {
      detail::axpy(factor, sy->grad.data(), sx->grad.data(), sy->grad.size());
    });
  }
  return y;
}

/// Elementwise product.
template <class S>
Tensor<S> mul(Graph<S>& g, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<S> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const bool tracked = g.should_record({&a, &b});
  auto y = detail::make_output<S>(a.shape(), std::move(out), tracked, "mul");
  if (tracked) {
    auto sa = a.storage(), sb = b.storage(), sy = y.storage();
    g.record("mul", {sa, sb}, sy, [sa, sb, sy] {
      for (std::size_t i = 0; i < sy->grad.size(); ++i) {
        if (sa->requires_grad) sa->grad[i] += sy->grad[i] * sb->data[i];
        if (sb->requires_grad) sb->grad[i] += sy->grad[i] * sa->data[i];
      }
    });
  }
  return y;
}

template <class S>
Tensor<S> relu(Graph<S>& g, const Tensor<S>& x) {
  std::vector<S> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > S{0} ? x[i] : S{0};
  g.note_branches(x.data());
  const bool tracked = g.should_record({&x});
  auto y = detail::make_output<S>(x.shape(), std::move(out), tracked, "relu");
  if (tracked) {
    auto sx = x.storage(), sy = y.storage();
    g.record("relu", {sx}, sy, [sx, sy] {
      for (std::size_t i = 0; i < sy->grad.size(); ++i)
        if (sx->data[i] > S{0}) sx->grad[i] += sy->grad[i];
    });
  }
  return y;
}

/// Scalar sum of all elements.
template <class S>
Tensor<S> sum(Graph<S>& g, const Tensor<S>& x) {
  S total{0};
  for (S v : x.data()) total += v;
  const bool tracked = g.should_record({&x});
  auto y = detail::make_output<S>(Shape{}, std::vector<S>{total}, tracked, "sum");
  if (tracked) {
    auto sx = x.storage(), sy = y.storage();
    g.record("sum", {sx}, sy, [sx, sy] {
      const S gy = sy->grad[0];
      for (auto& v : sx->grad) v += gy;
    });
  }
  return y;
}

/// [T×A] ++ [T×B] -> [T×(A+B)] along the feature axis.
template <class S>
Tensor<S> concat_cols(Graph<S>& g, const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_rank(a, 2, "concat_cols", "lhs");
  detail::require_rank(b, 2, "concat_cols", "rhs");
  if (a.dim(0) != b.dim(0)) {
    throw AlignmentError("concat_cols: frame counts differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  const std::size_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1), c = ca + cb;
  std::vector<S> out(rows * c);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, out.data() + r * c);
    std::copy_n(b.data().data() + r * cb, cb, out.data() + r * c + ca);
  }
  const bool tracked = g.should_record({&a, &b});
  auto y = detail::make_output<S>({rows, c}, std::move(out), tracked, "concat_cols");
  if (tracked) {
    auto sa = a.storage(), sb = b.storage(), sy = y.storage();
    g.record("concat_cols", {sa, sb}, sy, [sa, sb, sy, rows, ca, cb, c] {
      for (std::size_t r = 0; r < rows; ++r) {
        const S* gy = sy->grad.data() + r * c;
        if (sa->requires_grad) detail::axpy(S{1}, gy, sa->grad.data() + r * ca, ca);
        if (sb->requires_grad) detail::axpy(S{1}, gy + ca, sb->grad.data() + r * cb, cb);
      }
    });
  }
  return y;
}

/// Inverted dropout. `rate == 0` returns the input unchanged.
template <class S, class Rng>
Tensor<S> dropout(Graph<S>& g, const Tensor<S>& x, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ParameterError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return x;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  std::vector<S> mask(x.numel());
  for (auto& m : mask) m = std::generate_canonical<double, 53>(rng) >= rate ? keep_scale : S{0};
  std::vector<S> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  const bool tracked = g.should_record({&x});
  auto y = detail::make_output<S>(x.shape(), std::move(out), tracked, "dropout");
  if (tracked) {
    auto sx = x.storage(), sy = y.storage();
    g.record("dropout", {sx}, sy, [sx, sy, mask = std::move(mask)] {
      for (std::size_t i = 0; i < mask.size(); ++i) sx->grad[i] += sy->grad[i] * mask[i];
    });
  }
  return y;
}

/// Causal dilated 1-D convolution over the frame axis.
///
/// input [T×C_in], kernel [k×C_in×C_out]. The input is implicitly left-padded
/// with (k-1)*dilation zero frames; tap j reads frame t-(k-1-j)*dilation, so
/// the last tap sees the current frame and output t never reads frames > t.
template <class S>
Tensor<S> conv1d_causal(Graph<S>& g, const Tensor<S>& input, const Tensor<S>& kernel,
                        std::size_t dilation) {
  if (dilation < 1) throw ParameterError("conv1d_causal: dilation must be >= 1");
  detail::require_rank(input, 2, "conv1d_causal", "input");
  detail::require_rank(kernel, 3, "conv1d_causal", "kernel");
  const std::size_t frames = input.dim(0), cin = input.dim(1);
  const std::size_t taps = kernel.dim(0), cout = kernel.dim(2);
  if (frames < 1) throw DimensionError("conv1d_causal: input has no frames");
  if (kernel.dim(1) != cin) {
    throw DimensionError("conv1d_causal: kernel " + shape_str(kernel.shape()) +
                         " does not match input " + shape_str(input.shape()));
  }
  const S* px = input.data().data();
  const S* pk = kernel.data().data();
  std::vector<S> out(frames * cout, S{0});
  for (std::size_t t = 0; t < frames; ++t) {
    S* row = out.data() + t * cout;
    for (std::size_t j = 0; j < taps; ++j) {
      const std::size_t shift = (taps - 1 - j) * dilation;
      if (shift > t) continue;
      const S* xr = px + (t - shift) * cin;
      const S* kj = pk + j * cin * cout;
      for (std::size_t ci = 0; ci < cin; ++ci) detail::axpy(xr[ci], kj + ci * cout, row, cout);
    }
  }
  const bool tracked = g.should_record({&input, &kernel});
  auto y = detail::make_output<S>({frames, cout}, std::move(out), tracked, "conv1d_causal");
  if (tracked) {
    auto sx = input.storage(), sk = kernel.storage(), sy = y.storage();
    g.record("conv1d_causal", {sx, sk}, sy, [sx, sk, sy, frames, cin, taps, cout, dilation] {
      const S* gy = sy->grad.data();
      std::vector<S> kt;
      if (sx->requires_grad) kt.resize(taps * cin * cout);
      for (std::size_t j = 0; j < taps && sx->requires_grad; ++j) {
        auto tj = detail::transpose<S>(
            std::span<const S>(sk->data).subspan(j * cin * cout, cin * cout), cin, cout);
        std::copy(tj.begin(), tj.end(), kt.begin() + j * cin * cout);
      }
      for (std::size_t t = 0; t < frames; ++t) {
        const S* gr = gy + t * cout;
        for (std::size_t j = 0; j < taps; ++j) {
          const std::size_t shift = (taps - 1 - j) * dilation;
          if (shift > t) continue;
          const std::size_t src = t - shift;
          if (sk->requires_grad) {
            S* dk = sk->grad.data() + j * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci)
              detail::axpy(sx->data[src * cin + ci], gr, dk + ci * cout, cout);
          }
          if (sx->requires_grad) {
            S* dx = sx->grad.data() + src * cin;
            const S* ktj = kt.data() + j * cin * cout;
            for (std::size_t co = 0; co < cout; ++co) detail::axpy(gr[co], ktj + co * cin, dx, cin);
          }
        }
      }
    });
  }
  return y;
}

/// Max-subtracted softmax along `axis`.
template <class S>
Tensor<S> softmax(Graph<S>& g, const Tensor<S>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(x.shape()));
  }
  detail::require_finite<S>(x.data(), "softmax");
  const auto& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[axis];
  std::vector<S> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      S peak = x[base];
      for (std::size_t i = 1; i < n; ++i) peak = std::max(peak, x[base + i * inner]);
      S total{0};
      for (std::size_t i = 0; i < n; ++i) {
        const S e = std::exp(x[base + i * inner] - peak);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= total;
    }
  }
  const bool tracked = g.should_record({&x});
  auto y = detail::make_output<S>(shape, std::move(out), tracked, "softmax");
  if (tracked) {
    auto sx = x.storage(), sy = y.storage();
    g.record("softmax", {sx}, sy, [sx, sy, outer, inner, n] {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          S dot{0};
          for (std::size_t i = 0; i < n; ++i)
            dot += sy->grad[base + i * inner] * sy->data[base + i * inner];
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t at = base + i * inner;
            sx->grad[at] += sy->data[at] * (sy->grad[at] - dot);
          }
        }
      }
    });
  }
  return y;
}

/// Mean over frames of the (optionally class-weighted) negative log-likelihood.
///
/// With weights w, the loss is sum_t w[y_t] * nll_t / sum_t w[y_t]. Equal
/// weights cancel exactly and are skipped.
template <class S>
Tensor<S> cross_entropy(Graph<S>& g, const Tensor<S>& logits, std::span<const int> targets,
                        std::optional<std::span<const S>> class_weights = std::nullopt) {
  detail::require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t frames = logits.dim(0), classes = logits.dim(1);
  if (targets.size() != frames) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(frames) + " frames");
  }
  if (frames == 0) throw DimensionError("cross_entropy: no frames");
  for (std::size_t t = 0; t < frames; ++t) {
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= classes) {
      throw LabelError("cross_entropy: target " + std::to_string(targets[t]) + " at frame " +
                       std::to_string(t) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  std::vector<S> frame_weight(frames, S{1});
  if (class_weights) {
    const auto w = *class_weights;
    if (w.size() != classes) {
      throw DimensionError("cross_entropy: " + std::to_string(w.size()) +
                           " class weights for " + std::to_string(classes) + " classes");
    }
    for (S v : w)
      if (!(v > S{0}) || !std::isfinite(v))
        throw ParameterError("cross_entropy: class weights must be positive and finite");
    if (!std::all_of(w.begin(), w.end(), [&](S v) { return v == w[0]; })) {
      for (std::size_t t = 0; t < frames; ++t) frame_weight[t] = w[targets[t]];
    }
  }
  detail::require_finite<S>(logits.data(), "cross_entropy");
  std::vector<S> probs(frames * classes);
  S weighted{0}, total_weight{0};
  for (std::size_t t = 0; t < frames; ++t) {
    const S* row = logits.data().data() + t * classes;
    S peak = row[0];
    for (std::size_t c = 1; c < classes; ++c) peak = std::max(peak, row[c]);
    S denom{0};
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - peak);
    const S log_denom = std::log(denom);
    for (std::size_t c = 0; c < classes; ++c)
      probs[t * classes + c] = std::exp(row[c] - peak - log_denom);
    weighted += frame_weight[t] * (log_denom + peak - row[targets[t]]);
    total_weight += frame_weight[t];
  }
  const bool tracked = g.should_record({&logits});
  auto y = detail::make_output<S>(Shape{}, std::vector<S>{weighted / total_weight}, tracked,
                                  "cross_entropy");
  if (tracked) {
    auto sx = logits.storage(), sy = y.storage();
    std::vector<int> labels(targets.begin(), targets.end());
    g.record("cross_entropy", {sx}, sy,
             [sx, sy, frames, classes, total_weight, probs = std::move(probs),
              labels = std::move(labels), frame_weight = std::move(frame_weight)] {
               const S gy = sy->grad[0];
               for (std::size_t t = 0; t < frames; ++t) {
                 const S coef = gy * frame_weight[t] / total_weight;
                 S* dx = sx->grad.data() + t * classes;
                 for (std::size_t c = 0; c < classes; ++c) dx[c] += coef * probs[t * classes + c];
                 dx[labels[t]] -= coef;
               }
             });
  }
  return y;
}

/// Per-frame windowed scaled dot-product attention over several token streams.
///
/// For frame t the token set is every stream's rows in [t-W, t+W] clipped to
/// [0, T-1], ordered stream-major then by frame. Scores are q_t . k / sqrt(D).
/// If `weights_out` is given it receives each frame's attention weights in
/// token order.
template <class S>
Tensor<S> windowed_attention(Graph<S>& g, const Tensor<S>& query,
                             const std::vector<Tensor<S>>& keys,
                             const std::vector<Tensor<S>>& values, std::size_t window,
                             std::vector<std::vector<S>>* weights_out = nullptr) {
  detail::require_rank(query, 2, "windowed_attention", "query");
  const std::size_t frames = query.dim(0), width = query.dim(1);
  if (keys.empty() || keys.size() != values.size()) {
    throw DimensionError("windowed_attention: need matching nonempty key/value streams");
  }
  for (std::size_t s = 0; s < keys.size(); ++s) {
    for (const auto* t : {&keys[s], &values[s]}) {
      detail::require_rank(*t, 2, "windowed_attention", "stream");
      if (t->dim(0) != frames) {
        throw AlignmentError("windowed_attention: stream frame count " +
                             std::to_string(t->dim(0)) + " differs from query " +
                             std::to_string(frames));
      }
      if (t->dim(1) != width) {
        throw DimensionError("windowed_attention: stream width " + shape_str(t->shape()) +
                             " differs from query " + shape_str(query.shape()));
      }
    }
  }
  const std::size_t streams = keys.size();
  const S inv_sqrt = S{1} / std::sqrt(static_cast<S>(width));
  std::vector<S> out(frames * width, S{0});
  std::vector<std::vector<S>> weights(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t lo = t >= window ? t - window : 0;
    const std::size_t hi = std::min(frames - 1, t + window);
    const std::size_t span_len = hi - lo + 1;
    auto& w = weights[t];
    w.resize(streams * span_len);
    const S* q = query.data().data() + t * width;
    for (std::size_t s = 0; s < streams; ++s) {
      for (std::size_t f = lo; f <= hi; ++f) {
        const S* k = keys[s].data().data() + f * width;
        S dot{0};
        for (std::size_t d = 0; d < width; ++d) dot += q[d] * k[d];
        w[s * span_len + (f - lo)] = dot * inv_sqrt;
      }
    }
    const S peak = *std::max_element(w.begin(), w.end());
    S total{0};
    for (auto& v : w) {
      v = std::exp(v - peak);
      total += v;
    }
    for (auto& v : w) v /= total;
    S* o = out.data() + t * width;
    for (std::size_t s = 0; s < streams; ++s)
      for (std::size_t f = lo; f <= hi; ++f)
        detail::axpy(w[s * span_len + (f - lo)], values[s].data().data() + f * width, o, width);
  }
  if (weights_out) *weights_out = weights;

  bool tracked = g.should_record({&query});
  for (std::size_t s = 0; s < streams; ++s)
    tracked = tracked || g.should_record({&keys[s], &values[s]});
  auto y = detail::make_output<S>({frames, width}, std::move(out), tracked,
                                  "windowed_attention");
  if (tracked) {
    using Ptr = std::shared_ptr<TensorStorage<S>>;
    Ptr sq = query.storage(), sy = y.storage();
    std::vector<Ptr> sk, sv, inputs{sq};
    for (std::size_t s = 0; s < streams; ++s) {
      sk.push_back(keys[s].storage());
      sv.push_back(values[s].storage());
      inputs.push_back(sk.back());
      inputs.push_back(sv.back());
    }
    g.record("windowed_attention", std::move(inputs), sy,
             [sq, sy, sk, sv, frames, width, window, streams, inv_sqrt,
              weights = std::move(weights)] {
               std::vector<S> dweight;
               for (std::size_t t = 0; t < frames; ++t) {
                 const std::size_t lo = t >= window ? t - window : 0;
                 const std::size_t hi = std::min(frames - 1, t + window);
                 const std::size_t span_len = hi - lo + 1;
                 const auto& w = weights[t];
                 const S* gy = sy->grad.data() + t * width;
                 dweight.assign(w.size(), S{0});
                 S mixed{0};
                 for (std::size_t s = 0; s < streams; ++s) {
                   for (std::size_t f = lo; f <= hi; ++f) {
                     const std::size_t n = s * span_len + (f - lo);
                     const S* v = sv[s]->data.data() + f * width;
                     S dot{0};
                     for (std::size_t d = 0; d < width; ++d) dot += gy[d] * v[d];
                     dweight[n] = dot;
                     mixed += w[n] * dot;
                     if (sv[s]->requires_grad)
                       detail::axpy(w[n], gy, sv[s]->grad.data() + f * width, width);
                   }
                 }
                 const S* q = sq->data.data() + t * width;
                 for (std::size_t s = 0; s < streams; ++s) {
                   for (std::size_t f = lo; f <= hi; ++f) {
                     const std::size_t n = s * span_len + (f - lo);
                     const S dscore = w[n] * (dweight[n] - mixed) * inv_sqrt;
                     if (sq->requires_grad)
                       detail::axpy(dscore, sk[s]->data.data() + f * width,
                                    sq->grad.data() + t * width, width);
                     if (sk[s]->requires_grad)
                       detail::axpy(dscore, q, sk[s]->grad.data() + f * width, width);
                   }
                 }
               }
             });
  }
  return y;
}

/// Row-wise argmax of a [T×K] matrix; ties resolve to the lowest index.
template <class S>
std::vector<int> argmax_rows(std::span<const S> values, std::size_t classes) {
  std::vector<int> labels(classes ? values.size() / classes : 0);
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const S* row = values.data() + t * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (row[c] > row[best]) best = c;
    labels[t] = static_cast<int>(best);
  }
  return labels;
}

}  // namespace cef
