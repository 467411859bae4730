#pragma once

// Token denoiser and its continuous regression twin.
//
// Both models are plain MLPs with tanh hidden layers, written out by hand
// (forward and reverse pass) so every gradient is inspectable. Input is the
// flattened noisy tensor, the conditioning features and the raw tau scalar;
// the denoiser emits one K-way logit row per chunk position, the baseline
// emits the normalized action vector directly.
//
// Conditioning features optionally carry a relative viewpoint offset
// (distance, yaw, pitch) through a learned linear embedding that is added
// elementwise to the feature vector.

#include <array>
#include <cstddef>
#include <optional>
#include <span>

#include "qdd/codec.hpp"
#include "qdd/common.hpp"
#include "qdd/diffusion.hpp"
#include "qdd/spherical.hpp"

namespace qdd {

struct Layer {
  int in = 0;
  int out = 0;
  Vec W;  // row-major, out x in
  Vec b;  // out
};

// Linear map from the 3-vector (distance delta, yaw, pitch) into feature
// space. Zero-initialized, so an untrained embedding is a no-op.
struct RelEmbed {
  int dim = 0;
  Vec W;  // row-major, dim x 3
  Vec b;  // dim
};

struct DenoiserParams {
  ChunkLayout layout;
  int bins = 0;
  int obs_dim = 0;  // conditioning feature width
  std::vector<Layer> layers;
  RelEmbed rel;
};

struct BaselineParams {
  ChunkLayout layout;
  int obs_dim = 0;
  std::vector<Layer> layers;
  RelEmbed rel;
};

struct Observation {
  Vec state;
  int task_id = 0;
  int n_tasks = 1;
  std::optional<view::ImageF64> image;  // encoded as a flattened 8x8 grayscale patch
  std::optional<view::SphericalOffset> view_offset;
};

inline constexpr int kPatchSide = 8;
inline constexpr int kPatchDim = kPatchSide * kPatchSide;

// Encoded conditioning vector. Keeps the offset that was embedded so the
// backward pass can route gradients into the embedding parameters.
struct ConditioningCache {
  Vec features;
  std::optional<std::array<double, 3>> offset;
};

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace detail {

inline Layer glorot_layer(int in, int out, Rng& rng) {
  Layer layer;
  layer.in = in;
  layer.out = out;
  layer.W.resize(static_cast<std::size_t>(in) * out);
  layer.b.assign(static_cast<std::size_t>(out), 0.0);
  double bound = std::sqrt(6.0 / (static_cast<double>(in) + static_cast<double>(out)));
  for (double& w : layer.W) w = rng.uniform(-bound, bound);
  return layer;
}

inline std::vector<Layer> glorot_stack(int input, std::span<const int> hidden, int output,
                                       Rng& rng) {
  require(input > 0 && output > 0, "shape-mismatch", "network needs positive input/output widths");
  std::vector<Layer> layers;
  int prev = input;
  for (int h : hidden) {
    require(h > 0, "shape-mismatch", "hidden width must be positive");
    layers.push_back(glorot_layer(prev, h, rng));
    prev = h;
  }
  layers.push_back(glorot_layer(prev, output, rng));
  return layers;
}

}  // namespace detail

inline int feature_width(int state_dim, int n_tasks, bool has_image = false) {
  return state_dim + (n_tasks > 1 ? n_tasks : 0) + (has_image ? kPatchDim : 0);
}

inline DenoiserParams init_denoiser(const ChunkLayout& layout, int bins, int obs_dim,
                                    std::span<const int> hidden, Rng& rng) {
  validate_layout(layout);
  require(bins >= 2, "invalid-argument", "need at least 2 bins");
  require(obs_dim > 0, "shape-mismatch", "conditioning feature width must be positive");
  DenoiserParams p;
  p.layout = layout;
  p.bins = bins;
  p.obs_dim = obs_dim;
  int width = layout.positions() * bins;
  p.layers = detail::glorot_stack(width + obs_dim + 1, hidden, width, rng);
  p.rel.dim = obs_dim;
  p.rel.W.assign(static_cast<std::size_t>(obs_dim) * 3, 0.0);
  p.rel.b.assign(static_cast<std::size_t>(obs_dim), 0.0);
  return p;
}

inline BaselineParams init_baseline(const ChunkLayout& layout, int obs_dim,
                                    std::span<const int> hidden, Rng& rng) {
  validate_layout(layout);
  require(obs_dim > 0, "shape-mismatch", "conditioning feature width must be positive");
  BaselineParams p;
  p.layout = layout;
  p.obs_dim = obs_dim;
  int width = layout.positions();
  p.layers = detail::glorot_stack(width + obs_dim + 1, hidden, width, rng);
  p.rel.dim = obs_dim;
  p.rel.W.assign(static_cast<std::size_t>(obs_dim) * 3, 0.0);
  p.rel.b.assign(static_cast<std::size_t>(obs_dim), 0.0);
  return p;
}

// Flat list of every parameter tensor, in a fixed order shared by the
// optimizer, EMA tracking and serialization.
template <class Params>
inline std::vector<Vec*> param_tensors(Params& p) {
  std::vector<Vec*> out;
  for (auto& layer : p.layers) {
    out.push_back(&layer.W);
    out.push_back(&layer.b);
  }
  out.push_back(&p.rel.W);
  out.push_back(&p.rel.b);
  return out;
}

template <class Params>
inline std::vector<const Vec*> param_tensors(const Params& p) {
  std::vector<const Vec*> out;
  for (const auto& layer : p.layers) {
    out.push_back(&layer.W);
    out.push_back(&layer.b);
  }
  out.push_back(&p.rel.W);
  out.push_back(&p.rel.b);
  return out;
}

// Tensor shapes (rows, cols) in param_tensors order; vectors report cols = 1.
template <class Params>
inline std::vector<std::pair<int, int>> param_shapes(const Params& p) {
  std::vector<std::pair<int, int>> out;
  for (const auto& layer : p.layers) {
    out.emplace_back(layer.out, layer.in);
    out.emplace_back(layer.out, 1);
  }
  out.emplace_back(p.rel.dim, 3);
  out.emplace_back(p.rel.dim, 1);
  return out;
}

template <class Params>
inline Params zeros_like(const Params& p) {
  Params z = p;
  for (Vec* t : param_tensors(z)) t->assign(t->size(), 0.0);
  return z;
}

// ---------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------

inline Vec rel_embed(const std::array<double, 3>& offset, const RelEmbed& rel) {
  Vec e(static_cast<std::size_t>(rel.dim));
  for (int i = 0; i < rel.dim; ++i) {
    const double* row = rel.W.data() + static_cast<std::size_t>(i) * 3;
    e[static_cast<std::size_t>(i)] =
        rel.b[static_cast<std::size_t>(i)] + row[0] * offset[0] + row[1] * offset[1] + row[2] * offset[2];
  }
  return e;
}

inline Vec rel_embed(const view::SphericalOffset& offset, const RelEmbed& rel) {
  return rel_embed(offset.as_array(), rel);
}

template <class Params>
inline ConditioningCache condition_encode(const Observation& obs, const Params& params) {
  for (double s : obs.state)
    require(std::isfinite(s), "invalid-argument", "non-finite observation state");
  ConditioningCache cache;
  cache.features = obs.state;
  if (obs.n_tasks > 1) {
    require(obs.task_id >= 0 && obs.task_id < obs.n_tasks, "invalid-argument",
            "task id outside [0, n_tasks)");
    Vec onehot(static_cast<std::size_t>(obs.n_tasks), 0.0);
    onehot[static_cast<std::size_t>(obs.task_id)] = 1.0;
    cache.features.insert(cache.features.end(), onehot.begin(), onehot.end());
  }
  if (obs.image) {
    Vec patch = view::to_gray_patch(*obs.image, kPatchSide);
    cache.features.insert(cache.features.end(), patch.begin(), patch.end());
  }
  require(static_cast<int>(cache.features.size()) == params.obs_dim, "shape-mismatch",
          "observation encodes to " + std::to_string(cache.features.size()) +
              " features, model expects " + std::to_string(params.obs_dim));
  if (obs.view_offset) {
    Vec e = rel_embed(*obs.view_offset, params.rel);
    for (std::size_t i = 0; i < cache.features.size(); ++i) cache.features[i] += e[i];
    cache.offset = obs.view_offset->as_array();
  }
  return cache;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace detail {

// acts, when requested, holds the input followed by each hidden activation;
// the return value is the linear output of the last layer.
inline Vec mlp_forward(const std::vector<Layer>& layers, Vec input, std::vector<Vec>* acts) {
  if (acts) {
    acts->clear();
    acts->push_back(input);
  }
  Vec cur = std::move(input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    require(static_cast<int>(cur.size()) == layer.in, "shape-mismatch",
            "layer input width mismatch");
    Vec next(static_cast<std::size_t>(layer.out));
    for (int i = 0; i < layer.out; ++i) {
      const double* row = layer.W.data() + static_cast<std::size_t>(i) * layer.in;
      double acc = layer.b[static_cast<std::size_t>(i)];
      for (int j = 0; j < layer.in; ++j) acc += row[j] * cur[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] = acc;
    }
    bool last = (l + 1 == layers.size());
    if (!last)
      for (double& x : next) x = std::tanh(x);
    cur = std::move(next);
    if (acts && !last) acts->push_back(cur);
  }
  return cur;
}

template <class Params>
inline Vec assemble_input(const Params& params, std::span<const double> body,
                          const ConditioningCache& cond, double tau) {
  require(static_cast<int>(cond.features.size()) == params.obs_dim, "shape-mismatch",
          "conditioning width does not match model");
  Vec input;
  input.reserve(body.size() + cond.features.size() + 1);
  input.insert(input.end(), body.begin(), body.end());
  input.insert(input.end(), cond.features.begin(), cond.features.end());
  input.push_back(tau);
  return input;
}

}  // namespace detail

inline Vec forward_logits(const DenoiserParams& params, const NoisyActionTensor& noisy,
                          const ConditioningCache& cond) {
  require(noisy.layout.horizon == params.layout.horizon &&
              noisy.layout.action_dim == params.layout.action_dim && noisy.bins == params.bins,
          "shape-mismatch", "noisy tensor does not match model layout");
  Vec input = detail::assemble_input(params, noisy.data, cond, noisy.tau);
  return detail::mlp_forward(params.layers, std::move(input), nullptr);
}

inline Vec forward_baseline(const BaselineParams& params, const Vec& noisy_actions,
                            const ConditioningCache& cond, double tau) {
  require(static_cast<int>(noisy_actions.size()) == params.layout.positions(), "shape-mismatch",
          "noisy action vector does not match model layout");
  Vec input = detail::assemble_input(params, noisy_actions, cond, tau);
  return detail::mlp_forward(params.layers, std::move(input), nullptr);
}

// Full decode against this denoiser: pure noise in, argmax-renoise walk
// along the grid, token grid out. The conditioning cache is computed once
// by the caller and reused across every iteration.
inline TokenGrid inference_loop(const DenoiserParams& params, const ConditioningCache& cache,
                                double alpha, const TauSchedule& grid, Rng& rng,
                                DecodeTrace* trace = nullptr) {
  LogitsFn logits_fn = [&](const NoisyActionTensor& z) { return forward_logits(params, z, cache); };
  return decode_tokens(params.layout, params.bins, alpha, grid, logits_fn, rng, trace);
}

inline TokenGrid inference_loop(const DenoiserParams& params, const ConditioningCache& cache,
                                double alpha, int steps, Rng& rng,
                                DecodeTrace* trace = nullptr) {
  return inference_loop(params, cache, alpha, uniform_tau_grid(steps), rng, trace);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Row-wise softmax over K logits per position.
inline Vec softmax_rows(const Vec& logits, const ChunkLayout& layout, int bins) {
  require(logits.size() == static_cast<std::size_t>(layout.positions()) * bins, "shape-mismatch",
          "logit tensor does not match layout");
  Vec probs(logits.size());
  for (int pos = 0; pos < layout.positions(); ++pos) {
    const double* row = logits.data() + static_cast<std::size_t>(pos) * bins;
    double* out = probs.data() + static_cast<std::size_t>(pos) * bins;
    double m = row[0];
    for (int k = 1; k < bins; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (int k = 0; k < bins; ++k) {
      out[k] = std::exp(row[k] - m);
      z += out[k];
    }
    for (int k = 0; k < bins; ++k) out[k] /= z;
  }
  return probs;
}

// Mean cross-entropy over chunk positions, computed through log-sum-exp.
inline double ce_loss(const Vec& logits, const TokenGrid& target) {
  require(logits.size() == static_cast<std::size_t>(target.layout.positions()) * target.bins,
          "shape-mismatch", "logit tensor does not match target grid");
  const int positions = target.layout.positions();
  const int bins = target.bins;
  double total = 0.0;
  for (int pos = 0; pos < positions; ++pos) {
    const double* row = logits.data() + static_cast<std::size_t>(pos) * bins;
    int t = target.indices[static_cast<std::size_t>(pos)];
    require(t >= 0 && t < bins, "invalid-token", "target token outside bin range");
    double m = row[0];
    for (int k = 1; k < bins; ++k) m = std::max(m, row[k]);
    double z = 0.0;
    for (int k = 0; k < bins; ++k) z += std::exp(row[k] - m);
    total += (m + std::log(z)) - row[t];
  }
  return total / static_cast<double>(positions);
}

inline double mse_loss(const Vec& pred, const Vec& target) {
  require(pred.size() == target.size() && !pred.empty(), "shape-mismatch",
          "prediction and target sizes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

struct DiscreteExample {
  NoisyActionTensor noisy;
  ConditioningCache cond;
  TokenGrid target;
};

struct BaselineExample {
  Vec noisy;  // positions() noisy normalized actions
  double tau = 0.0;
  ConditioningCache cond;
  Vec target;  // positions() clean normalized actions
};

namespace detail {

// Reverse pass for one example. `dout` is the loss gradient at the linear
// output; gradients accumulate into `grad`. Returns nothing extra: the
// input gradient is only needed for its conditioning slice, which is routed
// into the offset embedding when an offset was applied.
template <class Params>
inline void backprop_one(const Params& params, const std::vector<Vec>& acts, Vec dout,
                         const ConditioningCache& cond, Params& grad) {
  const auto& layers = params.layers;
  Vec delta = std::move(dout);
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Layer& layer = layers[l];
    Layer& glayer = grad.layers[l];
    const Vec& a_in = acts[l];
    for (int i = 0; i < layer.out; ++i) {
      double d = delta[static_cast<std::size_t>(i)];
      glayer.b[static_cast<std::size_t>(i)] += d;
      double* grow = glayer.W.data() + static_cast<std::size_t>(i) * layer.in;
      for (int j = 0; j < layer.in; ++j) grow[j] += d * a_in[static_cast<std::size_t>(j)];
    }
    if (l == 0) {
      if (!cond.offset) return;
      // d(input) restricted to the feature slice; features = base + W*off + b.
      Vec dfeat(static_cast<std::size_t>(params.obs_dim), 0.0);
      std::size_t feat_begin = a_in.size() - static_cast<std::size_t>(params.obs_dim) - 1;
      for (int i = 0; i < layer.out; ++i) {
        double d = delta[static_cast<std::size_t>(i)];
        const double* row = layer.W.data() + static_cast<std::size_t>(i) * layer.in;
        for (int f = 0; f < params.obs_dim; ++f)
          dfeat[static_cast<std::size_t>(f)] += d * row[feat_begin + static_cast<std::size_t>(f)];
      }
      const auto& off = *cond.offset;
      for (int f = 0; f < params.obs_dim; ++f) {
        double d = dfeat[static_cast<std::size_t>(f)];
        double* grow = grad.rel.W.data() + static_cast<std::size_t>(f) * 3;
        grow[0] += d * off[0];
        grow[1] += d * off[1];
        grow[2] += d * off[2];
        grad.rel.b[static_cast<std::size_t>(f)] += d;
      }
      return;
    }
    // Propagate through W_l and the tanh of the previous hidden layer.
    const Vec& a_prev = acts[l];  // post-tanh activation feeding layer l
    Vec dprev(static_cast<std::size_t>(layer.in), 0.0);
    for (int i = 0; i < layer.out; ++i) {
      double d = delta[static_cast<std::size_t>(i)];
      const double* row = layer.W.data() + static_cast<std::size_t>(i) * layer.in;
      for (int j = 0; j < layer.in; ++j) dprev[static_cast<std::size_t>(j)] += d * row[j];
    }
    for (int j = 0; j < layer.in; ++j) {
      double a = a_prev[static_cast<std::size_t>(j)];
      dprev[static_cast<std::size_t>(j)] *= (1.0 - a * a);
    }
    delta = std::move(dprev);
  }
}

}  // namespace detail

// Mean cross-entropy loss over the batch; `grad` is overwritten with the
// batch-mean gradient.
inline double backward_batch(const DenoiserParams& params, std::span<const DiscreteExample> batch,
                             DenoiserParams& grad) {
  require(!batch.empty(), "invalid-argument", "empty training batch");
  grad = zeros_like(params);
  const int positions = params.layout.positions();
  const int bins = params.bins;
  double total_loss = 0.0;
  std::vector<Vec> acts;
  for (const auto& ex : batch) {
    require(ex.noisy.bins == bins && ex.target.bins == bins, "shape-mismatch",
            "example bins do not match model");
    Vec input = detail::assemble_input(params, ex.noisy.data, ex.cond, ex.noisy.tau);
    Vec logits = detail::mlp_forward(params.layers, std::move(input), &acts);
    total_loss += ce_loss(logits, ex.target);
    // d(mean CE)/d(logits) = (softmax - onehot) / positions
    Vec dout = softmax_rows(logits, params.layout, bins);
    for (int pos = 0; pos < positions; ++pos)
      dout[static_cast<std::size_t>(pos) * bins + ex.target.indices[static_cast<std::size_t>(pos)]] -=
          1.0;
    for (double& g : dout) g /= static_cast<double>(positions);
    detail::backprop_one(params, acts, std::move(dout), ex.cond, grad);
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  for (Vec* t : param_tensors(grad))
    for (double& g : *t) g *= inv;
  return total_loss * inv;
}

inline double backward_batch_mse(const BaselineParams& params,
                                 std::span<const BaselineExample> batch, BaselineParams& grad) {
  require(!batch.empty(), "invalid-argument", "empty training batch");
  grad = zeros_like(params);
  const int positions = params.layout.positions();
  double total_loss = 0.0;
  std::vector<Vec> acts;
  for (const auto& ex : batch) {
    require(static_cast<int>(ex.noisy.size()) == positions &&
                static_cast<int>(ex.target.size()) == positions,
            "shape-mismatch", "example length does not match model layout");
    Vec input = detail::assemble_input(params, ex.noisy, ex.cond, ex.tau);
    Vec pred = detail::mlp_forward(params.layers, std::move(input), &acts);
    total_loss += mse_loss(pred, ex.target);
    Vec dout(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
      dout[i] = 2.0 * (pred[i] - ex.target[i]) / static_cast<double>(positions);
    detail::backprop_one(params, acts, std::move(dout), ex.cond, grad);
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  for (Vec* t : param_tensors(grad))
    for (double& g : *t) g *= inv;
  return total_loss * inv;
}

// ---------------------------------------------------------------------------
// Finite-difference audit
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  int worst_tensor = -1;
  std::size_t worst_index = 0;
};

// Central finite differences against the analytic batch gradient. Walks a
// deterministic sample of coordinates that covers every tensor. Only the
// forward pass is exercised on the perturbed parameters, so this is an
// independent check of the reverse pass.
template <class Params, class Example, class LossFn>
inline GradCheckReport finite_difference_check(const Params& params,
                                               std::span<const Example> batch, double h,
                                               std::size_t per_tensor, const LossFn& batch_loss,
                                               const Params& analytic_grad, Rng& rng) {
  GradCheckReport report;
  Params work = params;
  auto tensors = param_tensors(work);
  auto grads = param_tensors(analytic_grad);
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Vec& t = *tensors[ti];
    const Vec& g = *grads[ti];
    std::size_t n = t.size();
    if (n == 0) continue;
    Rng stream = rng.derive("fd-tensor", ti);
    std::size_t count = std::min(per_tensor, n);
    for (std::size_t c = 0; c < count; ++c) {
      std::size_t idx = (count == n) ? c : stream.uniform_index(n);
      double saved = t[idx];
      t[idx] = saved + h;
      double up = batch_loss(work, batch);
      t[idx] = saved - h;
      double down = batch_loss(work, batch);
      t[idx] = saved;
      double fd = (up - down) / (2.0 * h);
      double an = g[idx];
      double rel = std::abs(an - fd) / std::max({1e-6, std::abs(an), std::abs(fd)});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = static_cast<int>(ti);
        report.worst_index = idx;
      }
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace qdd
