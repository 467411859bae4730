#pragma once

// Training loop: AdamW with decoupled weight decay, global-norm gradient
// clipping, linear-warmup + cosine LR decay, and an EMA shadow of the
// parameters that evaluation reads instead of the raw weights.
//
// Runs single threaded on purpose: summation order is fixed, so one seed
// gives one byte-identical metrics trace.

#include <cstdint>
#include <string>
#include <vector>

#include "qdd/codec.hpp"
#include "qdd/common.hpp"
#include "qdd/dataset.hpp"
#include "qdd/denoiser.hpp"
#include "qdd/diffusion.hpp"

namespace qdd {

enum class ModelKind { discrete, mse_baseline };

inline std::string to_string(ModelKind kind) {
  return kind == ModelKind::discrete ? "discrete" : "mse_baseline";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "discrete") return ModelKind::discrete;
  if (s == "mse_baseline") return ModelKind::mse_baseline;
  fail("invalid-argument", "unknown model kind '" + s + "'");
}

struct TrainConfig {
  std::int64_t total_steps = 5000;
  int batch_size = 64;
  std::int64_t warmup_steps = 500;
  double peak_lr = 5e-5;
  double final_lr = 5e-6;
  double clip_norm = 1.0;
  double ema_decay = 0.999;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  TauSchedule tau;
  double smooth_alpha = 0.1;
  NormMode norm_mode = NormMode::quantile;
  std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
  require(cfg.total_steps >= 1, "invalid-argument", "total_steps must be >= 1");
  require(cfg.batch_size >= 1, "invalid-argument", "batch_size must be >= 1");
  require(cfg.warmup_steps >= 0 && cfg.warmup_steps < cfg.total_steps, "invalid-argument",
          "warmup_steps must lie in [0, total_steps)");
  require(cfg.peak_lr > 0.0 && cfg.final_lr >= 0.0, "invalid-argument",
          "learning rates must be positive");
  require(cfg.clip_norm > 0.0, "invalid-argument", "clip_norm must be positive");
  require(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0, "invalid-argument",
          "ema_decay must lie in [0, 1)");
  require(cfg.smooth_alpha > 0.0 && cfg.smooth_alpha <= 1.0, "invalid-smoothing",
          "smoothing scale must lie in (0, 1]");
  require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0,
          "invalid-argument", "Adam betas must lie in [0, 1)");
}

// Steps are 1-based. The ramp hits peak_lr exactly at step == warmup_steps;
// past that a half cosine decays toward final_lr at step == total_steps.
inline double lr_at(std::int64_t step, const TrainConfig& cfg) {
  if (step <= cfg.warmup_steps) {
    if (cfg.warmup_steps == 0) return cfg.peak_lr;
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  double prog = static_cast<double>(step - cfg.warmup_steps) /
                static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  prog = clamp(prog, 0.0, 1.0);
  return cfg.final_lr + (cfg.peak_lr - cfg.final_lr) * 0.5 * (1.0 + std::cos(prog * M_PI));
}

// Scale gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
template <class Params>
inline double clip_gradients(Params& grads, double max_norm) {
  double sq = 0.0;
  for (Vec* t : param_tensors(grads))
    for (double g : *t) sq += g * g;
  double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) fail_numerical("diverged", "non-finite gradient norm");
  if (norm > max_norm) {
    double scale = max_norm / norm;
    for (Vec* t : param_tensors(grads))
      for (double& g : *t) g *= scale;
  }
  return norm;
}

template <class Params>
struct TrainState {
  std::int64_t step = 0;
  Params params;
  Params m;    // first moment
  Params v;    // second moment
  Params ema;  // evaluation weights
};

template <class Params>
inline TrainState<Params> make_train_state(const Params& params) {
  TrainState<Params> st;
  st.params = params;
  st.m = zeros_like(params);
  st.v = zeros_like(params);
  st.ema = params;
  return st;
}

// One AdamW update with bias correction at t = state.step + 1, decoupled
// weight decay against the pre-update parameters, then the EMA refresh.
template <class Params>
inline void optimizer_step(TrainState<Params>& state, const Params& grads, double lr,
                           const TrainConfig& cfg) {
  const std::int64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  auto ps = param_tensors(state.params);
  auto ms = param_tensors(state.m);
  auto vs = param_tensors(state.v);
  auto gs = param_tensors(grads);
  for (std::size_t ti = 0; ti < ps.size(); ++ti) {
    Vec& p = *ps[ti];
    Vec& m = *ms[ti];
    Vec& v = *vs[ti];
    const Vec& g = *gs[ti];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * p[i]);
    }
  }
  state.step = t;
}

template <class Params>
inline void ema_update(Params& ema, const Params& params, double decay) {
  auto es = param_tensors(ema);
  auto ps = param_tensors(params);
  for (std::size_t ti = 0; ti < es.size(); ++ti) {
    Vec& e = *es[ti];
    const Vec& p = *ps[ti];
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = decay * e[i] + (1.0 - decay) * p[i];
  }
}

struct MetricRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  int ema_applied = 1;
};

// ---------------------------------------------------------------------------
// Full training runs
// ---------------------------------------------------------------------------

namespace detail {

struct TrainItem {
  TokenGrid tokens;       // codec tokens of the chunk
  Vec normed;             // normalized continuous chunk (baseline target)
  Vec features;           // conditioning features (state [+ task one-hot])
};

inline std::vector<TrainItem> build_items(const std::vector<Episode>& episodes,
                                          const QuantileCodec& codec, const ChunkLayout& layout,
                                          NormMode mode) {
  const int n_tasks = dataset_task_count(episodes);
  std::vector<TrainItem> items;
  for (const auto& ep : episodes) {
    validate_episode(ep);
    for (int t = 0; t < static_cast<int>(ep.actions.size()); ++t) {
      ActionChunk chunk = chunk_at(ep, layout, t);
      TrainItem item;
      item.tokens = tokenize(chunk, codec, mode);
      ActionChunk normed = normalize(chunk, codec, mode);
      item.normed = std::move(normed.values);
      // The baseline regresses in the codec's bounded coordinates; outliers
      // saturate the same way tokenization does.
      for (double& v : item.normed) v = clamp(v, -1.0, 1.0);
      item.features = ep.observations[static_cast<std::size_t>(t)];
      if (n_tasks > 1) {
        Vec onehot(static_cast<std::size_t>(n_tasks), 0.0);
        onehot[static_cast<std::size_t>(ep.task_id)] = 1.0;
        item.features.insert(item.features.end(), onehot.begin(), onehot.end());
      }
      items.push_back(std::move(item));
    }
  }
  require(!items.empty(), "invalid-argument", "dataset produced no training items");
  return items;
}

}  // namespace detail

struct DiscreteTrainResult {
  TrainState<DenoiserParams> state;
  std::vector<MetricRow> metrics;
};

struct BaselineTrainResult {
  TrainState<BaselineParams> state;
  std::vector<MetricRow> metrics;
};

inline DiscreteTrainResult train_discrete(const std::vector<Episode>& episodes,
                                          const QuantileCodec& codec, const ChunkLayout& layout,
                                          std::span<const int> hidden, const TrainConfig& cfg) {
  validate_train_config(cfg);
  validate_codec(codec);
  auto items = detail::build_items(episodes, codec, layout, cfg.norm_mode);
  const int obs_dim = static_cast<int>(items.front().features.size());

  Rng root(cfg.seed);
  Rng rng_init = root.derive("init");
  Rng rng_batch = root.derive("batch");
  Rng rng_tau = root.derive("tau");
  Rng rng_noise = root.derive("noise");

  DenoiserParams params = init_denoiser(layout, codec.bins, obs_dim, hidden, rng_init);
  auto state = make_train_state(params);
  DiscreteTrainResult result;
  result.metrics.reserve(static_cast<std::size_t>(cfg.total_steps));

  std::vector<DiscreteExample> batch(static_cast<std::size_t>(cfg.batch_size));
  DenoiserParams grad = zeros_like(params);
  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    for (auto& ex : batch) {
      const auto& item = items[rng_batch.uniform_index(items.size())];
      double tau = sample_tau(rng_tau, cfg.tau);
      ex.noisy = forward_noise(one_hot_smooth(item.tokens, cfg.smooth_alpha), tau, rng_noise);
      ex.cond = ConditioningCache{item.features, std::nullopt};
      ex.target = item.tokens;
    }
    double loss = backward_batch(state.params, batch, grad);
    if (!std::isfinite(loss))
      fail_numerical("diverged", "non-finite loss at step " + std::to_string(step));
    double gnorm = clip_gradients(grad, cfg.clip_norm);
    double lr = lr_at(step, cfg);
    optimizer_step(state, grad, lr, cfg);
    ema_update(state.ema, state.params, cfg.ema_decay);
    result.metrics.push_back({step, loss, lr, gnorm, 1});
  }
  result.state = std::move(state);
  return result;
}

inline BaselineTrainResult train_baseline(const std::vector<Episode>& episodes,
                                          const QuantileCodec& codec, const ChunkLayout& layout,
                                          std::span<const int> hidden, const TrainConfig& cfg) {
  validate_train_config(cfg);
  validate_codec(codec);
  auto items = detail::build_items(episodes, codec, layout, cfg.norm_mode);
  const int obs_dim = static_cast<int>(items.front().features.size());
  const int positions = layout.positions();

  Rng root(cfg.seed);
  Rng rng_init = root.derive("init");
  Rng rng_batch = root.derive("batch");
  Rng rng_tau = root.derive("tau");
  Rng rng_noise = root.derive("noise");

  BaselineParams params = init_baseline(layout, obs_dim, hidden, rng_init);
  auto state = make_train_state(params);
  BaselineTrainResult result;
  result.metrics.reserve(static_cast<std::size_t>(cfg.total_steps));

  std::vector<BaselineExample> batch(static_cast<std::size_t>(cfg.batch_size));
  BaselineParams grad = zeros_like(params);
  for (std::int64_t step = 1; step <= cfg.total_steps; ++step) {
    for (auto& ex : batch) {
      const auto& item = items[rng_batch.uniform_index(items.size())];
      double tau = sample_tau(rng_tau, cfg.tau);
      ex.tau = tau;
      ex.noisy.resize(static_cast<std::size_t>(positions));
      const double keep = 1.0 - tau;
      for (int i = 0; i < positions; ++i)
        ex.noisy[static_cast<std::size_t>(i)] =
            tau * item.normed[static_cast<std::size_t>(i)] + keep * rng_noise.normal();
      ex.cond = ConditioningCache{item.features, std::nullopt};
      ex.target = item.normed;
    }
    double loss = backward_batch_mse(state.params, batch, grad);
    if (!std::isfinite(loss))
      fail_numerical("diverged", "non-finite loss at step " + std::to_string(step));
    double gnorm = clip_gradients(grad, cfg.clip_norm);
    double lr = lr_at(step, cfg);
    optimizer_step(state, grad, lr, cfg);
    ema_update(state.ema, state.params, cfg.ema_decay);
    result.metrics.push_back({step, loss, lr, gnorm, 1});
  }
  result.state = std::move(state);
  return result;
}

}  // namespace qdd
