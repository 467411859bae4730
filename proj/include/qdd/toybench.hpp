#pragma once

// Synthetic control tasks for studying action tokenization:
//
//   two_goal_reach      2-D point mass, two interchangeable goals. Demos
//                       split between them, so the first action is bimodal
//                       and mode averaging walks into the gap.
//   precision_slot      1-D servo that must land inside a narrow slot
//                       around a continuous target: success hinges on
//                       decode resolution.
//   quantized_actuator  1-D servo whose actuator snaps commands to a fixed
//                       grid; separates commanded from executed actions.
//
// Plus the rollout/evaluation harness shared by all policies.

#include <cstdint>
#include <functional>
#include <string>

#include "qdd/codec.hpp"
#include "qdd/common.hpp"
#include "qdd/dataset.hpp"
#include "qdd/denoiser.hpp"
#include "qdd/diffusion.hpp"

namespace qdd::toy {

enum class EnvKind { two_goal_reach, precision_slot, quantized_actuator };

inline std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::two_goal_reach: return "two_goal_reach";
    case EnvKind::precision_slot: return "precision_slot";
    default: return "quantized_actuator";
  }
}

inline EnvKind env_kind_from_string(const std::string& s) {
  if (s == "two_goal_reach") return EnvKind::two_goal_reach;
  if (s == "precision_slot") return EnvKind::precision_slot;
  if (s == "quantized_actuator") return EnvKind::quantized_actuator;
  fail("invalid-argument", "unknown environment '" + s + "'");
}

struct ToyEnv {
  EnvKind kind = EnvKind::two_goal_reach;
  int max_steps = 20;

  // two_goal_reach
  double goal_radius = 0.1;
  double step_cap = 0.25;  // per-step displacement limit

  // precision_slot
  double slot_halfwidth = 0.01;

  // quantized_actuator
  double actuator_grid = 0.125;
  double tolerance = 0.05;

  int action_dim() const { return kind == EnvKind::two_goal_reach ? 2 : 1; }
  int obs_dim() const { return 2; }  // position pair or [position, target]
};

inline ToyEnv make_env(EnvKind kind) {
  ToyEnv env;
  env.kind = kind;
  switch (kind) {
    case EnvKind::two_goal_reach:
      env.max_steps = 20;
      break;
    case EnvKind::precision_slot:
      env.max_steps = 4;
      break;
    case EnvKind::quantized_actuator:
      env.max_steps = 3;
      break;
  }
  return env;
}

inline constexpr double kGoalAX = -1.0, kGoalAY = 1.0;
inline constexpr double kGoalBX = 1.0, kGoalBY = 1.0;

struct EnvState {
  Vec obs;     // visible state
  Vec hidden;  // expert-only context (chosen goal)
  int steps = 0;
  bool done = false;
  bool success = false;
};

inline EnvState env_reset(const ToyEnv& env, Rng& rng) {
  EnvState st;
  switch (env.kind) {
    case EnvKind::two_goal_reach: {
      st.obs = {0.0, 0.0};
      bool left = rng.uniform() < 0.5;
      st.hidden = {left ? kGoalAX : kGoalBX, left ? kGoalAY : kGoalBY};
      break;
    }
    case EnvKind::precision_slot:
    case EnvKind::quantized_actuator: {
      double target = rng.uniform(-1.0, 1.0);
      st.obs = {0.0, target};
      break;
    }
  }
  return st;
}

namespace detail {

inline bool near_either_goal(double x, double y, double radius) {
  double da = std::hypot(x - kGoalAX, y - kGoalAY);
  double db = std::hypot(x - kGoalBX, y - kGoalBY);
  return std::min(da, db) <= radius;
}

}  // namespace detail

// Advance one step. Non-finite actions are rejected by the caller; here the
// dynamics are total.
inline void env_step(const ToyEnv& env, EnvState& st, const Vec& action) {
  require(static_cast<int>(action.size()) == env.action_dim(), "shape-mismatch",
          "action dim does not match environment");
  if (st.done) return;
  switch (env.kind) {
    case EnvKind::two_goal_reach: {
      double ax = action[0], ay = action[1];
      double norm = std::hypot(ax, ay);
      if (norm > env.step_cap) {
        ax *= env.step_cap / norm;
        ay *= env.step_cap / norm;
      }
      st.obs[0] += ax;
      st.obs[1] += ay;
      if (detail::near_either_goal(st.obs[0], st.obs[1], env.goal_radius)) st.success = true;
      break;
    }
    case EnvKind::precision_slot: {
      st.obs[0] = action[0];
      if (std::abs(st.obs[0] - st.obs[1]) <= env.slot_halfwidth) st.success = true;
      break;
    }
    case EnvKind::quantized_actuator: {
      double executed = env.actuator_grid * std::round(action[0] / env.actuator_grid);
      st.obs[0] = executed;
      if (std::abs(st.obs[0] - st.obs[1]) <= env.tolerance) st.success = true;
      break;
    }
  }
  ++st.steps;
  if (st.success || st.steps >= env.max_steps) st.done = true;
}

// Scripted expert. For two_goal_reach it walks straight at the goal chosen
// at reset; the other tasks output the target directly (grid-snapped for
// the quantized actuator so demos match what the plant can execute).
inline Vec expert_action(const ToyEnv& env, const EnvState& st) {
  switch (env.kind) {
    case EnvKind::two_goal_reach: {
      double dx = st.hidden[0] - st.obs[0];
      double dy = st.hidden[1] - st.obs[1];
      double dist = std::hypot(dx, dy);
      if (dist < 1e-12) return {0.0, 0.0};
      double scale = std::min(env.step_cap, dist) / dist;
      return {dx * scale, dy * scale};
    }
    case EnvKind::precision_slot:
      return {st.obs[1]};
    default:
      return {env.actuator_grid * std::round(st.obs[1] / env.actuator_grid)};
  }
}

inline std::vector<Episode> gen_demos(const ToyEnv& env, int episodes, Rng& rng) {
  require(episodes >= 1, "invalid-argument", "need at least one episode");
  std::vector<Episode> out(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    Rng ep_rng = rng.derive("episode", static_cast<std::uint64_t>(e));
    EnvState st = env_reset(env, ep_rng);
    Episode& ep = out[static_cast<std::size_t>(e)];
    while (!st.done) {
      Vec a = expert_action(env, st);
      ep.observations.push_back(st.obs);
      ep.actions.push_back(a);
      env_step(env, st, a);
    }
    require(!ep.actions.empty(), "invalid-argument", "expert produced an empty episode");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rollout
// ---------------------------------------------------------------------------

// A policy maps the current observation to an action chunk; the Rng is the
// episode's own stream so episodes stay independent of evaluation order.
using Policy = std::function<ActionChunk(const Observation&, Rng&)>;

struct RolloutReport {
  std::string env;
  int episodes = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_steps_to_success = 0.0;  // over successful episodes; 0 when none
  int nonfinite_actions = 0;
  std::uint64_t seed = 0;
};

inline RolloutReport rollout(const ToyEnv& env, const Policy& policy, int episodes, int execute_h,
                             Rng& rng, int threads = 1,
                             std::vector<Vec>* emitted_actions = nullptr) {
  require(episodes >= 1, "invalid-argument", "need at least one episode");
  require(execute_h >= 1, "invalid-argument", "must execute at least one action per chunk");

  struct EpisodeResult {
    bool success = false;
    int steps = 0;
    int nonfinite = 0;
    std::vector<Vec> actions;
  };
  std::vector<EpisodeResult> results(static_cast<std::size_t>(episodes));
  const bool collect = emitted_actions != nullptr;

  parallel_for(static_cast<std::size_t>(episodes), threads, [&](std::size_t e) {
    Rng ep_rng = rng.derive("rollout-episode", e);
    EnvState st = env_reset(env, ep_rng);
    EpisodeResult& res = results[e];
    while (!st.done) {
      Observation obs;
      obs.state = st.obs;
      ActionChunk chunk = policy(obs, ep_rng);
      require(chunk.layout.action_dim == env.action_dim(), "shape-mismatch",
              "policy action dim does not match environment");
      require(execute_h <= chunk.layout.horizon, "invalid-argument",
              "cannot execute more steps than the chunk holds");
      for (int h = 0; h < execute_h && !st.done; ++h) {
        Vec a(static_cast<std::size_t>(env.action_dim()));
        bool finite = true;
        for (int d = 0; d < env.action_dim(); ++d) {
          a[static_cast<std::size_t>(d)] = chunk.at(h, d);
          finite = finite && std::isfinite(a[static_cast<std::size_t>(d)]);
        }
        if (!finite) {
          ++res.nonfinite;
          st.done = true;
          break;
        }
        if (collect) res.actions.push_back(a);
        env_step(env, st, a);
      }
    }
    res.success = st.success;
    res.steps = st.steps;
  });

  RolloutReport report;
  report.env = to_string(env.kind);
  report.episodes = episodes;
  report.seed = rng.key();
  double step_sum = 0.0;
  for (auto& res : results) {
    if (res.success) {
      ++report.successes;
      step_sum += static_cast<double>(res.steps);
    }
    report.nonfinite_actions += res.nonfinite;
    if (collect)
      for (auto& a : res.actions) emitted_actions->push_back(std::move(a));
  }
  report.success_rate = static_cast<double>(report.successes) / static_cast<double>(episodes);
  if (report.successes > 0) report.mean_steps_to_success = step_sum / report.successes;
  return report;
}

// ---------------------------------------------------------------------------
// Policy constructors
// ---------------------------------------------------------------------------

struct DecodeOptions {
  int steps = 10;
  double smooth_alpha = 0.1;
  NormMode norm_mode = NormMode::quantile;
};

inline Policy make_discrete_policy(DenoiserParams params, QuantileCodec codec,
                                   DecodeOptions opts = {}) {
  validate_codec(codec);
  return [params = std::move(params), codec = std::move(codec), opts](
             const Observation& obs, Rng& rng) -> ActionChunk {
    ConditioningCache cond = condition_encode(obs, params);
    TokenGrid tokens = inference_loop(params, cond, opts.smooth_alpha, opts.steps, rng);
    return detokenize(tokens, codec, opts.norm_mode);
  };
}

inline Policy make_baseline_policy(BaselineParams params, QuantileCodec codec,
                                   DecodeOptions opts = {}) {
  validate_codec(codec);
  return [params = std::move(params), codec = std::move(codec), opts](
             const Observation& obs, Rng& rng) -> ActionChunk {
    ConditioningCache cond = condition_encode(obs, params);
    PredictFn predict_fn = [&](const Vec& noisy, double tau) {
      return forward_baseline(params, noisy, cond, tau);
    };
    Vec normed = decode_continuous(params.layout.positions(), opts.steps, predict_fn, rng);
    ActionChunk chunk;
    chunk.layout = params.layout;
    chunk.values = std::move(normed);
    return denormalize(chunk, codec, opts.norm_mode);
  };
}

// Uniform noise over [-1, 1] per action entry: the floor any trained policy
// has to clear.
inline Policy make_random_policy(const ChunkLayout& layout) {
  return [layout](const Observation&, Rng& rng) -> ActionChunk {
    ActionChunk chunk = make_chunk(layout);
    for (double& v : chunk.values) v = rng.uniform(-1.0, 1.0);
    return chunk;
  };
}

}  // namespace qdd::toy
