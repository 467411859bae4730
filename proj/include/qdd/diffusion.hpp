#pragma once

// Continuized discrete diffusion over token one-hots.
//
// Forward process: given a scaled one-hot stack A and noise level tau in
// [0, 1], the noisy tensor is tau * A + (1 - tau) * eps with eps standard
// normal per entry. tau = 0 is pure noise, tau = 1 reproduces A exactly.
//
// Decoding starts from pure noise and alternates denoiser argmax with
// re-noising along a rising tau grid; the callback owns the actual network
// so this header stays independent of any particular model.

#include <cstddef>
#include <functional>
#include <span>

#include "qdd/codec.hpp"
#include "qdd/common.hpp"

namespace qdd {

struct NoisyActionTensor {
  ChunkLayout layout;
  int bins = 0;
  double tau = 0.0;
  Vec data;  // positions() * bins, position-major
};

// Noise level law. Training draws tau from Beta(a, b); inference walks an
// explicit ascending grid whose last entry is 1 (the clean end of the
// bridge, reached only as a renoise target, never as a read level).
struct TauSchedule {
  enum class Kind { beta, grid };
  Kind kind = Kind::beta;
  double a = 1.0;  // beta only
  double b = 1.5;
  Vec taus;  // grid only: strictly ascending within [0, 1], back() == 1
};

inline TauSchedule beta_schedule(double a = 1.0, double b = 1.5) {
  TauSchedule sched;
  sched.kind = TauSchedule::Kind::beta;
  sched.a = a;
  sched.b = b;
  return sched;
}

// Uniform inference grid {1/N, 2/N, ..., 1}. The final entry is exactly 1.0
// (N/N divides to 1 with no rounding).
inline TauSchedule uniform_tau_grid(int steps) {
  require(steps >= 1, "invalid-argument", "decoding needs at least one step");
  TauSchedule sched;
  sched.kind = TauSchedule::Kind::grid;
  sched.taus.resize(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i)
    sched.taus[static_cast<std::size_t>(i)] =
        static_cast<double>(i + 1) / static_cast<double>(steps);
  return sched;
}

inline void validate_schedule(const TauSchedule& sched) {
  if (sched.kind == TauSchedule::Kind::beta) {
    require(sched.a > 0.0 && sched.b > 0.0, "invalid-argument",
            "tau schedule needs positive Beta parameters");
    return;
  }
  require(!sched.taus.empty(), "invalid-argument", "tau grid must not be empty");
  double prev = 0.0;
  for (std::size_t i = 0; i < sched.taus.size(); ++i) {
    double t = sched.taus[i];
    require(t > 0.0 && t <= 1.0, "degenerate-tau", "grid tau outside (0, 1]");
    require(i == 0 || t > prev, "invalid-argument", "tau grid must be strictly ascending");
    prev = t;
  }
  require(sched.taus.back() == 1.0, "invalid-argument", "tau grid must end at exactly 1");
}

inline double sample_tau(Rng& rng, const TauSchedule& sched = {}) {
  require(sched.kind == TauSchedule::Kind::beta, "invalid-argument",
          "tau sampling needs a Beta schedule");
  validate_schedule(sched);
  return rng.beta(sched.a, sched.b);
}

inline void validate_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    fail("degenerate-tau", "noise level " + std::to_string(tau) + " outside [0, 1]");
}

// Interpolate toward caller-supplied noise; exposed so tests can pin eps.
inline NoisyActionTensor forward_noise_with(const OneHotTensor& clean, double tau,
                                            std::span<const double> eps) {
  validate_tau(tau);
  require(eps.size() == clean.data.size(), "shape-mismatch",
          "noise tensor does not match one-hot stack");
  NoisyActionTensor out;
  out.layout = clean.layout;
  out.bins = clean.bins;
  out.tau = tau;
  out.data.resize(clean.data.size());
  const double keep = 1.0 - tau;
  for (std::size_t i = 0; i < clean.data.size(); ++i)
    out.data[i] = tau * clean.data[i] + keep * eps[i];
  return out;
}

inline NoisyActionTensor forward_noise(const OneHotTensor& clean, double tau, Rng& rng) {
  Vec eps(clean.data.size());
  for (double& e : eps) e = rng.normal();
  return forward_noise_with(clean, tau, eps);
}

inline NoisyActionTensor pure_noise(const ChunkLayout& layout, int bins, Rng& rng) {
  validate_layout(layout);
  require(bins >= 2, "invalid-argument", "need at least 2 bins");
  NoisyActionTensor out;
  out.layout = layout;
  out.bins = bins;
  out.tau = 0.0;
  out.data.resize(static_cast<std::size_t>(layout.positions()) * bins);
  for (double& x : out.data) x = rng.normal();
  return out;
}

// Per-position argmax over K logits; ties break toward the lower index.
inline TokenGrid argmax_tokens(const Vec& logits, const ChunkLayout& layout, int bins) {
  require(logits.size() == static_cast<std::size_t>(layout.positions()) * bins, "shape-mismatch",
          "logit tensor does not match layout");
  TokenGrid grid;
  grid.layout = layout;
  grid.bins = bins;
  grid.indices.resize(static_cast<std::size_t>(layout.positions()));
  for (int pos = 0; pos < layout.positions(); ++pos) {
    const double* row = logits.data() + static_cast<std::size_t>(pos) * bins;
    int best = 0;
    for (int k = 1; k < bins; ++k)
      if (row[k] > row[best]) best = k;
    grid.indices[static_cast<std::size_t>(pos)] = best;
  }
  return grid;
}

using LogitsFn = std::function<Vec(const NoisyActionTensor&)>;

// One decoded-token snapshot per iteration plus the tau each read happened
// at, for asserting the walk's monotone denoising.
struct DecodeTrace {
  Vec read_taus;
  std::vector<TokenGrid> tokens;
};

// Iterative decode along a renoise grid of N entries ending at 1. Iteration
// 1 reads pure noise (tau = 0); iteration i > 1 reads the previous commit
// renoised at grid tau_{i-1}. Every iteration commits to the argmax tokens
// and, unless it is the last, renoises their one-hot stack with fresh eps.
// The final grid entry (tau = 1) is never used: the last read happens at
// tau_{N-1} and the loop returns its argmax. N = 1 degenerates to a single
// argmax read off pure noise.
inline TokenGrid decode_tokens(const ChunkLayout& layout, int bins, double alpha,
                               const TauSchedule& grid, const LogitsFn& logits_fn, Rng& rng,
                               DecodeTrace* trace = nullptr) {
  require(grid.kind == TauSchedule::Kind::grid, "invalid-argument",
          "decoding needs a grid schedule");
  validate_schedule(grid);
  const int steps = static_cast<int>(grid.taus.size());
  NoisyActionTensor z = pure_noise(layout, bins, rng);
  TokenGrid tokens;
  for (int i = 0; i < steps; ++i) {
    Vec logits = logits_fn(z);
    if (!all_finite(logits)) fail_numerical("diverged", "non-finite logits during decoding");
    tokens = argmax_tokens(logits, layout, bins);
    if (trace) {
      trace->read_taus.push_back(z.tau);
      trace->tokens.push_back(tokens);
    }
    if (i + 1 == steps) break;
    z = forward_noise(one_hot_smooth(tokens, alpha), grid.taus[static_cast<std::size_t>(i)], rng);
  }
  return tokens;
}

inline TokenGrid decode_tokens(const ChunkLayout& layout, int bins, double alpha, int steps,
                               const LogitsFn& logits_fn, Rng& rng,
                               DecodeTrace* trace = nullptr) {
  return decode_tokens(layout, bins, alpha, uniform_tau_grid(steps), logits_fn, rng, trace);
}

// Continuous-space analogue used by the regression baseline: same bridge,
// but the state is the normalized action vector itself and each iteration
// commits to the raw prediction instead of a token argmax.
using PredictFn = std::function<Vec(const Vec& noisy, double tau)>;

inline Vec decode_continuous(int length, int steps, const PredictFn& predict_fn, Rng& rng) {
  require(length > 0, "shape-mismatch", "decoding needs a positive action length");
  TauSchedule grid = uniform_tau_grid(steps);
  Vec z(static_cast<std::size_t>(length));
  for (double& x : z) x = rng.normal();
  double tau = 0.0;
  Vec pred;
  for (int i = 0; i < steps; ++i) {
    pred = predict_fn(z, tau);
    require(pred.size() == static_cast<std::size_t>(length), "shape-mismatch",
            "prediction length does not match action length");
    if (!all_finite(pred)) fail_numerical("diverged", "non-finite prediction during decoding");
    if (i + 1 == steps) break;
    tau = grid.taus[static_cast<std::size_t>(i)];
    const double keep = 1.0 - tau;
    for (std::size_t j = 0; j < z.size(); ++j)
      z[j] = tau * clamp(pred[j], -1.0, 1.0) + keep * rng.normal();
  }
  for (double& x : pred) x = clamp(x, -1.0, 1.0);
  return pred;
}

}  // namespace qdd
