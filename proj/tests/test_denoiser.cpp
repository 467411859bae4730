#define QDD_TEST_USE_QUADMATH 1

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "oracles.hpp"
#include "qdd/denoiser.hpp"
#include "util.hpp"

using namespace qdd;
using testutil::error_code_of;

namespace {

constexpr std::array<int, 2> kSmallHidden = {16, 16};

DenoiserParams small_denoiser(std::uint64_t seed, int obs_dim = 3) {
  Rng rng(seed);
  return init_denoiser(ChunkLayout{2, 2}, 5, obs_dim, kSmallHidden, rng);
}

Observation plain_obs(int state_dim = 3) {
  Observation obs;
  obs.state.assign(static_cast<std::size_t>(state_dim), 0.25);
  return obs;
}

NoisyActionTensor random_noisy(const DenoiserParams& p, double tau, std::uint64_t seed) {
  Rng rng(seed);
  TokenGrid grid;
  grid.layout = p.layout;
  grid.bins = p.bins;
  grid.indices.resize(static_cast<std::size_t>(p.layout.positions()));
  for (int& k : grid.indices) k = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(p.bins)));
  return forward_noise(one_hot_smooth(grid, 0.1), tau, rng);
}

}  // namespace

TEST_CASE("initialization produces the documented shapes") {
  auto p = small_denoiser(1);
  const int width = 2 * 2 * 5;  // L * K

  REQUIRE(p.layers.size() == 3);
  CHECK(p.layers[0].in == width + 3 + 1);  // body + features + tau
  CHECK(p.layers[0].out == 16);
  CHECK(p.layers[1].in == 16);
  CHECK(p.layers[1].out == 16);
  CHECK(p.layers[2].in == 16);
  CHECK(p.layers[2].out == width);

  for (const auto& layer : p.layers) {
    double bound = std::sqrt(6.0 / (layer.in + layer.out));
    for (double w : layer.W) CHECK(std::abs(w) <= bound);
    for (double b : layer.b) CHECK(b == 0.0);
  }
  for (double w : p.rel.W) CHECK(w == 0.0);
  for (double b : p.rel.b) CHECK(b == 0.0);

  // Tensor enumeration covers every layer plus the embedding, shapes aligned.
  auto tensors = param_tensors(p);
  auto shapes = param_shapes(p);
  REQUIRE(tensors.size() == shapes.size());
  REQUIRE(tensors.size() == 8);  // 3 layers x (W, b) + rel W + rel b
  for (std::size_t i = 0; i < tensors.size(); ++i)
    CHECK(tensors[i]->size() ==
          static_cast<std::size_t>(shapes[i].first) * static_cast<std::size_t>(shapes[i].second));

  auto z = zeros_like(p);
  for (const Vec* t : param_tensors(z))
    for (double x : *t) CHECK(x == 0.0);

  Rng rng(2);
  CHECK(error_code_of([&] {
          init_denoiser(ChunkLayout{2, 2}, 1, 3, kSmallHidden, rng);
        }) == "invalid-argument");
  CHECK(error_code_of([&] {
          init_denoiser(ChunkLayout{2, 2}, 5, 0, kSmallHidden, rng);
        }) == "shape-mismatch");
}

TEST_CASE("zero parameters give zero logits") {
  auto p = zeros_like(small_denoiser(3));
  auto cond = condition_encode(plain_obs(), p);
  auto noisy = random_noisy(p, 0.3, 17);
  auto logits = forward_logits(p, noisy, cond);
  REQUIRE(logits.size() == static_cast<std::size_t>(p.layout.positions()) * p.bins);
  for (double l : logits) CHECK(l == 0.0);
}

TEST_CASE("logits at tau one ignore the noise realization") {
  auto p = small_denoiser(4);
  auto cond = condition_encode(plain_obs(), p);

  TokenGrid grid;
  grid.layout = p.layout;
  grid.bins = p.bins;
  grid.indices = {0, 2, 4, 1};
  auto clean = one_hot_smooth(grid, 0.1);

  Rng rng_a(100);
  Rng rng_b(200);
  auto za = forward_noise(clean, 1.0, rng_a);
  auto zb = forward_noise(clean, 1.0, rng_b);
  auto la = forward_logits(p, za, cond);
  auto lb = forward_logits(p, zb, cond);
  REQUIRE(la.size() == lb.size());
  for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i] == lb[i]);
}

TEST_CASE("input perturbations are bounded by the product of spectral norms") {
  auto p = small_denoiser(5);
  auto cond = condition_encode(plain_obs(), p);

  double bound = 1.0;
  for (const auto& layer : p.layers) bound *= oracle::spectral_norm(layer.W, layer.out, layer.in);

  Rng rng(31);
  auto noisy = random_noisy(p, 0.4, 77);
  auto base = forward_logits(p, noisy, cond);

  for (int probe = 0; probe < 20; ++probe) {
    double delta = rng.uniform(1e-4, 1e-1);
    std::size_t j = rng.uniform_index(noisy.data.size());
    auto bumped = noisy;
    bumped.data[j] += delta;
    auto out = forward_logits(p, bumped, cond);
    double diff = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      double d = out[i] - base[i];
      diff += d * d;
    }
    // tanh is 1-Lipschitz, so the bound is global, not a linearization.
    CHECK(std::sqrt(diff) <= bound * delta * (1.0 + 1e-9));
  }
}

TEST_CASE("conditioning is deterministic and shape-checked") {
  auto p = small_denoiser(6);
  auto obs = plain_obs();
  auto a = condition_encode(obs, p);
  auto b = condition_encode(obs, p);
  CHECK(a.features == b.features);
  CHECK_FALSE(a.offset.has_value());

  Observation bad = obs;
  bad.state.push_back(0.0);
  CHECK(error_code_of([&] { condition_encode(bad, p); }) == "shape-mismatch");

  bad = obs;
  bad.state[0] = std::nan("");
  CHECK(error_code_of([&] { condition_encode(bad, p); }) == "invalid-argument");
}

TEST_CASE("task ids append a one-hot block") {
  auto p = small_denoiser(7, 3 + 4);  // 3 state dims + 4 tasks
  CHECK(feature_width(3, 4) == 7);

  Observation obs;
  obs.state = {0.1, 0.2, 0.3};
  obs.task_id = 2;
  obs.n_tasks = 4;
  auto cond = condition_encode(obs, p);
  REQUIRE(cond.features.size() == 7);
  CHECK(cond.features[3] == 0.0);
  CHECK(cond.features[4] == 0.0);
  CHECK(cond.features[5] == 1.0);
  CHECK(cond.features[6] == 0.0);

  obs.task_id = 4;
  CHECK(error_code_of([&] { condition_encode(obs, p); }) == "invalid-argument");
  obs.task_id = -1;
  CHECK(error_code_of([&] { condition_encode(obs, p); }) == "invalid-argument");
}

TEST_CASE("images enter as an averaged grayscale patch") {
  CHECK(feature_width(2, 1, true) == 2 + kPatchDim);
  auto p = small_denoiser(8, 2 + kPatchDim);

  view::ImageF64 img;
  img.width = 32;
  img.height = 24;
  img.channels = 3;
  img.pixels.assign(static_cast<std::size_t>(32) * 24 * 3, 0.625);

  Observation obs;
  obs.state = {1.0, -1.0};
  obs.image = img;
  auto cond = condition_encode(obs, p);
  REQUIRE(cond.features.size() == static_cast<std::size_t>(2 + kPatchDim));
  for (int i = 0; i < kPatchDim; ++i)
    CHECK(cond.features[static_cast<std::size_t>(2 + i)] == Catch::Approx(0.625).margin(1e-12));
}

TEST_CASE("relative embedding is linear with the documented sign convention") {
  RelEmbed rel;
  rel.dim = 3;
  Rng rng(9);
  rel.W.resize(9);
  rel.b.resize(3);
  for (double& w : rel.W) w = rng.normal();
  for (double& b : rel.b) b = rng.normal();

  view::SphericalOffset off{0.2, -0.4, 0.15};
  auto e_fwd = rel_embed(off, rel);
  auto e_bwd = rel_embed(off.negated(), rel);
  REQUIRE(e_fwd.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(e_fwd[i] + e_bwd[i] == Catch::Approx(2.0 * rel.b[i]).margin(1e-12));

  // Hand-computed single row.
  RelEmbed tiny;
  tiny.dim = 1;
  tiny.W = {1.0, 2.0, 3.0};
  tiny.b = {0.5};
  auto e = rel_embed(std::array<double, 3>{1.0, 10.0, 100.0}, tiny);
  CHECK(e[0] == Catch::Approx(0.5 + 1.0 + 20.0 + 300.0).margin(1e-12));
}

TEST_CASE("zero-initialized embedding leaves conditioning untouched") {
  auto p = small_denoiser(10);  // rel is zero right after init
  auto obs = plain_obs();
  auto plain = condition_encode(obs, p);

  Observation with_offset = obs;
  with_offset.view_offset = view::SphericalOffset{0.3, 0.1, -0.2};
  auto shifted = condition_encode(with_offset, p);
  CHECK(shifted.features == plain.features);
  REQUIRE(shifted.offset.has_value());
  CHECK((*shifted.offset)[0] == 0.3);

  // Non-zero embedding with a zero offset is also a no-op on features.
  auto q = p;
  Rng rng(11);
  for (double& w : q.rel.W) w = rng.normal();
  Observation zero_offset = obs;
  zero_offset.view_offset = view::SphericalOffset{0.0, 0.0, 0.0};
  auto c = condition_encode(zero_offset, q);
  for (std::size_t i = 0; i < c.features.size(); ++i)
    CHECK(c.features[i] == Catch::Approx(plain.features[i] + q.rel.b[i]).margin(1e-15));
}

TEST_CASE("cached conditioning reproduces re-encoded inference bitwise") {
  auto p = small_denoiser(12);
  auto obs = plain_obs();

  auto cache = condition_encode(obs, p);
  Rng rng_a(404);
  auto cached_run = inference_loop(p, cache, 0.1, 8, rng_a);

  Rng rng_b(404);
  auto fresh_run = inference_loop(p, condition_encode(obs, p), 0.1, 8, rng_b);
  CHECK(cached_run.indices == fresh_run.indices);

  Rng rng_c(404);
  auto again = inference_loop(p, cache, 0.1, 8, rng_c);
  CHECK(again.indices == cached_run.indices);
}

TEST_CASE("softmax rows behave like probabilities") {
  ChunkLayout layout{1, 1};

  SECTION("uniform logits") {
    Vec logits(4, 0.0);
    auto probs = softmax_rows(logits, layout, 4);
    for (double v : probs) CHECK(v == Catch::Approx(0.25).margin(1e-15));
  }

  SECTION("extreme logits do not overflow") {
    Vec logits = {1000.0, 0.0, 0.0, 0.0};
    auto probs = softmax_rows(logits, layout, 4);
    CHECK(all_finite(probs));
    CHECK(probs[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(probs[1] == 0.0);  // exp(-1000) underflows cleanly
  }

  SECTION("rows sum to one and ignore constant shifts") {
    ChunkLayout big{3, 2};
    const int bins = 17;
    Rng rng(13);
    Vec logits(static_cast<std::size_t>(big.positions()) * bins);
    for (double& l : logits) l = rng.uniform(-5.0, 5.0);
    auto probs = softmax_rows(logits, big, bins);
    for (int pos = 0; pos < big.positions(); ++pos) {
      double sum = 0.0;
      for (int k = 0; k < bins; ++k) sum += probs[static_cast<std::size_t>(pos) * bins + k];
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }

    Vec shifted = logits;
    for (int k = 0; k < bins; ++k) shifted[static_cast<std::size_t>(0) * bins + k] += 123.456;
    auto probs2 = softmax_rows(shifted, big, bins);
    for (int k = 0; k < bins; ++k)
      CHECK(probs2[static_cast<std::size_t>(k)] ==
            Catch::Approx(probs[static_cast<std::size_t>(k)]).margin(1e-12));
  }

  SECTION("random rows match a 128-bit reference") {
    Rng rng(14);
    for (int trial = 0; trial < 50; ++trial) {
      const int bins = 12;
      std::vector<double> row(bins);
      for (double& l : row) l = rng.uniform(-30.0, 30.0);
      Vec logits(row.begin(), row.end());
      auto probs = softmax_rows(logits, ChunkLayout{1, 1}, bins);
      auto ref = oracle::softmax_quad(row);
      for (int k = 0; k < bins; ++k)
        CHECK(std::abs(probs[static_cast<std::size_t>(k)] - ref[static_cast<std::size_t>(k)]) <
              1e-14);
    }
  }
}

TEST_CASE("cross entropy against closed forms and a naive oracle") {
  ChunkLayout layout{2, 2};
  const int bins = 6;
  TokenGrid target;
  target.layout = layout;
  target.bins = bins;
  target.indices = {0, 3, 5, 2};

  SECTION("uniform logits give ln K") {
    Vec logits(static_cast<std::size_t>(layout.positions()) * bins, 0.0);
    CHECK(ce_loss(logits, target) == Catch::Approx(std::log(6.0)).margin(1e-12));
    for (int k : {2, 7, 64, 2048}) {
      TokenGrid t;
      t.layout = ChunkLayout{1, 1};
      t.bins = k;
      t.indices = {k / 2};
      Vec l(static_cast<std::size_t>(k), 0.0);
      CHECK(ce_loss(l, t) == Catch::Approx(std::log(static_cast<double>(k))).margin(1e-12));
    }
  }

  SECTION("saturated target logits give near-zero loss") {
    Vec logits(static_cast<std::size_t>(layout.positions()) * bins, 0.0);
    for (int pos = 0; pos < layout.positions(); ++pos)
      logits[static_cast<std::size_t>(pos) * bins + target.indices[static_cast<std::size_t>(pos)]] =
          30.0;
    CHECK(ce_loss(logits, target) < 1e-12);
  }

  SECTION("random logits agree with direct summation") {
    Rng rng(15);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> logits(static_cast<std::size_t>(layout.positions()) * bins);
      for (double& l : logits) l = rng.uniform(-10.0, 10.0);
      Vec lv(logits.begin(), logits.end());
      double mine = ce_loss(lv, target);
      double ref = oracle::naive_ce(logits, target.indices, bins);
      CHECK(std::abs(mine - ref) / std::abs(ref) < 1e-12);
    }
  }

  SECTION("invalid targets are rejected") {
    Vec logits(static_cast<std::size_t>(layout.positions()) * bins, 0.0);
    TokenGrid bad = target;
    bad.indices[1] = bins;
    CHECK(error_code_of([&] { ce_loss(logits, bad); }) == "invalid-token");
  }
}

TEST_CASE("mse loss basics") {
  Vec pred = {0.5, -0.5, 0.25};
  CHECK(mse_loss(pred, pred) == 0.0);

  // Best constant for targets {-c, +c} is 0, with residual c^2.
  const double c = 0.7;
  Vec zero = {0.0};
  Vec lo = {-c};
  Vec hi = {c};
  double avg = 0.5 * (mse_loss(zero, lo) + mse_loss(zero, hi));
  CHECK(avg == Catch::Approx(c * c).margin(1e-15));

  Vec shorter = {0.0, 0.0};
  CHECK(error_code_of([&] { mse_loss(pred, shorter); }) == "shape-mismatch");
}

TEST_CASE("single linear layer reproduces the closed-form CE gradient") {
  ChunkLayout layout{1, 2};
  const int bins = 4;
  const int obs_dim = 2;
  Rng rng(16);
  auto p = init_denoiser(layout, bins, obs_dim, std::span<const int>{}, rng);
  REQUIRE(p.layers.size() == 1);

  DiscreteExample ex;
  ex.noisy = random_noisy(p, 0.35, 55);
  Observation obs;
  obs.state = {0.4, -0.7};
  ex.cond = condition_encode(obs, p);
  ex.target.layout = layout;
  ex.target.bins = bins;
  ex.target.indices = {1, 3};

  DenoiserParams grad = zeros_like(p);
  std::vector<DiscreteExample> batch = {ex};
  double loss = backward_batch(p, batch, grad);
  CHECK(loss > 0.0);

  // Recompute (softmax - onehot)/L x input by hand.
  Vec input = ex.noisy.data;
  input.insert(input.end(), ex.cond.features.begin(), ex.cond.features.end());
  input.push_back(ex.noisy.tau);
  Vec logits = forward_logits(p, ex.noisy, ex.cond);
  Vec dout = softmax_rows(logits, layout, bins);
  for (int pos = 0; pos < layout.positions(); ++pos)
    dout[static_cast<std::size_t>(pos) * bins + ex.target.indices[static_cast<std::size_t>(pos)]] -=
        1.0;
  for (double& d : dout) d /= static_cast<double>(layout.positions());

  const Layer& layer = p.layers[0];
  for (int i = 0; i < layer.out; ++i) {
    CHECK(grad.layers[0].b[static_cast<std::size_t>(i)] == dout[static_cast<std::size_t>(i)]);
    for (int j = 0; j < layer.in; ++j)
      CHECK(grad.layers[0].W[static_cast<std::size_t>(i) * layer.in + j] ==
            dout[static_cast<std::size_t>(i)] * input[static_cast<std::size_t>(j)]);
  }
}

TEST_CASE("gradient vanishes when logits already saturate the targets") {
  ChunkLayout layout{2, 2};
  const int bins = 5;
  Rng rng(17);
  auto p = init_denoiser(layout, bins, 3, std::span<const int>{}, rng);
  p.layers[0].W.assign(p.layers[0].W.size(), 0.0);

  TokenGrid target;
  target.layout = layout;
  target.bins = bins;
  target.indices = {2, 0, 4, 1};
  for (int pos = 0; pos < layout.positions(); ++pos)
    p.layers[0].b[static_cast<std::size_t>(pos) * bins +
                  target.indices[static_cast<std::size_t>(pos)]] = 30.0;

  DiscreteExample ex;
  ex.noisy = random_noisy(p, 0.5, 66);
  ex.cond = condition_encode(plain_obs(), p);
  ex.target = target;

  DenoiserParams grad = zeros_like(p);
  std::vector<DiscreteExample> batch = {ex};
  double loss = backward_batch(p, batch, grad);
  CHECK(loss < 1e-12);

  double norm_sq = 0.0;
  for (const Vec* t : param_tensors(grad))
    for (double g : *t) norm_sq += g * g;
  CHECK(std::sqrt(norm_sq) < 1e-10);
}

namespace {

// Finite differences must see the offset embedding through live parameters,
// so the example stores the raw pieces and conditioning is rebuilt per loss
// evaluation instead of being cached.
struct RawDiscreteExample {
  NoisyActionTensor noisy;
  Observation obs;
  TokenGrid target;
};

double raw_batch_ce(const DenoiserParams& p, std::span<const RawDiscreteExample> batch) {
  double total = 0.0;
  for (const auto& ex : batch)
    total += ce_loss(forward_logits(p, ex.noisy, condition_encode(ex.obs, p)), ex.target);
  return total / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("analytic gradients match finite differences on every tensor") {
  ChunkLayout layout{2, 2};
  const int bins = 5;
  const int obs_dim = 3;
  Rng rng(18);
  auto p = init_denoiser(layout, bins, obs_dim, kSmallHidden, rng);
  Rng rel_rng = rng.derive("rel");
  for (double& w : p.rel.W) w = 0.05 * rel_rng.normal();
  for (double& b : p.rel.b) b = 0.05 * rel_rng.normal();

  Rng data_rng = rng.derive("data");
  std::vector<RawDiscreteExample> raw;
  std::vector<DiscreteExample> cooked;
  for (int e = 0; e < 4; ++e) {
    RawDiscreteExample ex;
    ex.target.layout = layout;
    ex.target.bins = bins;
    ex.target.indices.resize(static_cast<std::size_t>(layout.positions()));
    for (int& k : ex.target.indices)
      k = static_cast<int>(data_rng.uniform_index(static_cast<std::size_t>(bins)));
    ex.noisy = forward_noise(one_hot_smooth(ex.target, 0.1),
                             data_rng.uniform(0.05, 0.95), data_rng);
    ex.obs.state = {data_rng.normal(), data_rng.normal(), data_rng.normal()};
    if (e % 2 == 0) ex.obs.view_offset = view::SphericalOffset{0.05, 0.1, -0.08};
    raw.push_back(ex);
    cooked.push_back(DiscreteExample{ex.noisy, condition_encode(ex.obs, p), ex.target});
  }

  DenoiserParams grad = zeros_like(p);
  backward_batch(p, cooked, grad);

  Rng fd_rng = rng.derive("fd");
  auto report = finite_difference_check<DenoiserParams, RawDiscreteExample>(
      p, raw, 1e-6, 16, raw_batch_ce, grad, fd_rng);
  INFO("worst tensor " << report.worst_tensor << " index " << report.worst_index);
  CHECK(report.coords_checked >= 100);
  CHECK(report.max_rel_err < 1e-4);
}

namespace {

struct RawBaselineExample {
  Vec noisy;
  double tau = 0.0;
  Observation obs;
  Vec target;
};

double raw_batch_mse(const BaselineParams& p, std::span<const RawBaselineExample> batch) {
  double total = 0.0;
  for (const auto& ex : batch)
    total += mse_loss(forward_baseline(p, ex.noisy, condition_encode(ex.obs, p), ex.tau),
                      ex.target);
  return total / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("baseline gradients match finite differences too") {
  ChunkLayout layout{3, 1};
  const int obs_dim = 2;
  Rng rng(19);
  auto p = init_baseline(layout, obs_dim, kSmallHidden, rng);
  Rng rel_rng = rng.derive("rel");
  for (double& w : p.rel.W) w = 0.05 * rel_rng.normal();
  for (double& b : p.rel.b) b = 0.05 * rel_rng.normal();

  Rng data_rng = rng.derive("data");
  std::vector<RawBaselineExample> raw;
  std::vector<BaselineExample> cooked;
  for (int e = 0; e < 4; ++e) {
    RawBaselineExample ex;
    ex.noisy.resize(static_cast<std::size_t>(layout.positions()));
    ex.target.resize(static_cast<std::size_t>(layout.positions()));
    for (double& x : ex.noisy) x = data_rng.normal();
    for (double& x : ex.target) x = data_rng.uniform(-1.0, 1.0);
    ex.tau = data_rng.uniform(0.05, 0.95);
    ex.obs.state = {data_rng.normal(), data_rng.normal()};
    if (e % 2 == 1) ex.obs.view_offset = view::SphericalOffset{-0.02, 0.07, 0.11};
    raw.push_back(ex);
    cooked.push_back(
        BaselineExample{ex.noisy, ex.tau, condition_encode(ex.obs, p), ex.target});
  }

  BaselineParams grad = zeros_like(p);
  backward_batch_mse(p, cooked, grad);

  Rng fd_rng = rng.derive("fd");
  auto report = finite_difference_check<BaselineParams, RawBaselineExample>(
      p, raw, 1e-6, 20, raw_batch_mse, grad, fd_rng);
  INFO("worst tensor " << report.worst_tensor << " index " << report.worst_index);
  CHECK(report.coords_checked >= 100);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("batch gradient is the mean of per-example gradients") {
  ChunkLayout layout{1, 2};
  const int bins = 3;
  Rng rng(20);
  auto p = init_denoiser(layout, bins, 2, kSmallHidden, rng);

  std::vector<DiscreteExample> batch;
  for (int e = 0; e < 3; ++e) {
    DiscreteExample ex;
    ex.noisy = random_noisy(p, 0.4, 300 + static_cast<std::uint64_t>(e));
    Observation obs;
    obs.state = {0.1 * e, -0.2};
    ex.cond = condition_encode(obs, p);
    ex.target.layout = layout;
    ex.target.bins = bins;
    ex.target.indices = {e % bins, (e + 1) % bins};
    batch.push_back(ex);
  }

  DenoiserParams full = zeros_like(p);
  backward_batch(p, batch, full);

  DenoiserParams accum = zeros_like(p);
  for (const auto& ex : batch) {
    DenoiserParams one = zeros_like(p);
    std::vector<DiscreteExample> single = {ex};
    backward_batch(p, single, one);
    auto at = param_tensors(accum);
    auto ot = param_tensors(one);
    for (std::size_t t = 0; t < at.size(); ++t)
      for (std::size_t i = 0; i < at[t]->size(); ++i) (*at[t])[i] += (*ot[t])[i] / 3.0;
  }

  auto ft = param_tensors(full);
  auto at = param_tensors(accum);
  for (std::size_t t = 0; t < ft.size(); ++t)
    for (std::size_t i = 0; i < ft[t]->size(); ++i)
      CHECK((*ft[t])[i] == Catch::Approx((*at[t])[i]).margin(1e-14));

  std::vector<DiscreteExample> empty;
  DenoiserParams g = zeros_like(p);
  CHECK(error_code_of([&] { backward_batch(p, empty, g); }) == "invalid-argument");
}
