#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qdd/toybench.hpp"
#include "util.hpp"

using namespace qdd;
using namespace qdd::toy;
using testutil::error_code_of;

namespace {

// First expert step from the origin toward either goal: the displacement is
// the step cap along a 45-degree diagonal.
const double kFirstStep = 0.25 / std::sqrt(2.0);

// Codec whose bin centers land exactly on multiples of 0.125: the span
// (q_hi - q_lo) + 1e-6 is bitwise 2.0, so center k decodes to
// -1.0 + 0.125 k with no rounding residue.
QuantileCodec grid_aligned_codec(int dims) {
  QuantileCodec codec;
  codec.dims = dims;
  codec.bins = 16;
  codec.q_lo.assign(static_cast<std::size_t>(dims), -1.0625);
  codec.q_hi.assign(static_cast<std::size_t>(dims), -1.0625 + (2.0 - 1e-6));
  codec.mean.assign(static_cast<std::size_t>(dims), 0.0);
  codec.stdev.assign(static_cast<std::size_t>(dims), 1.0);
  return codec;
}

bool on_eighths_grid(double v) { return 0.125 * std::round(v / 0.125) == v; }

// Scripted reach expert in policy clothing: commits to the left goal and
// plans the whole chunk by simulating its own capped walk.
Policy reach_expert_policy() {
  ChunkLayout layout{8, 2};
  return [layout](const Observation& obs, Rng&) -> ActionChunk {
    ActionChunk chunk = make_chunk(layout);
    double px = obs.state[0], py = obs.state[1];
    for (int h = 0; h < layout.horizon; ++h) {
      double dx = kGoalAX - px, dy = kGoalAY - py;
      double dist = std::hypot(dx, dy);
      double scale = dist < 1e-12 ? 0.0 : std::min(0.25, dist) / dist;
      chunk.at(h, 0) = dx * scale;
      chunk.at(h, 1) = dy * scale;
      px += chunk.at(h, 0);
      py += chunk.at(h, 1);
    }
    return chunk;
  };
}

}  // namespace

TEST_CASE("environment names round trip") {
  for (auto kind :
       {EnvKind::two_goal_reach, EnvKind::precision_slot, EnvKind::quantized_actuator})
    CHECK(env_kind_from_string(to_string(kind)) == kind);
  CHECK(error_code_of([] { env_kind_from_string("lunar_lander"); }) == "invalid-argument");
}

TEST_CASE("environment construction") {
  auto reach = make_env(EnvKind::two_goal_reach);
  CHECK(reach.action_dim() == 2);
  CHECK(reach.obs_dim() == 2);
  CHECK(reach.max_steps == 20);

  auto slot = make_env(EnvKind::precision_slot);
  CHECK(slot.action_dim() == 1);
  CHECK(slot.max_steps == 4);

  auto quant = make_env(EnvKind::quantized_actuator);
  CHECK(quant.action_dim() == 1);
  CHECK(quant.max_steps == 3);
}

TEST_CASE("reset places the agent and hides the goal") {
  auto env = make_env(EnvKind::two_goal_reach);
  Rng rng(501);
  int left = 0;
  for (int i = 0; i < 1000; ++i) {
    auto st = env_reset(env, rng);
    REQUIRE(st.obs == Vec{0.0, 0.0});
    REQUIRE(st.hidden.size() == 2);
    bool is_a = st.hidden[0] == kGoalAX && st.hidden[1] == kGoalAY;
    bool is_b = st.hidden[0] == kGoalBX && st.hidden[1] == kGoalBY;
    REQUIRE((is_a || is_b));
    if (is_a) ++left;
    CHECK_FALSE(st.done);
    CHECK(st.steps == 0);
  }
  CHECK(std::abs(left / 1000.0 - 0.5) < 0.05);

  auto slot = make_env(EnvKind::precision_slot);
  for (int i = 0; i < 200; ++i) {
    auto st = env_reset(slot, rng);
    CHECK(st.obs[0] == 0.0);
    CHECK(st.obs[1] >= -1.0);
    CHECK(st.obs[1] <= 1.0);
    CHECK(st.hidden.empty());
  }
}

TEST_CASE("step dynamics per environment") {
  SECTION("reach caps the displacement and detects the goal") {
    auto env = make_env(EnvKind::two_goal_reach);
    EnvState st;
    st.obs = {0.0, 0.0};
    env_step(env, st, {1.0, 0.0});  // over the cap: scaled down to 0.25
    CHECK(st.obs[0] == Catch::Approx(0.25).margin(1e-15));
    CHECK(st.obs[1] == 0.0);
    CHECK(st.steps == 1);
    CHECK_FALSE(st.success);

    st.obs = {0.95, 1.0};  // a small step reaches goal B's radius
    env_step(env, st, {0.05, 0.0});
    CHECK(st.success);
    CHECK(st.done);

    int steps_before = st.steps;
    env_step(env, st, {0.1, 0.1});  // done: a no-op
    CHECK(st.steps == steps_before);

    EnvState bad;
    bad.obs = {0.0, 0.0};
    CHECK(error_code_of([&] { env_step(env, bad, {0.1}); }) == "shape-mismatch");
  }

  SECTION("precision slot compares against the target") {
    auto env = make_env(EnvKind::precision_slot);
    EnvState st;
    st.obs = {0.0, 0.4};
    env_step(env, st, {0.405});
    CHECK(st.success);  // |0.405 - 0.4| < 0.01
    st = EnvState{};
    st.obs = {0.0, 0.4};
    env_step(env, st, {0.42});
    CHECK_FALSE(st.success);
    CHECK(st.obs[0] == 0.42);
  }

  SECTION("quantized actuator snaps the command") {
    auto env = make_env(EnvKind::quantized_actuator);
    EnvState st;
    st.obs = {0.0, 0.26};
    env_step(env, st, {0.3});
    CHECK(st.obs[0] == 0.25);  // 0.3 snaps down to the nearest eighth
    CHECK(st.success);         // |0.25 - 0.26| <= 0.05
    st = EnvState{};
    st.obs = {0.0, -0.06};
    env_step(env, st, {-0.06});
    CHECK(st.obs[0] == 0.0);  // -0.06 is closer to 0 than to -0.125
    CHECK_FALSE(st.success);  // and the snap pushed it out of tolerance
  }

  SECTION("episodes terminate at the horizon") {
    auto env = make_env(EnvKind::precision_slot);
    EnvState st;
    st.obs = {0.0, 0.9};
    for (int i = 0; i < env.max_steps; ++i) env_step(env, st, {-0.9});
    CHECK(st.done);
    CHECK_FALSE(st.success);
    CHECK(st.steps == env.max_steps);
  }
}

TEST_CASE("scripted expert closed forms") {
  auto env = make_env(EnvKind::two_goal_reach);
  EnvState st;
  st.obs = {0.0, 0.0};
  st.hidden = {kGoalAX, kGoalAY};
  auto a = expert_action(env, st);
  CHECK(a[0] == Catch::Approx(-kFirstStep).margin(1e-15));
  CHECK(a[1] == Catch::Approx(kFirstStep).margin(1e-15));

  st.hidden = {kGoalBX, kGoalBY};
  a = expert_action(env, st);
  CHECK(a[0] == Catch::Approx(kFirstStep).margin(1e-15));
  CHECK(a[1] == Catch::Approx(kFirstStep).margin(1e-15));

  st.obs = {1.0, 0.9};  // closer than one step: move the exact remainder
  a = expert_action(env, st);
  CHECK(a[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(a[1] == Catch::Approx(0.1).margin(1e-15));

  st.obs = {kGoalBX, kGoalBY};
  a = expert_action(env, st);
  CHECK(a == Vec{0.0, 0.0});

  auto slot = make_env(EnvKind::precision_slot);
  EnvState ps;
  ps.obs = {0.3, -0.731};
  CHECK(expert_action(slot, ps) == Vec{-0.731});

  auto quant = make_env(EnvKind::quantized_actuator);
  EnvState qs;
  qs.obs = {0.0, 0.3};
  CHECK(expert_action(quant, qs) == Vec{0.25});
}

TEST_CASE("demo generation") {
  Rng rng(502);
  CHECK(error_code_of([&] {
          auto env = make_env(EnvKind::two_goal_reach);
          gen_demos(env, 0, rng);
        }) == "invalid-argument");

  SECTION("reach demos are bimodal and replay to success") {
    auto env = make_env(EnvKind::two_goal_reach);
    Rng root(503);
    auto demos = gen_demos(env, 1000, root);
    REQUIRE(demos.size() == 1000);
    int to_b = 0;
    for (std::size_t e = 0; e < demos.size(); ++e) {
      const auto& ep = demos[e];
      REQUIRE(ep.observations.size() == ep.actions.size());
      CHECK(ep.actions.size() == 6);  // sqrt(2) distance in capped steps
      double first_x = ep.actions[0][0];
      // Every demo starts at the origin, so the first step is exactly one of
      // the two mode values: bimodality with nothing in between.
      CHECK(std::abs(std::abs(first_x) - kFirstStep) < 1e-12);
      if (first_x > 0.0) ++to_b;
      for (const auto& act : ep.actions) REQUIRE(all_finite(act));
    }
    CHECK(std::abs(to_b / 1000.0 - 0.5) < 0.05);

    // Replaying a demo through the environment reaches the goal.
    for (std::size_t e = 0; e < 20; ++e) {
      Rng ep_rng = root.derive("episode", e);
      EnvState st = env_reset(env, ep_rng);
      for (const auto& act : demos[e].actions) env_step(env, st, act);
      CHECK(st.success);
    }
  }

  SECTION("precision demos hit the slot in one step") {
    auto env = make_env(EnvKind::precision_slot);
    Rng root(504);
    auto demos = gen_demos(env, 200, root);
    for (std::size_t e = 0; e < demos.size(); ++e) {
      REQUIRE(demos[e].actions.size() == 1);
      Rng ep_rng = root.derive("episode", e);
      EnvState st = env_reset(env, ep_rng);
      CHECK(demos[e].actions[0][0] == st.obs[1]);  // expert outputs the target
      env_step(env, st, demos[e].actions[0]);
      CHECK(st.success);
    }
  }

  SECTION("quantized demos lie exactly on the actuator grid") {
    auto env = make_env(EnvKind::quantized_actuator);
    Rng root(505);
    auto demos = gen_demos(env, 200, root);
    for (const auto& ep : demos)
      for (const auto& act : ep.actions) CHECK(on_eighths_grid(act[0]));
  }
}

TEST_CASE("rollout: the scripted expert solves reach every time") {
  auto env = make_env(EnvKind::two_goal_reach);
  Rng rng(506);
  std::vector<Vec> actions;
  auto report = rollout(env, reach_expert_policy(), 50, 4, rng, 1, &actions);
  CHECK(report.env == "two_goal_reach");
  CHECK(report.episodes == 50);
  CHECK(report.successes == 50);
  CHECK(report.success_rate == 1.0);
  CHECK(report.mean_steps_to_success == 6.0);
  CHECK(report.nonfinite_actions == 0);
  CHECK(actions.size() == 300);  // six executed steps per episode
}

TEST_CASE("rollout: a random policy almost never lands in the slot") {
  auto env = make_env(EnvKind::precision_slot);
  Rng rng(507);
  auto report = rollout(env, make_random_policy(ChunkLayout{8, 1}), 500, 4, rng);
  CHECK(report.success_rate < 0.05);
}

TEST_CASE("rollout flags non-finite actions as failures") {
  auto env = make_env(EnvKind::precision_slot);
  Policy broken = [](const Observation&, Rng&) -> ActionChunk {
    ActionChunk chunk = make_chunk(ChunkLayout{8, 1});
    chunk.values[0] = std::nan("");
    return chunk;
  };
  Rng rng(508);
  auto report = rollout(env, broken, 20, 4, rng);
  CHECK(report.successes == 0);
  CHECK(report.nonfinite_actions == 20);
}

TEST_CASE("rollout validation") {
  auto env = make_env(EnvKind::two_goal_reach);
  Rng rng(509);
  auto policy = reach_expert_policy();
  CHECK(error_code_of([&] { rollout(env, policy, 0, 4, rng); }) == "invalid-argument");
  CHECK(error_code_of([&] { rollout(env, policy, 5, 0, rng); }) == "invalid-argument");
  CHECK(error_code_of([&] { rollout(env, policy, 5, 9, rng); }) == "invalid-argument");

  auto slot = make_env(EnvKind::precision_slot);
  CHECK(error_code_of([&] { rollout(slot, policy, 5, 4, rng); }) == "shape-mismatch");
}

TEST_CASE("rollout is deterministic and thread-count independent") {
  auto env = make_env(EnvKind::two_goal_reach);
  auto policy = make_random_policy(ChunkLayout{8, 2});

  std::vector<Vec> a1, a2, a4;
  Rng r1(510);
  auto rep1 = rollout(env, policy, 40, 4, r1, 1, &a1);
  Rng r2(510);
  auto rep2 = rollout(env, policy, 40, 4, r2, 1, &a2);
  Rng r4(510);
  auto rep4 = rollout(env, policy, 40, 4, r4, 4, &a4);

  CHECK(rep1.successes == rep2.successes);
  CHECK(rep1.mean_steps_to_success == rep2.mean_steps_to_success);
  CHECK(a1 == a2);
  CHECK(rep1.successes == rep4.successes);
  CHECK(a1 == a4);  // per-episode derived streams, episode order preserved

  Rng r5(511);
  auto rep5 = rollout(env, policy, 40, 4, r5);
  CHECK(rep1.successes != rep5.successes);  // different seed actually moves
}

TEST_CASE("discrete policies emit only bin-center actions") {
  auto env = make_env(EnvKind::two_goal_reach);
  auto codec = grid_aligned_codec(2);
  Rng init_rng(512);
  auto params = init_denoiser(ChunkLayout{8, 2}, codec.bins, env.obs_dim(),
                              std::array<int, 1>{16}, init_rng);
  DecodeOptions opts;
  opts.steps = 3;
  auto policy = make_discrete_policy(params, codec, opts);

  Rng rng(513);
  std::vector<Vec> actions;
  auto report = rollout(env, policy, 5, 4, rng, 1, &actions);
  CHECK(report.success_rate >= 0.0);
  CHECK(report.success_rate <= 1.0);
  REQUIRE(!actions.empty());
  for (const auto& act : actions)
    for (double v : act) {
      CHECK(on_eighths_grid(v));  // exact lattice membership by construction
      CHECK(v >= -1.0);
      CHECK(v <= 0.875);
    }
}

TEST_CASE("on-grid commands execute verbatim, continuous commands do not") {
  auto env = make_env(EnvKind::quantized_actuator);
  auto codec = grid_aligned_codec(1);
  Rng init_rng(514);

  auto discrete = make_discrete_policy(
      init_denoiser(ChunkLayout{8, 1}, codec.bins, env.obs_dim(), std::array<int, 1>{16},
                    init_rng),
      codec, DecodeOptions{3, 0.1, NormMode::quantile});
  Rng rng(515);
  std::vector<Vec> commanded;
  rollout(env, discrete, 30, 2, rng, 1, &commanded);
  REQUIRE(!commanded.empty());
  for (const auto& act : commanded) {
    double executed = env.actuator_grid * std::round(act[0] / env.actuator_grid);
    CHECK(executed == act[0]);  // bitwise: the plant changes nothing
  }

  auto baseline = make_baseline_policy(
      init_baseline(ChunkLayout{8, 1}, env.obs_dim(), std::array<int, 1>{16}, init_rng), codec,
      DecodeOptions{3, 0.1, NormMode::quantile});
  Rng rng2(516);
  std::vector<Vec> continuous;
  rollout(env, baseline, 30, 2, rng2, 1, &continuous);
  REQUIRE(!continuous.empty());
  int off_grid = 0;
  for (const auto& act : continuous) {
    double executed = env.actuator_grid * std::round(act[0] / env.actuator_grid);
    CHECK(std::abs(executed - act[0]) <= 0.5 * env.actuator_grid + 1e-15);
    if (executed != act[0]) ++off_grid;
  }
  CHECK(off_grid * 2 > static_cast<int>(continuous.size()));
}
