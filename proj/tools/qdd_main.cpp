// Command-line front end: demo generation, codec fitting, training, rollout
// evaluation, policy comparison, support-lemma verification, gradient
// checking and image warping, all behind one binary.
//
// Exit codes: 0 success, 1 usage/validation error, 2 numerical failure.
// Every command echoes its resolved configuration to stderr and takes all
// randomness from --seed.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qdd/config.hpp"
#include "qdd/io.hpp"
#include "qdd/oracle.hpp"
#include "qdd/toybench.hpp"

namespace {

constexpr double kDegToRad = 0.017453292519943295;

struct CommonArgs {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string config_path;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_config = true) {
  cmd->add_option("--seed", args.seed, "root random seed")->capture_default_str();
  cmd->add_option("--threads", args.threads, "worker thread cap")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  if (with_config)
    cmd->add_option("--config", args.config_path, "config file (section.key = value lines)");
}

// Bindings assembled per command; file values fill flags the user left at
// their defaults, then the merged result is echoed.
class ConfigSet {
 public:
  void bind_double(const std::string& key, CLI::Option* opt, double& slot) {
    bindings_.push_back({key, [opt] { return opt && opt->count() > 0; },
                         [&slot](const std::string& v) { slot = qdd::config_double(v); },
                         [&slot] {
                           char buf[64];
                           std::snprintf(buf, sizeof(buf), "%.17g", slot);
                           return std::string(buf);
                         }});
  }
  template <class Int>
  void bind_int(const std::string& key, CLI::Option* opt, Int& slot) {
    bindings_.push_back({key, [opt] { return opt && opt->count() > 0; },
                         [&slot](const std::string& v) { slot = static_cast<Int>(qdd::config_int(v)); },
                         [&slot] { return std::to_string(slot); }});
  }
  void bind_u64(const std::string& key, CLI::Option* opt, std::uint64_t& slot) {
    bindings_.push_back({key, [opt] { return opt && opt->count() > 0; },
                         [&slot](const std::string& v) { slot = qdd::config_u64(v); },
                         [&slot] { return std::to_string(slot); }});
  }
  void bind_string(const std::string& key, CLI::Option* opt, std::string& slot) {
    bindings_.push_back({key, [opt] { return opt && opt->count() > 0; },
                         [&slot](const std::string& v) { slot = v; },
                         [&slot] { return slot; }});
  }

  void merge_and_echo(const std::string& command, const std::string& config_path) {
    if (!config_path.empty()) {
      auto entries =
          qdd::parse_config_text(qdd::io::read_text_file(config_path), config_path);
      qdd::apply_config_entries(entries, bindings_, config_path);
    }
    std::cerr << "# resolved config [" << command << "]\n";
    for (const auto& b : bindings_) std::cerr << "#   " << b.key << " = " << b.render() << "\n";
  }

 private:
  std::vector<qdd::ConfigBinding> bindings_;
};

// Environment construction shared by gen-demos and rollout: a kind flag
// plus per-parameter overrides under the "env." config section.
struct EnvArgs {
  std::string kind = "two_goal_reach";
  qdd::toy::ToyEnv env;  // parameter slots; kind applied after merge
  CLI::Option* kind_opt = nullptr;
  CLI::Option* max_steps_opt = nullptr;
};

void add_env_flags(CLI::App* cmd, EnvArgs& args) {
  args.kind_opt = cmd->add_option("--env", args.kind,
                                  "two_goal_reach | precision_slot | quantized_actuator")
                      ->capture_default_str();
  args.max_steps_opt =
      cmd->add_option("--max-steps", args.env.max_steps, "episode step limit (0 = env default)")
          ->default_str("env default");
}

void bind_env(ConfigSet& set, CLI::App* cmd, EnvArgs& args) {
  set.bind_string("env.kind", args.kind_opt, args.kind);
  set.bind_int("env.max_steps", args.max_steps_opt, args.env.max_steps);
  set.bind_double("env.goal_radius", cmd->add_option("--goal-radius", args.env.goal_radius)
                                         ->capture_default_str()
                                         ->group("Environment"),
                  args.env.goal_radius);
  set.bind_double("env.step_cap", cmd->add_option("--step-cap", args.env.step_cap)
                                      ->capture_default_str()
                                      ->group("Environment"),
                  args.env.step_cap);
  set.bind_double("env.slot_halfwidth",
                  cmd->add_option("--slot-halfwidth", args.env.slot_halfwidth)
                      ->capture_default_str()
                      ->group("Environment"),
                  args.env.slot_halfwidth);
  set.bind_double("env.actuator_grid", cmd->add_option("--actuator-grid", args.env.actuator_grid)
                                           ->capture_default_str()
                                           ->group("Environment"),
                  args.env.actuator_grid);
  set.bind_double("env.tolerance", cmd->add_option("--tolerance", args.env.tolerance)
                                       ->capture_default_str()
                                       ->group("Environment"),
                  args.env.tolerance);
}

// Resolve flags + config into a validated environment. A zero/unset
// max_steps picks the per-kind default.
qdd::toy::ToyEnv resolve_env(const EnvArgs& args) {
  qdd::toy::EnvKind kind = qdd::toy::env_kind_from_string(args.kind);
  qdd::toy::ToyEnv env = qdd::toy::make_env(kind);
  qdd::toy::ToyEnv overrides = args.env;
  if (overrides.max_steps > 0) env.max_steps = overrides.max_steps;
  env.goal_radius = overrides.goal_radius;
  env.step_cap = overrides.step_cap;
  env.slot_halfwidth = overrides.slot_halfwidth;
  env.actuator_grid = overrides.actuator_grid;
  env.tolerance = overrides.tolerance;
  qdd::require(env.max_steps >= 1, "invalid-argument", "max_steps must be >= 1");
  return env;
}

// ---------------------------------------------------------------------------
// gen-demos
// ---------------------------------------------------------------------------

struct GenDemosArgs {
  CommonArgs common;
  EnvArgs env;
  int episodes = 200;
  std::string out;
};

void run_gen_demos(const GenDemosArgs& args, ConfigSet& set) {
  set.merge_and_echo("gen-demos", args.common.config_path);
  qdd::toy::ToyEnv env = resolve_env(args.env);
  qdd::Rng rng(args.common.seed);
  auto episodes = qdd::toy::gen_demos(env, args.episodes, rng);
  qdd::io::save_episodes(args.out, episodes);
  std::size_t steps = 0;
  for (const auto& ep : episodes) steps += ep.actions.size();
  std::cout << "wrote " << episodes.size() << " episodes (" << steps << " steps) to " << args.out
            << "\n";
}

// ---------------------------------------------------------------------------
// fit-stats
// ---------------------------------------------------------------------------

struct FitStatsArgs {
  std::string demos;
  std::string out;
  double lo = 0.01;
  double hi = 0.99;
  int bins = 2048;
  int horizon = 8;
};

void run_fit_stats(const FitStatsArgs& args) {
  auto episodes = qdd::io::load_episodes(args.demos);
  qdd::require(!episodes.empty(), "invalid-argument", "demo file holds no episodes");
  int action_dim = static_cast<int>(episodes.front().actions.front().size());
  qdd::ChunkLayout layout{args.horizon, action_dim};
  auto chunks = qdd::all_chunks(episodes, layout);
  qdd::QuantileCodec codec = qdd::fit_stats(chunks, args.lo, args.hi, args.bins);
  qdd::io::save_codec(args.out, codec);
  std::cout << "fitted codec: dims=" << codec.dims << " bins=" << codec.bins << " -> " << args.out
            << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  CommonArgs common;
  std::string demos;
  std::string codec_path;
  std::string out_dir;
  std::string model = "discrete";
  std::string norm_mode = "quantile";
  std::vector<int> hidden{128, 128};
  int horizon = 8;
  qdd::TrainConfig cfg;
};

void bind_train(ConfigSet& set, CLI::App* cmd, TrainArgs& args) {
  auto opt = [&](const char* flag, auto& slot, const char* help) {
    return cmd->add_option(flag, slot, help)->capture_default_str()->group("Training");
  };
  set.bind_int("train.total_steps", opt("--total-steps", args.cfg.total_steps, "optimizer steps"),
               args.cfg.total_steps);
  set.bind_int("train.batch_size", opt("--batch-size", args.cfg.batch_size, "examples per step"),
               args.cfg.batch_size);
  set.bind_int("train.warmup_steps",
               opt("--warmup-steps", args.cfg.warmup_steps, "linear LR ramp length"),
               args.cfg.warmup_steps);
  set.bind_double("train.peak_lr", opt("--peak-lr", args.cfg.peak_lr, "LR at end of warmup"),
                  args.cfg.peak_lr);
  set.bind_double("train.final_lr", opt("--final-lr", args.cfg.final_lr, "LR at the last step"),
                  args.cfg.final_lr);
  set.bind_double("train.clip_norm",
                  opt("--clip-norm", args.cfg.clip_norm, "global gradient norm cap"),
                  args.cfg.clip_norm);
  set.bind_double("train.ema_decay", opt("--ema-decay", args.cfg.ema_decay, "EMA decay per step"),
                  args.cfg.ema_decay);
  set.bind_double("train.weight_decay",
                  opt("--weight-decay", args.cfg.weight_decay, "decoupled weight decay"),
                  args.cfg.weight_decay);
  set.bind_double("train.beta1", opt("--beta1", args.cfg.beta1, "Adam beta1"), args.cfg.beta1);
  set.bind_double("train.beta2", opt("--beta2", args.cfg.beta2, "Adam beta2"), args.cfg.beta2);
  set.bind_double("train.adam_eps", opt("--adam-eps", args.cfg.adam_eps, "Adam epsilon"),
                  args.cfg.adam_eps);
  set.bind_double("train.smooth_alpha",
                  opt("--smooth-alpha", args.cfg.smooth_alpha, "one-hot smoothing scale"),
                  args.cfg.smooth_alpha);
  set.bind_string("train.norm_mode",
                  opt("--norm-mode", args.norm_mode, "quantile | mean_std"), args.norm_mode);
  set.bind_double("tau.a", opt("--tau-a", args.cfg.tau.a, "training tau Beta a"), args.cfg.tau.a);
  set.bind_double("tau.b", opt("--tau-b", args.cfg.tau.b, "training tau Beta b"), args.cfg.tau.b);
}

void run_train(const TrainArgs& args, ConfigSet& set) {
  set.merge_and_echo("train", args.common.config_path);
  auto episodes = qdd::io::load_episodes(args.demos);
  qdd::QuantileCodec codec = qdd::io::load_codec(args.codec_path);
  qdd::ChunkLayout layout{args.horizon, codec.dims};
  qdd::TrainConfig cfg = args.cfg;
  cfg.norm_mode = qdd::norm_mode_from_string(args.norm_mode);
  cfg.seed = args.common.seed;
  qdd::ModelKind kind = qdd::model_kind_from_string(args.model);

  qdd::io::Checkpoint ckpt;
  ckpt.kind = kind;
  ckpt.step = cfg.total_steps;
  ckpt.hidden = args.hidden;
  ckpt.codec = codec;
  ckpt.cfg = cfg;
  ckpt.layout = layout;
  std::vector<qdd::MetricRow> metrics;
  if (kind == qdd::ModelKind::discrete) {
    auto res = qdd::train_discrete(episodes, codec, layout, args.hidden, cfg);
    ckpt.obs_dim = res.state.params.obs_dim;
    ckpt.denoiser = std::move(res.state.params);
    ckpt.denoiser_ema = std::move(res.state.ema);
    metrics = std::move(res.metrics);
  } else {
    auto res = qdd::train_baseline(episodes, codec, layout, args.hidden, cfg);
    ckpt.obs_dim = res.state.params.obs_dim;
    ckpt.baseline = std::move(res.state.params);
    ckpt.baseline_ema = std::move(res.state.ema);
    metrics = std::move(res.metrics);
  }
  qdd::io::save_checkpoint(args.out_dir, ckpt);
  qdd::io::save_metrics(args.out_dir + "/metrics.csv", metrics);
  std::cout << "trained " << args.model << " for " << cfg.total_steps << " steps; final loss "
            << metrics.back().loss << "; checkpoint in " << args.out_dir << "\n";
}

// ---------------------------------------------------------------------------
// rollout / compare
// ---------------------------------------------------------------------------

qdd::toy::Policy policy_from_checkpoint(const qdd::io::Checkpoint& ckpt, int steps) {
  qdd::toy::DecodeOptions opts;
  opts.steps = steps;
  opts.smooth_alpha = ckpt.cfg.smooth_alpha;
  opts.norm_mode = ckpt.cfg.norm_mode;
  if (ckpt.kind == qdd::ModelKind::discrete)
    return qdd::toy::make_discrete_policy(*ckpt.denoiser_ema, ckpt.codec, opts);
  return qdd::toy::make_baseline_policy(*ckpt.baseline_ema, ckpt.codec, opts);
}

struct RolloutArgs {
  CommonArgs common;
  EnvArgs env;
  std::string checkpoint;
  std::string policy = "checkpoint";  // checkpoint | random
  int episodes = 200;
  int execute_h = 1;
  int steps = 10;
  int horizon = 8;  // random policy only; checkpoints carry their layout
  std::string out;
};

void run_rollout(const RolloutArgs& args, ConfigSet& set) {
  set.merge_and_echo("rollout", args.common.config_path);
  qdd::toy::ToyEnv env = resolve_env(args.env);
  qdd::toy::Policy policy;
  if (args.policy == "random") {
    policy = qdd::toy::make_random_policy({args.horizon, env.action_dim()});
  } else if (args.policy == "checkpoint") {
    qdd::require(!args.checkpoint.empty(), "invalid-argument",
                 "--checkpoint is required unless --policy random");
    qdd::io::Checkpoint ckpt = qdd::io::load_checkpoint(args.checkpoint);
    policy = policy_from_checkpoint(ckpt, args.steps);
  } else {
    qdd::fail("invalid-argument", "unknown policy '" + args.policy + "'");
  }
  qdd::Rng rng(args.common.seed);
  auto report =
      qdd::toy::rollout(env, policy, args.episodes, args.execute_h, rng, args.common.threads);
  std::string text = qdd::io::rollout_report_to_json(report).dump(2) + "\n";
  if (!args.out.empty()) qdd::io::write_text_file(args.out, text);
  std::cout << text;
}

struct CompareArgs {
  CommonArgs common;
  std::string spec_path;
  std::string out;
};

void run_compare(const CompareArgs& args) {
  qdd::io::json spec =
      qdd::io::parse_json(qdd::io::read_text_file(args.spec_path), args.spec_path);
  qdd::require(spec.is_array(), "parse-error", "comparison spec must be a JSON array");
  std::vector<qdd::io::CompareRow> rows;
  for (const auto& entry : spec) {
    std::string name, env_name;
    int episodes, execute_h, steps, horizon;
    std::uint64_t seed;
    std::string checkpoint;
    try {
      name = entry.at("name").get<std::string>();
      env_name = entry.at("env").get<std::string>();
      episodes = entry.value("episodes", 200);
      execute_h = entry.value("execute_h", 1);
      steps = entry.value("steps", 10);
      horizon = entry.value("horizon", 8);
      seed = entry.value("seed", std::uint64_t{0});
      checkpoint = entry.value("checkpoint", std::string{});
    } catch (const qdd::io::json::exception& e) {
      qdd::fail("parse-error", args.spec_path + ": bad comparison entry: " + e.what());
    }
    qdd::toy::ToyEnv env = qdd::toy::make_env(qdd::toy::env_kind_from_string(env_name));
    qdd::toy::Policy policy;
    if (checkpoint.empty()) {
      policy = qdd::toy::make_random_policy({horizon, env.action_dim()});
    } else {
      policy = policy_from_checkpoint(qdd::io::load_checkpoint(checkpoint), steps);
    }
    qdd::Rng rng(seed);
    auto report = qdd::toy::rollout(env, policy, episodes, execute_h, rng, args.common.threads);
    rows.push_back({name, report.env, seed, report.success_rate, report.episodes});
    std::cerr << "# " << name << " on " << report.env << ": " << report.success_rate << "\n";
  }
  std::string csv = qdd::io::compare_csv(rows);
  if (!args.out.empty()) qdd::io::write_text_file(args.out, csv);
  std::cout << csv;
}

// ---------------------------------------------------------------------------
// verify-support
// ---------------------------------------------------------------------------

struct VerifySupportArgs {
  CommonArgs common;
  int bins = 16;
  std::vector<double> tau{0.5};
  double alpha = 0.1;
  int trials = 10000;
  double entropy_floor = 0.1;
  double off_support_factor = 0.05;
  double mode_mass = 0.495;
  std::string out;
};

void run_verify_support(const VerifySupportArgs& args) {
  qdd::SupportConfig cfg;
  cfg.prior = qdd::default_two_mode_prior(args.bins, args.mode_mass);
  cfg.alpha = args.alpha;
  cfg.trials = args.trials;
  cfg.entropy_floor = args.entropy_floor;
  cfg.off_support_factor = args.off_support_factor;
  cfg.seed = args.common.seed;
  auto reports = qdd::run_support_sweep(cfg, args.tau, args.common.threads);

  std::printf("%6s %8s %14s %10s %18s %13s\n", "tau", "bins", "on_support", "qualified",
              "off_support_frac", "mean_entropy");
  for (const auto& r : reports)
    std::printf("%6.3f %8d %8d/%-5d %10d %18.4f %13.4f\n", r.tau, r.bins, r.on_support_count,
                r.trials, r.qualified, r.off_support_fraction, r.mean_entropy);

  qdd::io::json out;
  if (reports.size() == 1) {
    out = qdd::io::support_report_to_json(reports.front());
  } else {
    out = qdd::io::json::array();
    for (const auto& r : reports) out.push_back(qdd::io::support_report_to_json(r));
  }
  if (!args.out.empty()) qdd::io::write_text_file(args.out, out.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradCheckArgs {
  CommonArgs common;
  std::vector<int> hidden{32, 32};
  int bins = 8;
  int horizon = 2;
  int action_dim = 2;
  int state_dim = 3;
  int batch = 4;
  std::size_t per_tensor = 16;
  double h = 1e-6;
  double threshold = 1e-4;
};

// Raw (pre-encoding) example: the loss closure rebuilds the conditioning
// from the live parameters so perturbing the offset projection actually
// moves the loss.
struct RawGradExample {
  qdd::NoisyActionTensor noisy;
  qdd::Vec base_features;
  std::optional<std::array<double, 3>> offset;
  qdd::TokenGrid target;
};

qdd::DiscreteExample encode_grad_example(const qdd::DenoiserParams& params,
                                         const RawGradExample& raw) {
  qdd::DiscreteExample ex;
  ex.noisy = raw.noisy;
  ex.target = raw.target;
  ex.cond.features = raw.base_features;
  if (raw.offset) {
    qdd::Vec e = qdd::rel_embed(*raw.offset, params.rel);
    for (std::size_t i = 0; i < ex.cond.features.size(); ++i) ex.cond.features[i] += e[i];
    ex.cond.offset = raw.offset;
  }
  return ex;
}

void run_gradcheck(const GradCheckArgs& args) {
  qdd::ChunkLayout layout{args.horizon, args.action_dim};
  qdd::Rng root(args.common.seed);
  qdd::Rng init_rng = root.derive("init");
  qdd::DenoiserParams params =
      qdd::init_denoiser(layout, args.bins, args.state_dim, args.hidden, init_rng);
  // Give the offset projection non-trivial values so its forward path is live.
  qdd::Rng rel_rng = root.derive("rel");
  for (double& w : params.rel.W) w = 0.05 * rel_rng.normal();
  for (double& b : params.rel.b) b = 0.05 * rel_rng.normal();

  qdd::Rng data_rng = root.derive("data");
  std::vector<RawGradExample> batch(static_cast<std::size_t>(args.batch));
  for (int i = 0; i < args.batch; ++i) {
    RawGradExample& raw = batch[static_cast<std::size_t>(i)];
    raw.target.layout = layout;
    raw.target.bins = args.bins;
    for (int pos = 0; pos < layout.positions(); ++pos)
      raw.target.indices.push_back(
          static_cast<int>(data_rng.uniform_index(static_cast<std::size_t>(args.bins))));
    double tau = data_rng.uniform(0.05, 0.95);
    raw.noisy = qdd::forward_noise(qdd::one_hot_smooth(raw.target, 0.1), tau, data_rng);
    raw.base_features.resize(static_cast<std::size_t>(args.state_dim));
    for (double& f : raw.base_features) f = data_rng.normal();
    if (i % 2 == 0) raw.offset = std::array<double, 3>{0.05, 0.1, -0.08};
  }

  std::vector<qdd::DiscreteExample> encoded;
  encoded.reserve(batch.size());
  for (const auto& raw : batch) encoded.push_back(encode_grad_example(params, raw));
  qdd::DenoiserParams grad = qdd::zeros_like(params);
  qdd::backward_batch(params, encoded, grad);

  auto batch_loss = [](const qdd::DenoiserParams& p, std::span<const RawGradExample> b) {
    double total = 0.0;
    for (const auto& raw : b) {
      qdd::DiscreteExample ex = encode_grad_example(p, raw);
      total += qdd::ce_loss(qdd::forward_logits(p, ex.noisy, ex.cond), ex.target);
    }
    return total / static_cast<double>(b.size());
  };
  qdd::Rng fd_rng = root.derive("fd");
  qdd::GradCheckReport report = qdd::finite_difference_check<qdd::DenoiserParams, RawGradExample>(
      params, batch, args.h, args.per_tensor, batch_loss, grad, fd_rng);

  std::printf("checked %zu coordinates, max rel err %.3e (tensor %d index %zu)\n",
              report.coords_checked, report.max_rel_err, report.worst_tensor, report.worst_index);
  if (!(report.max_rel_err < args.threshold))
    qdd::fail_numerical("gradcheck-failed",
                        "max relative error " + std::to_string(report.max_rel_err) +
                            " exceeds " + std::to_string(args.threshold));
  std::cout << "gradcheck passed\n";
}

// ---------------------------------------------------------------------------
// warp
// ---------------------------------------------------------------------------

struct WarpArgs {
  CommonArgs common;
  std::string in_path;
  std::string intrinsics_path;
  std::string out_path;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double depth = 1.0;
  double fill = 0.0;
};

void bind_warp(ConfigSet& set, CLI::App* cmd, WarpArgs& args) {
  set.bind_double("warp.yaw_deg",
                  cmd->add_option("--yaw-deg", args.yaw_deg, "yaw rotation (degrees)")
                      ->capture_default_str(),
                  args.yaw_deg);
  set.bind_double("warp.pitch_deg",
                  cmd->add_option("--pitch-deg", args.pitch_deg, "pitch rotation (degrees)")
                      ->capture_default_str(),
                  args.pitch_deg);
  set.bind_double("warp.depth",
                  cmd->add_option("--depth", args.depth, "assumed scene depth")
                      ->capture_default_str(),
                  args.depth);
  set.bind_double("warp.fill",
                  cmd->add_option("--fill", args.fill, "value for unobserved pixels")
                      ->capture_default_str(),
                  args.fill);
}

void run_warp(const WarpArgs& args, ConfigSet& set) {
  set.merge_and_echo("warp", args.common.config_path);
  qdd::view::ImageU8 img = qdd::io::load_ppm(args.in_path);
  qdd::view::CameraIntrinsics K = qdd::io::load_intrinsics(args.intrinsics_path);
  qdd::view::WarpSpec spec;
  spec.yaw = args.yaw_deg * kDegToRad;
  spec.pitch = args.pitch_deg * kDegToRad;
  spec.depth = args.depth;
  spec.fill = args.fill;
  qdd::view::ImageU8 out = qdd::view::warp_image(img, K, spec);
  qdd::io::save_ppm(args.out_path, out);
  std::cout << "warped " << args.in_path << " -> " << args.out_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantized-diffusion action models: toy pipeline"};
  app.require_subcommand(1);

  GenDemosArgs gen_args;
  ConfigSet gen_set;
  auto* gen = app.add_subcommand("gen-demos", "generate expert demonstrations");
  add_common(gen, gen_args.common);
  add_env_flags(gen, gen_args.env);
  bind_env(gen_set, gen, gen_args.env);
  gen->add_option("--episodes", gen_args.episodes, "episode count")->capture_default_str();
  gen->add_option("--out", gen_args.out, "output JSONL path")->required();

  FitStatsArgs fit_args;
  auto* fit = app.add_subcommand("fit-stats", "fit codec statistics from demos");
  fit->add_option("--demos", fit_args.demos, "demo JSONL path")->required();
  fit->add_option("--out", fit_args.out, "output codec JSON path")->required();
  fit->add_option("--lo", fit_args.lo, "lower quantile")->capture_default_str();
  fit->add_option("--hi", fit_args.hi, "upper quantile")->capture_default_str();
  fit->add_option("--bins", fit_args.bins, "bins per dimension")->capture_default_str();
  fit->add_option("--horizon", fit_args.horizon, "chunk horizon")->capture_default_str();

  TrainArgs train_args;
  ConfigSet train_set;
  auto* train = app.add_subcommand("train", "train a policy model");
  add_common(train, train_args.common);
  train->add_option("--demos", train_args.demos, "demo JSONL path")->required();
  train->add_option("--codec", train_args.codec_path, "codec JSON path")->required();
  train->add_option("--out-dir", train_args.out_dir, "checkpoint directory")->required();
  train->add_option("--model", train_args.model, "discrete | mse_baseline")
      ->capture_default_str();
  train->add_option("--hidden", train_args.hidden, "hidden widths")
      ->delimiter(',')
      ->capture_default_str();
  train->add_option("--horizon", train_args.horizon, "chunk horizon")->capture_default_str();
  bind_train(train_set, train, train_args);

  RolloutArgs roll_args;
  ConfigSet roll_set;
  auto* roll = app.add_subcommand("rollout", "evaluate a policy in an environment");
  add_common(roll, roll_args.common);
  add_env_flags(roll, roll_args.env);
  bind_env(roll_set, roll, roll_args.env);
  roll->add_option("--checkpoint", roll_args.checkpoint, "checkpoint directory");
  roll->add_option("--policy", roll_args.policy, "checkpoint | random")->capture_default_str();
  roll->add_option("--episodes", roll_args.episodes, "evaluation episodes")->capture_default_str();
  roll->add_option("--execute-h", roll_args.execute_h, "actions executed per chunk")
      ->capture_default_str();
  roll->add_option("--steps", roll_args.steps, "denoising iterations")->capture_default_str();
  roll->add_option("--horizon", roll_args.horizon, "chunk horizon (random policy)")
      ->capture_default_str();
  roll->add_option("--out", roll_args.out, "write report JSON here");

  CompareArgs cmp_args;
  auto* cmp = app.add_subcommand("compare", "run a policy comparison sweep");
  add_common(cmp, cmp_args.common, false);
  cmp->add_option("--spec", cmp_args.spec_path, "comparison spec JSON")->required();
  cmp->add_option("--out", cmp_args.out, "write CSV here");

  VerifySupportArgs sup_args;
  auto* sup = app.add_subcommand("verify-support", "brute-force Bayes support experiment");
  add_common(sup, sup_args.common, false);
  sup->add_option("--bins", sup_args.bins, "prior bins")->capture_default_str();
  sup->add_option("--tau", sup_args.tau, "noise levels")->delimiter(',')->capture_default_str();
  sup->add_option("--alpha", sup_args.alpha, "one-hot smoothing scale")->capture_default_str();
  sup->add_option("--trials", sup_args.trials, "trials per tau")->capture_default_str();
  sup->add_option("--entropy-floor", sup_args.entropy_floor, "qualification floor (nats)")
      ->capture_default_str();
  sup->add_option("--off-support-factor", sup_args.off_support_factor,
                  "off-support distance as a fraction of the min bin gap")
      ->capture_default_str();
  sup->add_option("--mode-mass", sup_args.mode_mass, "prior mass per outer mode")
      ->capture_default_str();
  sup->add_option("--out", sup_args.out, "write report JSON here");

  GradCheckArgs grad_args;
  auto* gradc = app.add_subcommand("gradcheck", "finite-difference audit of the backward pass");
  add_common(gradc, grad_args.common, false);
  gradc->add_option("--hidden", grad_args.hidden, "hidden widths")
      ->delimiter(',')
      ->capture_default_str();
  gradc->add_option("--bins", grad_args.bins, "token bins")->capture_default_str();
  gradc->add_option("--horizon", grad_args.horizon, "chunk horizon")->capture_default_str();
  gradc->add_option("--action-dim", grad_args.action_dim, "action dimensions")
      ->capture_default_str();
  gradc->add_option("--state-dim", grad_args.state_dim, "observation state width")
      ->capture_default_str();
  gradc->add_option("--batch", grad_args.batch, "batch size")->capture_default_str();
  gradc->add_option("--coords", grad_args.per_tensor, "coordinates checked per tensor")
      ->capture_default_str();
  gradc->add_option("--step-size", grad_args.h, "finite-difference step")->capture_default_str();
  gradc->add_option("--threshold", grad_args.threshold, "max relative error allowed")
      ->capture_default_str();

  WarpArgs warp_args;
  ConfigSet warp_set;
  auto* warp = app.add_subcommand("warp", "spherical viewpoint warp of a P6 image");
  add_common(warp, warp_args.common);
  warp->add_option("--in", warp_args.in_path, "input PPM (P6)")->required();
  warp->add_option("--intrinsics", warp_args.intrinsics_path, "camera intrinsics JSON")
      ->required();
  warp->add_option("--out", warp_args.out_path, "output PPM")->required();
  bind_warp(warp_set, warp, warp_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) run_gen_demos(gen_args, gen_set);
    if (fit->parsed()) run_fit_stats(fit_args);
    if (train->parsed()) run_train(train_args, train_set);
    if (roll->parsed()) run_rollout(roll_args, roll_set);
    if (cmp->parsed()) run_compare(cmp_args);
    if (sup->parsed()) run_verify_support(sup_args);
    if (gradc->parsed()) run_gradcheck(grad_args);
    if (warp->parsed()) run_warp(warp_args, warp_set);
  } catch (const qdd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == qdd::ErrorKind::validation ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
