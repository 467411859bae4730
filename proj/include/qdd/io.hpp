#pragma once

// File formats:
//   codec stats      JSON   {dims, bins, q_lo, q_hi, mean, stdev}
//   demo datasets    JSONL  one episode per line
//   parameters       binary "QDDPRM01", u32 tensor count, u32 rows/cols per
//                           tensor, then row-major little-endian f64 payload
//   checkpoints      directory with meta.json + params.bin + params_ema.bin
//   train metrics    CSV    step,loss,lr,grad_norm,ema_applied
//   images           PPM    P6, 8-bit RGB
//   intrinsics       JSON   {fx, fy, cx, cy, width, height}

#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qdd/codec.hpp"
#include "qdd/common.hpp"
#include "qdd/dataset.hpp"
#include "qdd/denoiser.hpp"
#include "qdd/oracle.hpp"
#include "qdd/spherical.hpp"
#include "qdd/toybench.hpp"
#include "qdd/trainer.hpp"

static_assert(std::endian::native == std::endian::little,
              "parameter files are little-endian; big-endian hosts are unsupported");

namespace qdd::io {

using nlohmann::json;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io-error", "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io-error", "cannot open '" + path + "' for writing");
  out << content;
  if (!out) fail("io-error", "failed writing '" + path + "'");
}

inline json parse_json(const std::string& text, const std::string& origin) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail("parse-error", "malformed JSON in " + origin);
  return j;
}

// ---------------------------------------------------------------------------
// Codec stats
// ---------------------------------------------------------------------------

inline json codec_to_json(const QuantileCodec& codec) {
  return json{{"dims", codec.dims}, {"bins", codec.bins}, {"q_lo", codec.q_lo},
              {"q_hi", codec.q_hi}, {"mean", codec.mean}, {"stdev", codec.stdev}};
}

inline QuantileCodec codec_from_json(const json& j) {
  QuantileCodec codec;
  try {
    codec.dims = j.at("dims").get<int>();
    codec.bins = j.at("bins").get<int>();
    codec.q_lo = j.at("q_lo").get<Vec>();
    codec.q_hi = j.at("q_hi").get<Vec>();
    codec.mean = j.at("mean").get<Vec>();
    codec.stdev = j.at("stdev").get<Vec>();
  } catch (const json::exception& e) {
    fail("parse-error", std::string("bad codec stats: ") + e.what());
  }
  validate_codec(codec);
  return codec;
}

inline void save_codec(const std::string& path, const QuantileCodec& codec) {
  write_text_file(path, codec_to_json(codec).dump(2) + "\n");
}

inline QuantileCodec load_codec(const std::string& path) {
  return codec_from_json(parse_json(read_text_file(path), path));
}

// ---------------------------------------------------------------------------
// Demo datasets
// ---------------------------------------------------------------------------

inline void save_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io-error", "cannot open '" + path + "' for writing");
  for (const auto& ep : episodes) {
    json j{{"observations", ep.observations}, {"actions", ep.actions}, {"task_id", ep.task_id}};
    out << j.dump() << '\n';
  }
  if (!out) fail("io-error", "failed writing '" + path + "'");
}

inline std::vector<Episode> load_episodes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io-error", "cannot open '" + path + "' for reading");
  std::vector<Episode> episodes;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_json(line, path + ":" + std::to_string(lineno));
    Episode ep;
    try {
      ep.observations = j.at("observations").get<std::vector<Vec>>();
      ep.actions = j.at("actions").get<std::vector<Vec>>();
      ep.task_id = j.value("task_id", 0);
    } catch (const json::exception& e) {
      fail("parse-error",
           path + ":" + std::to_string(lineno) + ": bad episode: " + e.what());
    }
    validate_episode(ep);
    episodes.push_back(std::move(ep));
  }
  require(!episodes.empty(), "invalid-argument", "no episodes in '" + path + "'");
  return episodes;
}

// ---------------------------------------------------------------------------
// Parameter blobs
// ---------------------------------------------------------------------------

namespace detail {

constexpr char kParamMagic[8] = {'Q', 'D', 'D', 'P', 'R', 'M', '0', '1'};

inline void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) fail("parse-error", "truncated parameter file '" + path + "'");
  return v;
}

}  // namespace detail

template <class Params>
inline void save_params(const std::string& path, const Params& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io-error", "cannot open '" + path + "' for writing");
  out.write(detail::kParamMagic, sizeof(detail::kParamMagic));
  auto tensors = param_tensors(params);
  auto shapes = param_shapes(params);
  detail::write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (auto [rows, cols] : shapes) {
    detail::write_u32(out, static_cast<std::uint32_t>(rows));
    detail::write_u32(out, static_cast<std::uint32_t>(cols));
  }
  for (const Vec* t : tensors)
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(double)));
  if (!out) fail("io-error", "failed writing '" + path + "'");
}

// Fills an already-shaped parameter struct; the file must agree on every
// tensor shape.
template <class Params>
inline void load_params_into(const std::string& path, Params& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io-error", "cannot open '" + path + "' for reading");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kParamMagic, sizeof(magic)) != 0)
    fail("parse-error", "'" + path + "' is not a parameter file");
  auto tensors = param_tensors(params);
  auto shapes = param_shapes(params);
  std::uint32_t count = detail::read_u32(in, path);
  if (count != tensors.size())
    fail("shape-mismatch", "'" + path + "' holds " + std::to_string(count) +
                               " tensors, model expects " + std::to_string(tensors.size()));
  for (auto [rows, cols] : shapes) {
    std::uint32_t r = detail::read_u32(in, path);
    std::uint32_t c = detail::read_u32(in, path);
    if (r != static_cast<std::uint32_t>(rows) || c != static_cast<std::uint32_t>(cols))
      fail("shape-mismatch", "tensor shape " + std::to_string(r) + "x" + std::to_string(c) +
                                 " in '" + path + "' does not match model " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
  }
  for (Vec* t : tensors) {
    in.read(reinterpret_cast<char*>(t->data()),
            static_cast<std::streamsize>(t->size() * sizeof(double)));
    if (!in) fail("parse-error", "truncated parameter file '" + path + "'");
  }
  char extra;
  if (in.read(&extra, 1)) fail("parse-error", "trailing bytes in parameter file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Train config / checkpoints
// ---------------------------------------------------------------------------

inline json train_config_to_json(const TrainConfig& cfg) {
  return json{{"total_steps", cfg.total_steps},
              {"batch_size", cfg.batch_size},
              {"warmup_steps", cfg.warmup_steps},
              {"peak_lr", cfg.peak_lr},
              {"final_lr", cfg.final_lr},
              {"clip_norm", cfg.clip_norm},
              {"ema_decay", cfg.ema_decay},
              {"weight_decay", cfg.weight_decay},
              {"beta1", cfg.beta1},
              {"beta2", cfg.beta2},
              {"adam_eps", cfg.adam_eps},
              {"tau_a", cfg.tau.a},
              {"tau_b", cfg.tau.b},
              {"smooth_alpha", cfg.smooth_alpha},
              {"norm_mode", to_string(cfg.norm_mode)},
              {"seed", cfg.seed}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  try {
    cfg.total_steps = j.at("total_steps").get<std::int64_t>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
    cfg.peak_lr = j.at("peak_lr").get<double>();
    cfg.final_lr = j.at("final_lr").get<double>();
    cfg.clip_norm = j.at("clip_norm").get<double>();
    cfg.ema_decay = j.at("ema_decay").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.beta1 = j.at("beta1").get<double>();
    cfg.beta2 = j.at("beta2").get<double>();
    cfg.adam_eps = j.at("adam_eps").get<double>();
    cfg.tau.a = j.at("tau_a").get<double>();
    cfg.tau.b = j.at("tau_b").get<double>();
    cfg.smooth_alpha = j.at("smooth_alpha").get<double>();
    cfg.norm_mode = norm_mode_from_string(j.at("norm_mode").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    fail("parse-error", std::string("bad train config: ") + e.what());
  }
  return cfg;
}

struct Checkpoint {
  ModelKind kind = ModelKind::discrete;
  std::int64_t step = 0;
  std::vector<int> hidden;
  QuantileCodec codec;
  TrainConfig cfg;
  ChunkLayout layout;
  int obs_dim = 0;
  // exactly one pair is populated, matching `kind`
  std::optional<DenoiserParams> denoiser, denoiser_ema;
  std::optional<BaselineParams> baseline, baseline_ema;
};

namespace detail {

inline json checkpoint_meta_json(const Checkpoint& ckpt) {
  return json{{"kind", to_string(ckpt.kind)},
              {"step", ckpt.step},
              {"layout", {{"horizon", ckpt.layout.horizon}, {"action_dim", ckpt.layout.action_dim}}},
              {"obs_dim", ckpt.obs_dim},
              {"hidden", ckpt.hidden},
              {"codec", codec_to_json(ckpt.codec)},
              {"train_config", train_config_to_json(ckpt.cfg)}};
}

}  // namespace detail

inline void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail("io-error", "cannot create checkpoint directory '" + dir + "'");
  write_text_file(dir + "/meta.json", detail::checkpoint_meta_json(ckpt).dump(2) + "\n");
  if (ckpt.kind == ModelKind::discrete) {
    require(ckpt.denoiser && ckpt.denoiser_ema, "invalid-argument",
            "discrete checkpoint is missing parameters");
    save_params(dir + "/params.bin", *ckpt.denoiser);
    save_params(dir + "/params_ema.bin", *ckpt.denoiser_ema);
  } else {
    require(ckpt.baseline && ckpt.baseline_ema, "invalid-argument",
            "baseline checkpoint is missing parameters");
    save_params(dir + "/params.bin", *ckpt.baseline);
    save_params(dir + "/params_ema.bin", *ckpt.baseline_ema);
  }
}

inline Checkpoint load_checkpoint(const std::string& dir) {
  json meta = parse_json(read_text_file(dir + "/meta.json"), dir + "/meta.json");
  Checkpoint ckpt;
  try {
    ckpt.kind = model_kind_from_string(meta.at("kind").get<std::string>());
    ckpt.step = meta.at("step").get<std::int64_t>();
    ckpt.layout.horizon = meta.at("layout").at("horizon").get<int>();
    ckpt.layout.action_dim = meta.at("layout").at("action_dim").get<int>();
    ckpt.obs_dim = meta.at("obs_dim").get<int>();
    ckpt.hidden = meta.at("hidden").get<std::vector<int>>();
    ckpt.codec = codec_from_json(meta.at("codec"));
    ckpt.cfg = train_config_from_json(meta.at("train_config"));
  } catch (const json::exception& e) {
    fail("parse-error", std::string("bad checkpoint meta: ") + e.what());
  }
  validate_layout(ckpt.layout);
  // Rebuild the parameter shapes, then overwrite every tensor from disk.
  Rng scratch(0);
  if (ckpt.kind == ModelKind::discrete) {
    DenoiserParams shape =
        init_denoiser(ckpt.layout, ckpt.codec.bins, ckpt.obs_dim, ckpt.hidden, scratch);
    ckpt.denoiser = shape;
    ckpt.denoiser_ema = shape;
    load_params_into(dir + "/params.bin", *ckpt.denoiser);
    load_params_into(dir + "/params_ema.bin", *ckpt.denoiser_ema);
  } else {
    BaselineParams shape = init_baseline(ckpt.layout, ckpt.obs_dim, ckpt.hidden, scratch);
    ckpt.baseline = shape;
    ckpt.baseline_ema = shape;
    load_params_into(dir + "/params.bin", *ckpt.baseline);
    load_params_into(dir + "/params_ema.bin", *ckpt.baseline_ema);
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = "step,loss,lr,grad_norm,ema_applied\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%d\n",
                  static_cast<long long>(r.step), r.loss, r.lr, r.grad_norm, r.ema_applied);
    out += buf;
  }
  return out;
}

inline void save_metrics(const std::string& path, const std::vector<MetricRow>& rows) {
  write_text_file(path, metrics_csv(rows));
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline json rollout_report_to_json(const toy::RolloutReport& r) {
  return json{{"env", r.env},
              {"episodes", r.episodes},
              {"successes", r.successes},
              {"success_rate", r.success_rate},
              {"mean_steps_to_success", r.mean_steps_to_success},
              {"nonfinite_actions", r.nonfinite_actions},
              {"seed", r.seed}};
}

inline json support_report_to_json(const SupportReport& r) {
  return json{{"tau", r.tau},
              {"alpha", r.alpha},
              {"bins", r.bins},
              {"trials", r.trials},
              {"min_bin_gap", r.min_bin_gap},
              {"on_support_count", r.on_support_count},
              {"qualified", r.qualified},
              {"qualified_off_support", r.qualified_off_support},
              {"off_support_fraction", r.off_support_fraction},
              {"min_off_distance", r.min_off_distance},
              {"mean_off_distance", r.mean_off_distance},
              {"mean_entropy", r.mean_entropy},
              {"seed", r.seed}};
}

struct CompareRow {
  std::string policy;
  std::string env;
  std::uint64_t seed = 0;
  double success_rate = 0.0;
  int episodes = 0;
};

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string out = "policy,env,seed,success_rate,episodes\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%.17g,%d\n", r.policy.c_str(), r.env.c_str(),
                  static_cast<unsigned long long>(r.seed), r.success_rate, r.episodes);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Images / intrinsics
// ---------------------------------------------------------------------------

inline void save_ppm(const std::string& path, const view::ImageU8& img) {
  view::validate_image(img);
  require(img.channels == 3, "invalid-argument", "PPM images are 3-channel RGB");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io-error", "cannot open '" + path + "' for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail("io-error", "failed writing '" + path + "'");
}

inline view::ImageU8 load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io-error", "cannot open '" + path + "' for reading");
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  std::string magic = next_token();
  if (magic != "P6") fail("parse-error", "'" + path + "' is not a binary PPM (P6) file");
  view::ImageU8 img;
  try {
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    int maxval = std::stoi(next_token());
    require(maxval == 255, "parse-error", "only 8-bit PPM images are supported");
  } catch (const std::exception&) {
    fail("parse-error", "bad PPM header in '" + path + "'");
  }
  require(img.width > 0 && img.height > 0, "parse-error", "bad PPM size in '" + path + "'");
  img.channels = 3;
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    fail("parse-error", "truncated PPM payload in '" + path + "'");
  return img;
}

inline json intrinsics_to_json(const view::CameraIntrinsics& K) {
  return json{{"fx", K.fx}, {"fy", K.fy},       {"cx", K.cx},
              {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
}

inline view::CameraIntrinsics intrinsics_from_json(const json& j) {
  view::CameraIntrinsics K;
  try {
    K.fx = j.at("fx").get<double>();
    K.fy = j.at("fy").get<double>();
    K.cx = j.at("cx").get<double>();
    K.cy = j.at("cy").get<double>();
    K.width = j.at("width").get<int>();
    K.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    fail("parse-error", std::string("bad intrinsics: ") + e.what());
  }
  view::validate_intrinsics(K);
  return K;
}

inline void save_intrinsics(const std::string& path, const view::CameraIntrinsics& K) {
  write_text_file(path, intrinsics_to_json(K).dump(2) + "\n");
}

inline view::CameraIntrinsics load_intrinsics(const std::string& path) {
  return intrinsics_from_json(parse_json(read_text_file(path), path));
}

}  // namespace qdd::io
