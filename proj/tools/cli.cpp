#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "astws/attention.hpp"
#include "astws/metrics.hpp"
#include "astws/stft.hpp"
#include "astws/wiener.hpp"
#include "json.hpp"

namespace astws::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

constexpr int kSampleRate = 16000;

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// ---- config files ----------------------------------------------------------

Json read_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  require_input(in.good(), what + ": cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(what + ": " + path + ": " + e.what());
  }
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& what) {
  require_config(j.is_object(), what + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* a) { return key == a; });
    require_config(known, what + ": unknown key '" + key + "'");
  }
}

template <typename T>
void take(const Json& j, const char* key, T& dst, const std::string& what) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    dst = j[key].get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(what + ": bad value for '" + key + "'");
  }
}

template <typename T>
void take(const Json& j, const char* key, std::optional<T>& dst,
          const std::string& what) {
  if (!j.contains(key) || j[key].is_null()) return;
  T v{};
  take(j, key, v, what);
  dst = v;
}

WavFormat parse_format(const std::string& s) {
  if (s == "float32") return WavFormat::kFloat32;
  if (s == "pcm16") return WavFormat::kPcm16;
  throw ConfigError("format must be float32 or pcm16, got '" + s + "'");
}

bool parse_on_off(const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw ConfigError("attention must be on or off, got '" + s + "'");
}

template <typename T>
void override_with(const std::optional<T>& flag, T& dst) {
  if (flag) dst = *flag;
}

// ---- worker pool -----------------------------------------------------------

// Runs fn(0..n-1) on at most `jobs` threads. Every index runs to
// completion; the exception of the lowest failing index is rethrown.
void for_each_index(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const size_t threads = std::min<size_t>(std::max(jobs, 1), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<double> read_mono_16k(const std::string& path) {
  WavData wav = read_wav(path);
  require_input(wav.sample_rate == kSampleRate,
                path + ": sample rate " + std::to_string(wav.sample_rate) +
                    " Hz, expected " + std::to_string(kSampleRate));
  return std::move(wav.samples);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  out.close();
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create directory " + dir.string());
  }
}

struct ManifestEntry {
  std::string id;
  fs::path dir;
};

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const Json j = read_json_file(path, "manifest");
  require_input(j.contains("bundles") && j["bundles"].is_array(),
                "manifest: " + path + " has no bundles array");
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  for (const auto& b : j["bundles"]) {
    require_input(b.contains("id") && b.contains("dir"),
                  "manifest: bundle entry needs id and dir");
    entries.push_back({b["id"].get<std::string>(), base / b["dir"].get<std::string>()});
  }
  return entries;
}

// ---- simulate --------------------------------------------------------------

struct SimJob {
  std::string id;
  Scenario scenario;
};

std::vector<SimJob> plan_simulation(const SimulateConfig& config) {
  std::vector<Scenario> base;
  if (!config.scenarios.empty()) {
    for (size_t i = 0; i < config.scenarios.size(); ++i) {
      try {
        config.scenarios[i].validate();
      } catch (const ConfigError& e) {
        throw ConfigError("scenarios[" + std::to_string(i) + "]: " + e.what());
      }
      base.push_back(config.scenarios[i]);
    }
  } else {
    require_config(config.count >= 0, "simulate: count must be >= 0");
    ScenarioSampler sampler;
    sampler.ser_db = config.ser_db;
    sampler.t60 = config.t60;
    sampler.nonlinear_fraction = config.nonlinear_fraction;
    sampler.max_rir_seconds = config.max_rir_seconds;
    for (int i = 0; i < config.count; ++i) {
      base.push_back(sample_scenario(
          splitmix64(config.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(i)),
          sampler));
    }
  }
  std::vector<SimJob> jobs;
  for (size_t i = 0; i < base.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "s%04zu", i);
    if (config.ser_sweep.empty()) {
      jobs.push_back({id, base[i]});
      continue;
    }
    for (int ser : config.ser_sweep) {
      Scenario s = base[i];
      s.ser_db = ser;
      s.validate();
      jobs.push_back({std::string(id) + "_ser" + std::to_string(ser), s});
    }
  }
  return jobs;
}

double power(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

}  // namespace

int cmd_simulate(const SimulateConfig& config, std::ostream& out) {
  require_config(!config.out_dir.empty(), "simulate: --out is required");
  require_config(config.duration_s > 0.0, "simulate: duration_s must be > 0");
  const std::vector<SimJob> jobs = plan_simulation(config);

  std::vector<double> far_src, near_src;
  if (!config.far_wav.empty()) far_src = read_mono_16k(config.far_wav);
  if (!config.near_wav.empty()) near_src = read_mono_16k(config.near_wav);
  size_t n = static_cast<size_t>(std::lround(config.duration_s * kSampleRate));
  if (!far_src.empty()) n = std::min(n, far_src.size());
  if (!near_src.empty()) n = std::min(n, near_src.size());
  require_input(n > 0, "simulate: empty source signal");

  const fs::path root(config.out_dir);
  ensure_dir(root);
  for_each_index(jobs.size(), config.jobs, [&](size_t i) {
    const SimJob& job = jobs[i];
    const std::uint64_t s = job.scenario.seed;
    std::vector<double> far = far_src.empty()
                                  ? speech_like(n, splitmix64(2 * s + 1))
                                  : std::vector<double>(far_src.begin(), far_src.begin() + n);
    std::vector<double> near(n, 0.0);
    if (!config.single_talk) {
      near = near_src.empty()
                 ? speech_like(n, splitmix64(2 * s + 2))
                 : std::vector<double>(near_src.begin(), near_src.begin() + n);
    }
    const RenderedScenario b = render_scenario(job.scenario, far, near);

    const fs::path dir = root / job.id;
    ensure_dir(dir);
    write_wav((dir / "far.wav").string(), b.far, kSampleRate, config.format);
    write_wav((dir / "near.wav").string(), b.near, kSampleRate, config.format);
    write_wav((dir / "echo.wav").string(), b.echo, kSampleRate, config.format);
    write_wav((dir / "mic.wav").string(), b.mic, kSampleRate, config.format);

    Json meta = Json::object();
    meta["id"] = job.id;
    meta["condition"] = config.single_talk ? "ST_FE" : "DT";
    meta["scenario"] = Json::parse(job.scenario.to_json());
    meta["echo_scale"] = b.echo_scale;
    meta["rir_length"] = b.rir_length;
    meta["num_samples"] = n;
    meta["sample_rate"] = kSampleRate;
    meta["format"] = config.format == WavFormat::kPcm16 ? "pcm16" : "float32";
    if (!config.single_talk) {
      meta["measured_ser_db"] = 10.0 * std::log10(power(b.near) / power(b.echo));
    }
    write_text(dir / "meta.json", meta.dump(1) + "\n");
  });

  Json manifest = Json::object();
  manifest["bundles"] = Json::array();
  for (const auto& job : jobs) {
    manifest["bundles"].push_back({{"id", job.id}, {"dir", job.id}});
  }
  write_text(root / "manifest.json", manifest.dump(1) + "\n");
  out << "simulated " << jobs.size() << " bundle(s) in " << root.string() << "\n";
  return kExitOk;
}

// ---- process ---------------------------------------------------------------

namespace {

struct Processor {
  WienerConfig wiener;
  std::unique_ptr<AttentionStatsSource> attention;

  std::vector<double> run(std::span<const double> far, std::span<const double> mic,
                          WienerFilter* filter) const {
    require_input(far.size() == mic.size(),
                  "process: far and mic lengths differ (" + std::to_string(far.size()) +
                      " vs " + std::to_string(mic.size()) + ")");
    StwsResult r = stws_pipeline(far, mic, wiener, StftConfig{}, attention.get());
    if (filter) *filter = std::move(r.filter);
    return istft(r.enhanced, mic.size());
  }
};

Processor make_processor(const ProcessConfig& config) {
  Processor p;
  p.wiener.taps = config.taps;
  p.wiener.window_frames = config.window_frames;
  p.wiener.epsilon = config.epsilon;
  p.wiener.validate();
  if (config.attention) {
    AttentionParams params;
    AttentionOptions options;
    if (config.checkpoint.empty()) {
      params = AttentionParams::initialize(config.taps);
    } else {
      Checkpoint ckpt = load_checkpoint(config.checkpoint);
      require_config(ckpt.params.taps == config.taps,
                     "process: checkpoint has m = " + std::to_string(ckpt.params.taps) +
                         " but --m is " + std::to_string(config.taps));
      params = std::move(ckpt.params);
      options = ckpt.options;
    }
    options.window_frames = config.window_frames;
    p.attention = std::make_unique<AttentionStatsSource>(std::move(params), options);
  } else {
    require_config(config.checkpoint.empty(),
                   "process: --checkpoint needs --attention on");
  }
  return p;
}

void write_filter_norms(const std::string& path, const WienerFilter& h) {
  std::ostringstream csv;
  csv << "frame,filter_norm\n";
  for (int t = 0; t < h.frames(); ++t) {
    double acc = 0.0;
    for (int f = 0; f < h.bins(); ++f) {
      for (const Complex& c : h.taps_at(f, t)) acc += std::norm(c);
    }
    csv << t << "," << format_double("%.9g", std::sqrt(acc)) << "\n";
  }
  write_text(path, csv.str());
}

}  // namespace

int cmd_process(const ProcessConfig& config, std::ostream& out) {
  const Processor proc = make_processor(config);
  const std::string out_name =
      !config.out_name.empty() ? config.out_name
                               : (config.attention ? "out_astws.wav" : "out_stws.wav");

  std::vector<fs::path> bundles;
  if (!config.manifest.empty()) {
    for (const auto& e : read_manifest(config.manifest)) bundles.push_back(e.dir);
  } else if (!config.bundle.empty()) {
    bundles.push_back(config.bundle);
  }

  if (bundles.empty()) {
    require_config(!config.far.empty() && !config.mic.empty() && !config.out.empty(),
                   "process: give --far, --mic and --out, or --bundle, or --manifest");
    WavData far = read_wav(config.far);
    WavData mic = read_wav(config.mic);
    require_input(far.sample_rate == mic.sample_rate,
                  "process: sample rate mismatch (" + std::to_string(far.sample_rate) +
                      " vs " + std::to_string(mic.sample_rate) + " Hz)");
    require_input(far.sample_rate == kSampleRate,
                  "process: sample rate must be 16000 Hz, got " +
                      std::to_string(far.sample_rate));
    WienerFilter h;
    const auto enhanced = proc.run(far.samples, mic.samples, &h);
    write_wav(config.out, enhanced, kSampleRate, config.format);
    if (!config.filter_norms.empty()) write_filter_norms(config.filter_norms, h);
    out << "wrote " << config.out << "\n";
    return kExitOk;
  }

  require_config(config.filter_norms.empty() || bundles.size() == 1,
                 "process: --filter-norms needs a single input");
  for_each_index(bundles.size(), config.jobs, [&](size_t i) {
    const fs::path& dir = bundles[i];
    const auto far = read_mono_16k((dir / "far.wav").string());
    const auto mic = read_mono_16k((dir / "mic.wav").string());
    WienerFilter h;
    const auto enhanced = proc.run(far, mic, config.filter_norms.empty() ? nullptr : &h);
    write_wav((dir / out_name).string(), enhanced, kSampleRate, config.format);
    if (!config.filter_norms.empty()) write_filter_norms(config.filter_norms, h);
  });
  out << "processed " << bundles.size() << " bundle(s) -> " << out_name << "\n";
  return kExitOk;
}

// ---- evaluate --------------------------------------------------------------

int cmd_evaluate(const EvaluateConfig& config, std::ostream& out) {
  std::vector<ManifestEntry> entries;
  if (!config.manifest.empty()) entries = read_manifest(config.manifest);
  for (const auto& b : config.bundles) {
    entries.push_back({fs::path(b).filename().string(), fs::path(b)});
  }

  std::vector<EvalReport> reports;
  for (const auto& e : entries) {
    for (const char* name : {"near.wav", "mic.wav"}) {
      require_input(fs::exists(e.dir / name),
                    "evaluate: missing reference " + (e.dir / name).string());
    }
    require_input(fs::exists(e.dir / config.processed),
                  "evaluate: missing processed file " + (e.dir / config.processed).string());
    std::optional<int> ser;
    std::string id = e.id;
    if (fs::exists(e.dir / "meta.json")) {
      const Json meta = read_json_file((e.dir / "meta.json").string(), "meta");
      if (meta.value("condition", "DT") == "DT" && meta.contains("scenario")) {
        ser = meta["scenario"].value("ser_db", 0);
      }
    }
    const auto near = read_mono_16k((e.dir / "near.wav").string());
    const auto mic = read_mono_16k((e.dir / "mic.wav").string());
    const auto processed = read_mono_16k((e.dir / config.processed).string());
    reports.push_back(evaluate_utterance(id, ser, near, mic, processed));
  }

  if (!config.csv.empty()) write_text(config.csv, reports_to_csv(reports));
  if (!config.json.empty()) write_text(config.json, reports_to_json(reports) + "\n");
  out << "evaluated " << reports.size() << " utterance(s)\n";
  const Json summary = Json::parse(reports_to_json(reports));
  for (const auto& [cond, stats] : summary["conditions"].items()) {
    out << "  " << cond << " (n=" << stats["count"].get<int>() << ")";
    for (const char* metric : {"sdr_db", "erle_db"}) {
      if (stats.contains(metric)) {
        out << " " << metric << " mean "
            << format_double("%.2f", stats[metric]["mean"].get<double>());
      }
    }
    out << "\n";
  }
  return kExitOk;
}

// ---- gradcheck -------------------------------------------------------------

int cmd_gradcheck(const GradcheckConfig& config, std::ostream& out) {
  require_config(config.seeds >= 1, "gradcheck: seeds must be >= 1");
  std::optional<Checkpoint> ckpt;
  if (!config.checkpoint.empty()) {
    try {
      ckpt = load_checkpoint(config.checkpoint);
    } catch (const std::exception& e) {
      out << "FAIL: " << e.what() << "\n";
      return kExitFailure;
    }
  }

  double worst = 0.0;
  for (int i = 0; i < config.seeds; ++i) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(i);
    AttentionParams params = ckpt ? ckpt->params : random_params(config.taps, seed);
    AttentionOptions options = ckpt ? ckpt->options : AttentionOptions{};
    const GradCheckResult r =
        gradient_check(params, options, seed, config.bins, config.frames, config.step);
    out << "seed " << seed << ": max rel err " << format_double("%.3e", r.max_rel_error)
        << " at " << r.worst_tensor << "[" << r.worst_index << "]\n";
    worst = std::max(worst, r.max_rel_error);
  }
  const bool pass = worst <= config.tolerance;
  out << "max rel err " << format_double("%.3e", worst) << " <= "
      << format_double("%.0e", config.tolerance) << ": " << (pass ? "PASS" : "FAIL")
      << "\n";
  return pass ? kExitOk : kExitFailure;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const TrainConfig& config, std::ostream& out) {
  require_config(!config.out.empty(), "train: --out is required");
  require_config(config.scenarios >= 1, "train: scenarios must be >= 1");
  require_config(config.bin_stride >= 1, "train: bin_stride must be >= 1");
  require_config(config.duration_s > 0.0, "train: duration_s must be > 0");

  AttentionOptions options;
  options.window_frames = config.window_frames;
  options.context_frames = config.context_frames;
  options.validate();

  TrainingSet set{config.taps, config.window_frames, {}};
  const StftConfig stft_config;
  const size_t n = static_cast<size_t>(std::lround(config.duration_s * kSampleRate));
  ScenarioSampler sampler;
  sampler.ser_db = config.ser_db;
  for (int i = 0; i < config.scenarios; ++i) {
    const Scenario s = sample_scenario(config.seed + static_cast<std::uint64_t>(i), sampler);
    const auto far = speech_like(n, splitmix64(2 * s.seed + 1));
    const auto near = speech_like(n, splitmix64(2 * s.seed + 2));
    const RenderedScenario b = render_scenario(s, far, near);
    std::vector<int> bins;
    for (int f = 1 + i % config.bin_stride; f < stft_config.num_bins(); f += config.bin_stride) {
      bins.push_back(f);
    }
    add_training_utterance(set, stft(b.far, stft_config), stft(b.mic, stft_config),
                           stft(b.echo, stft_config), bins);
  }

  astws::TrainConfig tc;
  tc.steps = config.steps;
  tc.learning_rate = config.learning_rate;
  const TrainResult result =
      train_surrogate(AttentionParams::initialize(config.taps, config.init_seed), options,
                      set, tc);

  const size_t every = std::max<size_t>(1, result.loss.size() / 10);
  for (size_t i = 0; i < result.loss.size(); ++i) {
    if (i % every == 0 || i + 1 == result.loss.size()) {
      out << "step " << i << " loss " << format_double("%.6f", result.loss[i]) << "\n";
    }
  }
  if (!config.loss_csv.empty()) {
    std::ostringstream csv;
    csv << "step,loss,smoothed_loss\n";
    for (size_t i = 0; i < result.loss.size(); ++i) {
      csv << i << "," << format_double("%.9g", result.loss[i]) << ","
          << format_double("%.9g", result.smoothed_loss[i]) << "\n";
    }
    write_text(config.loss_csv, csv.str());
  }
  save_checkpoint(config.out, Checkpoint{result.params, options, config.init_seed});
  out << "wrote " << config.out << "\n";
  return kExitOk;
}

// ---- argument parsing ------------------------------------------------------

namespace {

SimulateConfig simulate_from_json(const Json& j) {
  const std::string what = "simulate config";
  check_keys(j,
             {"out", "seed", "count", "ser_db", "ser_sweep", "t60", "nonlinear_fraction",
              "max_rir_seconds", "duration_s", "single_talk", "format", "scenarios",
              "far_wav", "near_wav", "jobs"},
             what);
  SimulateConfig c;
  take(j, "out", c.out_dir, what);
  take(j, "seed", c.seed, what);
  take(j, "count", c.count, what);
  take(j, "ser_db", c.ser_db, what);
  take(j, "ser_sweep", c.ser_sweep, what);
  take(j, "t60", c.t60, what);
  take(j, "nonlinear_fraction", c.nonlinear_fraction, what);
  take(j, "max_rir_seconds", c.max_rir_seconds, what);
  take(j, "duration_s", c.duration_s, what);
  take(j, "single_talk", c.single_talk, what);
  take(j, "far_wav", c.far_wav, what);
  take(j, "near_wav", c.near_wav, what);
  take(j, "jobs", c.jobs, what);
  if (j.contains("format")) c.format = parse_format(j["format"].get<std::string>());
  if (j.contains("scenarios")) {
    require_config(j["scenarios"].is_array(), what + ": scenarios must be an array");
    for (const auto& s : j["scenarios"]) c.scenarios.push_back(Scenario::from_json(s.dump()));
  }
  return c;
}

ProcessConfig process_from_json(const Json& j) {
  const std::string what = "process config";
  check_keys(j,
             {"far", "mic", "out", "bundle", "manifest", "out_name", "m", "window_frames",
              "epsilon", "attention", "checkpoint", "filter_norms", "format", "jobs"},
             what);
  ProcessConfig c;
  take(j, "far", c.far, what);
  take(j, "mic", c.mic, what);
  take(j, "out", c.out, what);
  take(j, "bundle", c.bundle, what);
  take(j, "manifest", c.manifest, what);
  take(j, "out_name", c.out_name, what);
  take(j, "m", c.taps, what);
  take(j, "window_frames", c.window_frames, what);
  take(j, "epsilon", c.epsilon, what);
  take(j, "checkpoint", c.checkpoint, what);
  take(j, "filter_norms", c.filter_norms, what);
  take(j, "jobs", c.jobs, what);
  if (j.contains("attention")) {
    const auto& a = j["attention"];
    c.attention = a.is_boolean() ? a.get<bool>() : parse_on_off(a.get<std::string>());
  }
  if (j.contains("format")) c.format = parse_format(j["format"].get<std::string>());
  return c;
}

EvaluateConfig evaluate_from_json(const Json& j) {
  const std::string what = "evaluate config";
  check_keys(j, {"manifest", "bundles", "processed", "csv", "json"}, what);
  EvaluateConfig c;
  take(j, "manifest", c.manifest, what);
  take(j, "bundles", c.bundles, what);
  take(j, "processed", c.processed, what);
  take(j, "csv", c.csv, what);
  take(j, "json", c.json, what);
  return c;
}

GradcheckConfig gradcheck_from_json(const Json& j) {
  const std::string what = "gradcheck config";
  check_keys(j, {"seed", "seeds", "m", "bins", "frames", "step", "tolerance", "checkpoint"},
             what);
  GradcheckConfig c;
  take(j, "seed", c.seed, what);
  take(j, "seeds", c.seeds, what);
  take(j, "m", c.taps, what);
  take(j, "bins", c.bins, what);
  take(j, "frames", c.frames, what);
  take(j, "step", c.step, what);
  take(j, "tolerance", c.tolerance, what);
  take(j, "checkpoint", c.checkpoint, what);
  return c;
}

TrainConfig train_from_json(const Json& j) {
  const std::string what = "train config";
  check_keys(j,
             {"out", "seed", "init_seed", "scenarios", "duration_s", "ser_db", "bin_stride",
              "steps", "lr", "m", "window_frames", "context_frames", "loss_csv"},
             what);
  TrainConfig c;
  take(j, "out", c.out, what);
  take(j, "seed", c.seed, what);
  take(j, "init_seed", c.init_seed, what);
  take(j, "scenarios", c.scenarios, what);
  take(j, "duration_s", c.duration_s, what);
  take(j, "ser_db", c.ser_db, what);
  take(j, "bin_stride", c.bin_stride, what);
  take(j, "steps", c.steps, what);
  take(j, "lr", c.learning_rate, what);
  take(j, "m", c.taps, what);
  take(j, "window_frames", c.window_frames, what);
  take(j, "context_frames", c.context_frames, what);
  take(j, "loss_csv", c.loss_csv, what);
  return c;
}

Json load_config(const std::string& path) {
  return path.empty() ? Json::object() : read_json_file(path, "config");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Short-time Wiener echo cancellation with attention-enhanced statistics",
               "astws"};
  app.require_subcommand(1);

  // simulate
  std::string sim_config;
  std::optional<std::string> sim_out, sim_format, sim_far, sim_near;
  std::optional<std::uint64_t> sim_seed;
  std::optional<int> sim_count, sim_ser, sim_jobs;
  std::optional<double> sim_t60, sim_duration, sim_nl, sim_max_rir;
  std::vector<int> sim_sweep;
  bool sim_single = false;
  auto* simulate = app.add_subcommand("simulate", "Render scenario bundles (WAV + metadata)");
  simulate->add_option("--config", sim_config, "JSON config file");
  simulate->add_option("--out", sim_out, "Output directory");
  simulate->add_option("--seed", sim_seed, "Batch seed");
  simulate->add_option("--count", sim_count, "Number of sampled scenarios");
  simulate->add_option("--ser", sim_ser, "Fixed SER in dB");
  simulate->add_option("--ser-sweep", sim_sweep, "One bundle per SER value");
  simulate->add_option("--t60", sim_t60, "Fixed T60 in seconds");
  simulate->add_option("--duration", sim_duration, "Utterance length in seconds");
  simulate->add_option("--nonlinear-fraction", sim_nl, "Share of nonlinear scenarios");
  simulate->add_option("--max-rir", sim_max_rir, "Cap on RIR length in seconds");
  simulate->add_option("--format", sim_format, "float32 or pcm16");
  simulate->add_option("--far-wav", sim_far, "Far-end source WAV");
  simulate->add_option("--near-wav", sim_near, "Near-end source WAV");
  simulate->add_option("--jobs", sim_jobs, "Worker threads");
  simulate->add_flag("--single-talk", sim_single, "Silent near-end (far-end single-talk)");

  // process
  std::string proc_config;
  std::optional<std::string> proc_far, proc_mic, proc_out, proc_bundle, proc_manifest,
      proc_out_name, proc_attention, proc_ckpt, proc_norms, proc_format;
  std::optional<int> proc_m, proc_window, proc_jobs;
  std::optional<double> proc_eps;
  auto* process = app.add_subcommand("process", "Run the echo canceller");
  process->add_option("--config", proc_config, "JSON config file");
  process->add_option("--far", proc_far, "Far-end WAV");
  process->add_option("--mic", proc_mic, "Microphone WAV");
  process->add_option("--out", proc_out, "Enhanced output WAV");
  process->add_option("--bundle", proc_bundle, "Bundle directory (far.wav, mic.wav)");
  process->add_option("--manifest", proc_manifest, "manifest.json from simulate");
  process->add_option("--out-name", proc_out_name, "Output file name inside bundles");
  process->add_option("--attention", proc_attention, "on or off");
  process->add_option("--checkpoint", proc_ckpt, "Trained attention checkpoint");
  process->add_option("--m", proc_m, "Filter taps (frames)");
  process->add_option("--window-frames", proc_window, "Statistics window L in frames");
  process->add_option("--epsilon", proc_eps, "Relative regularization");
  process->add_option("--filter-norms", proc_norms, "Write per-frame filter norms (CSV)");
  process->add_option("--format", proc_format, "float32 or pcm16");
  process->add_option("--jobs", proc_jobs, "Worker threads");

  // evaluate
  std::string eval_config;
  std::optional<std::string> eval_manifest, eval_processed, eval_csv, eval_json;
  std::vector<std::string> eval_bundles;
  auto* evaluate = app.add_subcommand("evaluate", "Score processed bundles");
  evaluate->add_option("--config", eval_config, "JSON config file");
  evaluate->add_option("--manifest", eval_manifest, "manifest.json from simulate");
  evaluate->add_option("--bundle", eval_bundles, "Bundle directory (repeatable)");
  evaluate->add_option("--processed", eval_processed, "Processed file name in each bundle");
  evaluate->add_option("--csv", eval_csv, "Per-utterance CSV report");
  evaluate->add_option("--json", eval_json, "Aggregate JSON report");

  // gradcheck
  std::string gc_config;
  std::optional<std::uint64_t> gc_seed;
  std::optional<int> gc_seeds, gc_m;
  std::optional<double> gc_tol;
  std::optional<std::string> gc_ckpt;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gradcheck->add_option("--config", gc_config, "JSON config file");
  gradcheck->add_option("--seed", gc_seed, "First seed");
  gradcheck->add_option("--seeds", gc_seeds, "Number of seeds");
  gradcheck->add_option("--m", gc_m, "Attention dimension");
  gradcheck->add_option("--tolerance", gc_tol, "Max relative error");
  gradcheck->add_option("--checkpoint", gc_ckpt, "Check at checkpoint parameters");

  // train
  std::string tr_config;
  std::optional<std::string> tr_out, tr_loss;
  std::optional<std::uint64_t> tr_seed, tr_init;
  std::optional<int> tr_scen, tr_steps, tr_m, tr_stride, tr_ser, tr_window, tr_context;
  std::optional<double> tr_lr, tr_duration;
  auto* train = app.add_subcommand("train", "Train the attention on the surrogate loss");
  train->add_option("--config", tr_config, "JSON config file");
  train->add_option("--out", tr_out, "Checkpoint path");
  train->add_option("--seed", tr_seed, "First scenario seed");
  train->add_option("--init-seed", tr_init, "Parameter initialization seed");
  train->add_option("--scenarios", tr_scen, "Training utterances");
  train->add_option("--duration", tr_duration, "Utterance length in seconds");
  train->add_option("--ser", tr_ser, "SER of the training mixtures");
  train->add_option("--bin-stride", tr_stride, "Use every n-th frequency bin");
  train->add_option("--steps", tr_steps, "Gradient steps");
  train->add_option("--lr", tr_lr, "Learning rate");
  train->add_option("--m", tr_m, "Filter taps");
  train->add_option("--window-frames", tr_window, "Statistics window L in frames");
  train->add_option("--context-frames", tr_context, "Causal attention span");
  train->add_option("--loss-csv", tr_loss, "Write the loss trace (CSV)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      SimulateConfig c = simulate_from_json(load_config(sim_config));
      override_with(sim_out, c.out_dir);
      override_with(sim_seed, c.seed);
      override_with(sim_count, c.count);
      if (sim_ser) c.ser_db = sim_ser;
      if (!sim_sweep.empty()) c.ser_sweep = sim_sweep;
      if (sim_t60) c.t60 = sim_t60;
      override_with(sim_duration, c.duration_s);
      override_with(sim_nl, c.nonlinear_fraction);
      if (sim_max_rir) c.max_rir_seconds = sim_max_rir;
      if (sim_format) c.format = parse_format(*sim_format);
      override_with(sim_far, c.far_wav);
      override_with(sim_near, c.near_wav);
      override_with(sim_jobs, c.jobs);
      if (sim_single) c.single_talk = true;
      return cmd_simulate(c, out);
    }
    if (process->parsed()) {
      ProcessConfig c = process_from_json(load_config(proc_config));
      override_with(proc_far, c.far);
      override_with(proc_mic, c.mic);
      override_with(proc_out, c.out);
      override_with(proc_bundle, c.bundle);
      override_with(proc_manifest, c.manifest);
      override_with(proc_out_name, c.out_name);
      if (proc_attention) c.attention = parse_on_off(*proc_attention);
      override_with(proc_ckpt, c.checkpoint);
      override_with(proc_m, c.taps);
      override_with(proc_window, c.window_frames);
      override_with(proc_eps, c.epsilon);
      override_with(proc_norms, c.filter_norms);
      if (proc_format) c.format = parse_format(*proc_format);
      override_with(proc_jobs, c.jobs);
      return cmd_process(c, out);
    }
    if (evaluate->parsed()) {
      EvaluateConfig c = evaluate_from_json(load_config(eval_config));
      override_with(eval_manifest, c.manifest);
      if (!eval_bundles.empty()) c.bundles = eval_bundles;
      override_with(eval_processed, c.processed);
      override_with(eval_csv, c.csv);
      override_with(eval_json, c.json);
      return cmd_evaluate(c, out);
    }
    if (gradcheck->parsed()) {
      GradcheckConfig c = gradcheck_from_json(load_config(gc_config));
      override_with(gc_seed, c.seed);
      override_with(gc_seeds, c.seeds);
      override_with(gc_m, c.taps);
      override_with(gc_tol, c.tolerance);
      override_with(gc_ckpt, c.checkpoint);
      return cmd_gradcheck(c, out);
    }
    if (train->parsed()) {
      TrainConfig c = train_from_json(load_config(tr_config));
      override_with(tr_out, c.out);
      override_with(tr_seed, c.seed);
      override_with(tr_init, c.init_seed);
      override_with(tr_scen, c.scenarios);
      override_with(tr_duration, c.duration_s);
      override_with(tr_ser, c.ser_db);
      override_with(tr_stride, c.bin_stride);
      override_with(tr_steps, c.steps);
      override_with(tr_lr, c.learning_rate);
      override_with(tr_m, c.taps);
      override_with(tr_window, c.window_frames);
      override_with(tr_context, c.context_frames);
      override_with(tr_loss, c.loss_csv);
      return cmd_train(c, out);
    }
  } catch (const std::invalid_argument& e) {
    // ConfigError and InputError.
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace astws::cli
