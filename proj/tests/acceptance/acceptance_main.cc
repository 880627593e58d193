// Acceptance gate. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "astws/attention.hpp"
#include "astws/metrics.hpp"
#include "astws/simulate.hpp"
#include "astws/stft.hpp"
#include "astws/wav.hpp"
#include "astws/wiener.hpp"
#include "cli.hpp"
#include "json.hpp"

namespace astws {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

std::vector<double> noise(size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> x(n);
  for (double& v : x) v = normal(rng);
  return x;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("astws_accept_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
double sign_test_p(int wins, int n) {
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) -
                  n * std::log(2.0));
  }
  return p;
}

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// 1. The untouched mixture scores SDR = SER.
Outcome mixture_sdr() {
  double worst = 0.0;
  for (int ser : {-10, 0, 10}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      ScenarioSampler sampler;
      sampler.ser_db = ser;
      sampler.max_rir_seconds = 0.25;
      const Scenario s = sample_scenario(seed * 31 + ser + 100, sampler);
      const auto far = speech_like(48000, 2 * seed + 1);
      const auto near = speech_like(48000, 2 * seed + 2);
      const RenderedScenario r = render_scenario(s, far, near);
      worst = std::max(worst, std::abs(sdr(r.near, r.mic) - ser));
    }
  }
  return {worst <= 0.05, "max |SDR(mix) - SER| = " + fmt("%.2e", worst) + " dB (tol 0.05)"};
}

// 2. Far-end single talk with the echo path inside the filter span.
Outcome linear_floor() {
  constexpr int kScenarios = 20;
  WienerConfig cfg;  // m = 20, L = 100, eps = 1e-3
  double sum = 0.0;
  ScenarioSampler sampler;
  sampler.nonlinear_fraction = 0.0;
  // m hop = 1600 samples; a 1280-sample RIR plus the 320-sample window fits.
  sampler.max_rir_seconds = 0.08;
  for (int i = 0; i < kScenarios; ++i) {
    const Scenario s = sample_scenario(5000 + i, sampler);
    const auto far = speech_like(64000, 7000 + i);
    const std::vector<double> silent(far.size(), 0.0);
    const RenderedScenario r = render_scenario(s, far, silent);
    const StwsResult out = stws_pipeline(r.far, r.mic, cfg);
    const auto y = istft(out.enhanced, r.mic.size());
    sum += erle(r.mic, y);
  }
  const double mean_erle = sum / kScenarios;

  // Exact-span synthetic echo: Y = sum_k H_k X[t - k] per bin, eps = 0.
  // Frames before 2m are warm-up (the window has not yet seen m
  // independent tap vectors).
  constexpr int kFrames = 300, kBins = 257, kTaps = 20;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  StftConfig sc;
  Spectrogram far(kFrames, kBins, sc), echo(kFrames, kBins, sc);
  for (auto& c : far.data()) c = Complex(normal(rng), normal(rng));
  std::vector<Complex> h(static_cast<size_t>(kBins) * kTaps);
  for (int k = 0; k < kTaps; ++k) {
    for (int f = 0; f < kBins; ++f) {
      h[f * kTaps + k] = std::exp(-0.2 * k) * Complex(normal(rng), normal(rng));
    }
  }
  for (int t = 0; t < kFrames; ++t) {
    for (int f = 0; f < kBins; ++f) {
      Complex acc = 0.0;
      for (int k = 0; k < kTaps && k <= t; ++k) acc += h[f * kTaps + k] * far(t - k, f);
      echo(t, f) = acc;
    }
  }
  WienerConfig exact;
  exact.epsilon = 0.0;
  const StwsResult res = stws_pipeline(far, echo, exact);
  double e_in = 0.0, e_out = 0.0;
  for (int t = 2 * kTaps; t < kFrames; ++t) {
    for (int f = 0; f < kBins; ++f) {
      e_in += std::norm(echo(t, f));
      e_out += std::norm(res.enhanced(t, f));
    }
  }
  const double ratio = e_out / e_in;
  return {mean_erle >= 30.0 && ratio <= 1e-8,
          "mean ERLE " + fmt("%.2f", mean_erle) + " dB over 20 (>= 30); exact-span residual " +
              fmt("%.2e", ratio) + " (<= 1e-8)"};
}

// 3. Per-bin solve vs dense least squares.
Outcome oracle_equivalence() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> taps_dist(1, 5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = taps_dist(rng);
    const int len = std::uniform_int_distribution<int>(m + 1, 30)(rng);
    Eigen::MatrixXcd x(len, m);
    Eigen::VectorXcd d(len);
    for (int i = 0; i < len; ++i) {
      for (int j = 0; j < m; ++j) x(i, j) = Complex(normal(rng), normal(rng));
      d(i) = Complex(normal(rng), normal(rng));
    }
    const size_t width = StatsLayout{m}.width();
    std::vector<double> sum(width, 0.0), row(width);
    std::vector<Complex> xi(m);
    for (int i = 0; i < len; ++i) {
      for (int j = 0; j < m; ++j) xi[j] = x(i, j);
      pack_instantaneous(xi, d(i), row);
      for (size_t j = 0; j < width; ++j) sum[j] += row[j];
    }
    std::vector<Complex> r_mat(m * m), r_vec(m), h(m);
    unpack_stats(sum, m, r_mat, r_vec);
    solve_regularized(r_mat, r_vec, m, 0.0, h);
    const Eigen::VectorXcd want = x.colPivHouseholderQr().solve(d);
    for (int j = 0; j < m; ++j) worst = std::max(worst, std::abs(h[j] - want(j)));
  }
  return {worst <= 1e-8, "max abs error " + fmt("%.2e", worst) + " over 100 systems (<= 1e-8)"};
}

// 4. Attention gradients vs central differences.
Outcome gradients() {
  double worst = 0.0;
  std::string where;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const GradCheckResult r = gradient_check(random_params(2, seed), AttentionOptions{}, seed);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = r.worst_tensor + "[" + std::to_string(r.worst_index) + "]";
    }
  }
  return {worst <= 1e-4, "max rel err " + fmt("%.2e", worst) + " at " + where + " (<= 1e-4)"};
}

// 5. Mixture < STWS < ASTWS on 50 double-talk scenarios at SER 0 dB.
Outcome ablation() {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = scratch_dir("ablation");
  std::ostringstream log;

  cli::TrainConfig train;
  train.out = (dir / "attention.json").string();
  if (cli::cmd_train(train, log) != cli::kExitOk) return {false, "training failed"};

  cli::SimulateConfig sim;
  sim.out_dir = (dir / "eval").string();
  sim.seed = 2024;
  sim.count = 50;
  sim.ser_db = 0;
  sim.duration_s = 2.0;
  sim.jobs = jobs();
  if (cli::cmd_simulate(sim, log) != cli::kExitOk) return {false, "simulation failed"};

  cli::ProcessConfig proc;
  proc.manifest = (dir / "eval" / "manifest.json").string();
  proc.jobs = jobs();
  if (cli::cmd_process(proc, log) != cli::kExitOk) return {false, "STWS processing failed"};
  proc.attention = true;
  proc.checkpoint = train.out;
  if (cli::cmd_process(proc, log) != cli::kExitOk) return {false, "ASTWS processing failed"};

  const auto manifest = nlohmann::json::parse(slurp(proc.manifest));
  double mix_sum = 0.0, stws_sum = 0.0, astws_sum = 0.0;
  int stws_wins = 0, stws_n = 0, astws_wins = 0, astws_n = 0;
  for (const auto& b : manifest["bundles"]) {
    const fs::path bundle = dir / "eval" / b["dir"].get<std::string>();
    const auto near = read_wav((bundle / "near.wav").string()).samples;
    const double mix = sdr(near, read_wav((bundle / "mic.wav").string()).samples);
    const double stws = sdr(near, read_wav((bundle / "out_stws.wav").string()).samples);
    const double astws = sdr(near, read_wav((bundle / "out_astws.wav").string()).samples);
    mix_sum += mix;
    stws_sum += stws;
    astws_sum += astws;
    if (stws != mix) {
      ++stws_n;
      stws_wins += stws > mix;
    }
    if (astws != stws) {
      ++astws_n;
      astws_wins += astws > stws;
    }
  }
  const double n = static_cast<double>(manifest["bundles"].size());
  const double p_stws = sign_test_p(stws_wins, stws_n);
  const double p_astws = sign_test_p(astws_wins, astws_n);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  fs::remove_all(dir);
  const bool pass = n == 50 && astws_sum > stws_sum && stws_sum > mix_sum && p_stws < 0.05 &&
                    p_astws < 0.05 && seconds < 600.0;
  return {pass, "mean SDR mix " + fmt("%.2f", mix_sum / n) + " < STWS " +
                    fmt("%.2f", stws_sum / n) + " < ASTWS " + fmt("%.2f", astws_sum / n) +
                    " dB; sign tests STWS>mix " + std::to_string(stws_wins) + "/" +
                    std::to_string(stws_n) + " p=" + fmt("%.1e", p_stws) + ", ASTWS>STWS " +
                    std::to_string(astws_wins) + "/" + std::to_string(astws_n) +
                    " p=" + fmt("%.1e", p_astws) + "; " + fmt("%.0f", seconds) + " s (< 600)"};
}

// 6. STFT analysis/synthesis round trip.
Outcome stft_round_trip() {
  double worst = 0.0;
  for (size_t n : {16000u, 16037u, 80000u}) {
    const auto x = noise(n, n);
    const auto y = istft(stft(x), n);
    double err = 0.0, ref = 0.0;
    for (size_t i = 320; i + 320 < n; ++i) {
      err += (x[i] - y[i]) * (x[i] - y[i]);
      ref += x[i] * x[i];
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  return {worst <= 1e-6, "interior relative RMS error " + fmt("%.2e", worst) + " (<= 1e-6)"};
}

// 7. Loss identities and SER mixing.
Outcome loss_identities() {
  // Zero-mean orthonormal u, w; estimate 0.6 u + 0.8 w has cos = 0.6.
  auto center_normalize = [](std::vector<double> v) {
    double mean = 0.0;
    for (double a : v) mean += a;
    mean /= static_cast<double>(v.size());
    for (double& a : v) a -= mean;
    const double norm = std::sqrt(energy(v));
    for (double& a : v) a /= norm;
    return v;
  };
  const auto u = center_normalize(noise(8000, 1));
  auto w = noise(8000, 2);
  double dot = 0.0;
  for (size_t i = 0; i < u.size(); ++i) dot += u[i] * w[i];
  for (size_t i = 0; i < u.size(); ++i) w[i] -= dot * u[i];
  w = center_normalize(w);
  std::vector<double> est(u.size());
  for (size_t i = 0; i < u.size(); ++i) est[i] = 0.6 * u[i] + 0.8 * w[i];
  const double s_err = std::abs(s_sisnr(u, est) - 10.0 * std::log10(4.0));

  const Spectrogram spec = stft(noise(16000, 3));
  const double mag = mag_loss(spec, spec);
  const double ri = ri_loss(spec, spec);

  double ser_err = 0.0;
  const auto far = speech_like(32000, 5);
  const auto near = speech_like(32000, 6);
  for (int ser = -10; ser <= 10; ser += 5) {
    Scenario s;
    s.ser_db = ser;
    s.max_rir_seconds = 0.2;
    const RenderedScenario r = render_scenario(s, far, near);
    ser_err = std::max(ser_err, std::abs(10.0 * std::log10(energy(r.near) / energy(r.echo)) - ser));
  }
  return {s_err <= 1e-9 && mag == 0.0 && ri == 0.0 && ser_err <= 0.01,
          "s_sisnr err " + fmt("%.2e", s_err) + " (<= 1e-9); mag " + fmt("%g", mag) + ", ri " +
              fmt("%g", ri) + " (== 0); SER err " + fmt("%.2e", ser_err) + " dB (<= 0.01)"};
}

// 8. simulate + process twice with the same config and seed.
Outcome determinism() {
  const fs::path dir = scratch_dir("determinism");
  std::ostringstream log;
  for (const char* run : {"a", "b"}) {
    cli::SimulateConfig sim;
    sim.out_dir = (dir / run).string();
    sim.seed = 77;
    sim.count = 3;
    sim.duration_s = 2.0;
    sim.jobs = std::string(run) == "a" ? 1 : 4;
    if (cli::cmd_simulate(sim, log) != cli::kExitOk) return {false, "simulate failed"};
    cli::ProcessConfig proc;
    proc.manifest = (dir / run / "manifest.json").string();
    proc.jobs = sim.jobs;
    if (cli::cmd_process(proc, log) != cli::kExitOk) return {false, "process failed"};
  }
  int files = 0, mismatches = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (entry.path().extension() != ".wav") continue;
    const fs::path other = dir / "b" / fs::relative(entry.path(), dir / "a");
    ++files;
    if (slurp(entry.path()) != slurp(other)) ++mismatches;
  }
  fs::remove_all(dir);
  return {files > 0 && mismatches == 0,
          std::to_string(files) + " WAV files, " + std::to_string(mismatches) +
              " differ (1 vs 4 workers)"};
}

}  // namespace
}  // namespace astws

int main() {
  struct Criterion {
    const char* name;
    std::function<astws::Outcome()> run;
  };
  const Criterion criteria[] = {
      {"mixture SDR equals SER", astws::mixture_sdr},
      {"linear cancellation floor", astws::linear_floor},
      {"solve matches dense least squares", astws::oracle_equivalence},
      {"attention gradient check", astws::gradients},
      {"ablation ordering mix < STWS < ASTWS", astws::ablation},
      {"STFT round trip", astws::stft_round_trip},
      {"loss identities and SER mixing", astws::loss_identities},
      {"simulate + process determinism", astws::determinism},
  };
  int failed = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    astws::Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", index, c.name,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
