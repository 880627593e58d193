#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "astws/attention.hpp"
#include "astws/window_sum.hpp"
#include "parallel_errors.hpp"

namespace astws {
namespace {

std::vector<double> pack_bin(std::span<const Complex> far,
                             std::span<const Complex> mic, int taps) {
  const size_t width = StatsLayout{taps}.width();
  std::vector<double> rows(far.size() * width);
  std::vector<Complex> x(taps);
  for (size_t t = 0; t < far.size(); ++t) {
    for (int k = 0; k < taps; ++k) {
      x[k] = t >= static_cast<size_t>(k) ? far[t - k] : Complex(0.0);
    }
    pack_instantaneous(x, mic[t], std::span<double>(rows).subspan(t * width, width));
  }
  return rows;
}

}  // namespace

void add_training_utterance(TrainingSet& set, const Spectrogram& far,
                            const Spectrogram& mic, const Spectrogram& echo,
                            std::span<const int> bins) {
  require_config(set.taps >= 1 && set.window_frames >= 1,
                 "training set: taps and window_frames must be set");
  require_input(far.frames() == mic.frames() && far.frames() == echo.frames() &&
                    far.bins() == mic.bins() && far.bins() == echo.bins(),
                "training set: spectrogram shapes differ");
  const size_t width = StatsLayout{set.taps}.width();
  for (int f : bins) {
    require_input(f >= 0 && f < far.bins(), "training set: bin out of range");
    TrainingBin b;
    b.far = far.bin(f);
    b.mic = mic.bin(f);
    b.v = pack_bin(b.far, b.mic, set.taps);
    const std::vector<Complex> y = echo.bin(f);
    b.target = windowed_sums(pack_bin(b.far, y, set.taps), width,
                             set.window_frames);
    set.bins.push_back(std::move(b));
  }
}

double surrogate_loss(const AttentionParams& params,
                      const AttentionOptions& options, const TrainingSet& set,
                      AttentionParams* grads) {
  require_input(!set.bins.empty(), "surrogate_loss: empty training set");
  require_input(set.taps == params.taps, "surrogate_loss: tap count mismatch");
  require_input(set.window_frames == options.window_frames,
                "surrogate_loss: window length mismatch");
  double energy = 0.0;
  for (const auto& b : set.bins) {
    for (double x : b.target) energy += x * x;
  }
  require_input(energy > 0.0, "surrogate_loss: all-zero targets");

  const int n = static_cast<int>(set.bins.size());
  std::vector<double> losses(n, 0.0);
  std::vector<AttentionParams> per_bin;
  if (grads != nullptr) per_bin.assign(n, AttentionParams::zeros(params.taps));
  internal::ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const TrainingBin& b = set.bins[i];
    try {
      losses[i] = attention_kernel::squared_error_bin(
          params, options, b.far, b.mic, b.v, b.target, 1.0 / energy,
          grads != nullptr ? &per_bin[i] : nullptr);
    } catch (...) {
      errors.capture(i);
    }
  }
  errors.rethrow();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    loss += losses[i];
    if (grads != nullptr) grads->add(per_bin[i]);
  }
  return loss / energy;
}

TrainResult train_surrogate(AttentionParams params,
                            const AttentionOptions& options,
                            const TrainingSet& set, const TrainConfig& config) {
  params.validate();
  options.validate();
  require_config(config.steps >= 0, "train: steps must be >= 0");
  require_config(config.learning_rate >= 0.0, "train: learning rate must be >= 0");

  TrainResult result;
  AttentionParams best = params;
  double best_loss = std::numeric_limits<double>::infinity();
  auto record = [&](double loss) {
    if (!std::isfinite(loss)) {
      throw DataError("train: non-finite surrogate loss at step " +
                      std::to_string(result.loss.size()));
    }
    result.loss.push_back(loss);
    const double prev = result.smoothed_loss.empty() ? loss : result.smoothed_loss.back();
    result.smoothed_loss.push_back(std::min(prev, loss));
    if (loss < best_loss) {
      best_loss = loss;
      best = params;
    }
  };

  for (int step = 0; step < config.steps; ++step) {
    AttentionParams grads = AttentionParams::zeros(params.taps);
    record(surrogate_loss(params, options, set, &grads));
    params.add(grads, -config.learning_rate);
  }
  record(surrogate_loss(params, options, set));
  result.params = std::move(best);
  return result;
}

AttentionParams random_params(int taps, std::uint64_t seed) {
  AttentionParams p = AttentionParams::zeros(taps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  p.for_each([&](std::string_view, std::vector<double>& t) {
    for (double& x : t) x = normal(rng);
  });
  for (double& x : p.ln_q_scale) x += 1.0;
  for (double& x : p.ln_k_scale) x += 1.0;
  return p;
}

GradCheckResult gradient_check(const AttentionParams& params,
                               const AttentionOptions& options,
                               std::uint64_t seed, int bins, int frames,
                               double h) {
  params.validate();
  const int m = params.taps;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  StftConfig cfg;
  Spectrogram far(frames, bins, cfg), mic(frames, bins, cfg), echo(frames, bins, cfg);
  for (auto* s : {&far, &mic, &echo}) {
    for (auto& c : s->data()) c = Complex(normal(rng), normal(rng));
  }
  TrainingSet set{m, options.window_frames, {}};
  std::vector<int> all(bins);
  for (int f = 0; f < bins; ++f) all[f] = f;
  add_training_utterance(set, far, mic, echo, all);

  AttentionParams analytic = AttentionParams::zeros(m);
  surrogate_loss(params, options, set, &analytic);

  std::vector<const std::vector<double>*> grad_tensors;
  analytic.for_each(
      [&](std::string_view, const std::vector<double>& t) { grad_tensors.push_back(&t); });

  GradCheckResult result;
  AttentionParams probe = params;
  size_t ti = 0;
  probe.for_each([&](std::string_view name, std::vector<double>& t) {
    double tensor_max = 0.0;
    for (size_t j = 0; j < t.size(); ++j) {
      const double saved = t[j];
      t[j] = saved + h;
      const double up = surrogate_loss(probe, options, set);
      t[j] = saved - h;
      const double down = surrogate_loss(probe, options, set);
      t[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = (*grad_tensors[ti])[j];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-6});
      tensor_max = std::max(tensor_max, rel);
      if (rel > result.max_rel_error || result.worst_tensor.empty()) {
        result.max_rel_error = rel;
        result.worst_tensor = std::string(name);
        result.worst_index = j;
      }
    }
    result.per_tensor.emplace_back(std::string(name), tensor_max);
    ++ti;
  });
  return result;
}

}  // namespace astws
