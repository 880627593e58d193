#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "astws/common.hpp"
#include "astws/stft.hpp"
#include "astws/wiener.hpp"

namespace astws {

// Learnable parameters of the gated attention that reweights the Wiener
// statistics. All linear maps are y = W z + b with W row-major [out x in].
//
//   Q1 = LN_q(W_q unfold(|X|^p) + b_q) * sigmoid(q_gate)
//   K1 = LN_k(W_k conv(|D|^p) + b_k)  * sigmoid(k_gate)
//   V1 = V * sigmoid(v_gate)
//   A  = softmax(Q1 K1^T / sqrt(m)) V1      (per bin, over time, causal)
//
// conv is the pointwise expansion of the single mic channel to m channels.
struct AttentionParams {
  int taps = 0;
  std::vector<double> q_gate;         // [m]
  std::vector<double> k_gate;         // [m]
  std::vector<double> v_gate;         // [2 m^2 + 2 m]
  std::vector<double> w_q, b_q;       // [m x m], [m]
  std::vector<double> w_k, b_k;       // [m x m], [m]
  std::vector<double> ln_q_scale, ln_q_shift;  // [m]
  std::vector<double> ln_k_scale, ln_k_shift;  // [m]
  std::vector<double> conv_k_weight, conv_k_bias;  // [m]

  // Zero-filled tensors of the right shapes (also used for gradients).
  static AttentionParams zeros(int taps);
  // Gates 0, LN identity, projections uniform in +-1/sqrt(fan_in).
  static AttentionParams initialize(int taps, std::uint64_t seed = 17);

  // Visits every tensor in a fixed order with its checkpoint name.
  template <typename Fn>
  void for_each(Fn&& fn) {
    fn(std::string_view("q_gate"), q_gate);
    fn(std::string_view("k_gate"), k_gate);
    fn(std::string_view("v_gate"), v_gate);
    fn(std::string_view("w_q"), w_q);
    fn(std::string_view("b_q"), b_q);
    fn(std::string_view("w_k"), w_k);
    fn(std::string_view("b_k"), b_k);
    fn(std::string_view("ln_q_scale"), ln_q_scale);
    fn(std::string_view("ln_q_shift"), ln_q_shift);
    fn(std::string_view("ln_k_scale"), ln_k_scale);
    fn(std::string_view("ln_k_shift"), ln_k_shift);
    fn(std::string_view("conv_k_weight"), conv_k_weight);
    fn(std::string_view("conv_k_bias"), conv_k_bias);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    const_cast<AttentionParams*>(this)->for_each(
        [&](std::string_view name, std::vector<double>& t) {
          fn(name, static_cast<const std::vector<double>&>(t));
        });
  }

  // this += scale * other, tensor by tensor.
  void add(const AttentionParams& other, double scale = 1.0);

  size_t expected_size(std::string_view name) const;
  size_t num_values() const;
  // Throws ConfigError naming the first tensor with a bad shape and
  // DataError naming the first tensor with a non-finite entry.
  void validate() const;
};

struct AttentionOptions {
  int window_frames = 100;   // L: frames summed into each statistic
  int context_frames = 10;   // causal attention span; 0 = all past frames
  double compression = 0.5;  // exponent of the |.|^p Q/K features
  bool self_only = false;    // mask every position except tau = t
  bool unit_gates = false;   // replace every sigmoid gate by 1

  void validate() const;
};

// Per-(bin, frame) rank-one statistics packed with StatsLayout,
// layout [bins x frames x width].
struct StatsFeature {
  int bins = 0;
  int frames = 0;
  int taps = 0;
  std::vector<double> data;

  size_t width() const { return StatsLayout{taps}.width(); }
  std::span<double> row(int f, int t) {
    return {data.data() + (static_cast<size_t>(f) * frames + t) * width(),
            width()};
  }
  std::span<const double> row(int f, int t) const {
    return {data.data() + (static_cast<size_t>(f) * frames + t) * width(),
            width()};
  }
  std::span<const double> bin(int f) const {
    return {data.data() + static_cast<size_t>(f) * frames * width(),
            static_cast<size_t>(frames) * width()};
  }
  std::span<double> bin(int f) {
    return {data.data() + static_cast<size_t>(f) * frames * width(),
            static_cast<size_t>(frames) * width()};
  }
};

StatsFeature pack_stats(const UnfoldedFarEnd& x_unf, const Spectrogram& d);

// Windowed attention-enhanced statistics, packed, [bins x frames x width].
StatsFeature attention_forward_packed(const AttentionParams& params,
                                      const AttentionOptions& options,
                                      const Spectrogram& far,
                                      const Spectrogram& mic,
                                      const StatsFeature& v_feat);

// Same, unpacked to Hermitian-symmetrized Wiener statistics.
WienerStats attention_forward(const AttentionParams& params,
                              const AttentionOptions& options,
                              const Spectrogram& far, const Spectrogram& mic,
                              const StatsFeature& v_feat);

// Gradient of sum(upstream * attention_forward_packed(...)) w.r.t. every
// parameter tensor. `upstream` has the shape of the packed output.
AttentionParams attention_backward(const AttentionParams& params,
                                   const AttentionOptions& options,
                                   const Spectrogram& far,
                                   const Spectrogram& mic,
                                   const StatsFeature& v_feat,
                                   const StatsFeature& upstream);

// Single-bin kernels shared by the full-spectrogram API, the pipeline and
// the trainer. `v` is the packed rank-one statistics of the bin,
// [frames x width]; `out` and `upstream` have the same shape.
namespace attention_kernel {
void forward_bin(const AttentionParams& params, const AttentionOptions& options,
                 std::span<const Complex> far, std::span<const Complex> mic,
                 std::span<const double> v, std::span<double> out);
// Accumulates into `grads`.
void backward_bin(const AttentionParams& params, const AttentionOptions& options,
                  std::span<const Complex> far, std::span<const Complex> mic,
                  std::span<const double> v, std::span<const double> upstream,
                  AttentionParams& grads);
// sum |forward - target|^2 over the bin. When `grads` is non-null, adds the
// gradient of grad_scale * (that sum) to it.
double squared_error_bin(const AttentionParams& params,
                         const AttentionOptions& options,
                         std::span<const Complex> far, std::span<const Complex> mic,
                         std::span<const double> v, std::span<const double> target,
                         double grad_scale, AttentionParams* grads);
}  // namespace attention_kernel

// StatsSource plugging attention-enhanced statistics into stws_pipeline.
// The options' window length must match the pipeline's.
class AttentionStatsSource final : public StatsSource {
 public:
  AttentionStatsSource(AttentionParams params, AttentionOptions options);
  void windowed_stats(const BinView& bin, std::span<double> out) const override;

  const AttentionParams& params() const { return params_; }
  const AttentionOptions& options() const { return options_; }

 private:
  AttentionParams params_;
  AttentionOptions options_;
};

// ---- surrogate training ----------------------------------------------------

// One frequency bin of one utterance: double-talk inputs plus the windowed
// statistics an echo-only mic signal would have produced.
struct TrainingBin {
  std::vector<Complex> far;
  std::vector<Complex> mic;
  std::vector<double> v;       // packed rank-one stats of (far, mic)
  std::vector<double> target;  // windowed packed stats of (far, echo)
};

struct TrainingSet {
  int taps = 0;
  int window_frames = 0;
  std::vector<TrainingBin> bins;
};

// Adds the selected bins of one utterance to `set`.
void add_training_utterance(TrainingSet& set, const Spectrogram& far,
                            const Spectrogram& mic, const Spectrogram& echo,
                            std::span<const int> bins);

// Normalized squared error sum |S - P|^2 / sum |P|^2 over the whole set.
// When `grads` is non-null it receives the gradient.
double surrogate_loss(const AttentionParams& params,
                      const AttentionOptions& options, const TrainingSet& set,
                      AttentionParams* grads = nullptr);

struct TrainConfig {
  int steps = 200;
  double learning_rate = 20.0;  // the loss is normalized, gradients are small
};

struct TrainResult {
  AttentionParams params;
  std::vector<double> loss;           // loss before each step, then final
  std::vector<double> smoothed_loss;  // running minimum of `loss`
};

// Plain gradient descent on surrogate_loss. Returns the parameters with the
// lowest recorded loss. Throws DataError on a non-finite loss.
TrainResult train_surrogate(AttentionParams params,
                            const AttentionOptions& options,
                            const TrainingSet& set, const TrainConfig& config);

// ---- gradient verification -------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  size_t worst_index = 0;
  std::vector<std::pair<std::string, double>> per_tensor;  // max rel err
};

// Analytic vs central-difference gradients of the surrogate loss on a random
// instance (bins, frames, taps), float64, step `h`. The relative error of
// an entry is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult gradient_check(const AttentionParams& params,
                               const AttentionOptions& options,
                               std::uint64_t seed, int bins = 3, int frames = 4,
                               double h = 1e-4);

// Random parameters with non-trivial gates, for gradient checks.
AttentionParams random_params(int taps, std::uint64_t seed);

// ---- checkpoints ------------------------------------------------------------

struct Checkpoint {
  AttentionParams params;
  AttentionOptions options;
  std::uint64_t seed = 17;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
// Throws ConfigError naming the offending tensor or field.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace astws
