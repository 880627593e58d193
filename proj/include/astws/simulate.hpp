#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "astws/common.hpp"

namespace astws {

using Vec3 = std::array<double, 3>;

struct Nonlinearity {
  enum class Kind { kNone, kHardClip, kSigmoidal };
  Kind kind = Kind::kNone;
  // kHardClip: clip level as a fraction of the peak (default 0.8).
  // kSigmoidal: drive g (default 4).
  double param = 0.0;

  static Nonlinearity none() { return {}; }
  static Nonlinearity hard_clip(double threshold = 0.8) {
    return {Kind::kHardClip, threshold};
  }
  static Nonlinearity sigmoidal(double drive = 4.0) {
    return {Kind::kSigmoidal, drive};
  }
  friend bool operator==(const Nonlinearity&, const Nonlinearity&) = default;
};

struct Scenario {
  Vec3 room{5.0, 4.0, 3.0};  // l, w, h in meters
  Vec3 mic_pos{2.0, 2.0, 1.5};
  Vec3 src_pos{2.5, 2.0, 1.5};
  double t60 = 0.3;          // seconds
  int ser_db = 0;
  Nonlinearity nonlinearity;
  std::uint64_t seed = 0;
  int sample_rate = 16000;
  // Extra cap on the RIR length in seconds, on top of min(1 s, 1.5 t60).
  std::optional<double> max_rir_seconds;

  double mic_src_distance() const;
  // Throws ConfigError naming the offending field.
  void validate() const;

  std::string to_json() const;
  static Scenario from_json(const std::string& text);

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct Rir {
  std::vector<double> taps;
  int sample_rate = 16000;
};

constexpr double kSpeedOfSound = 343.0;

// Sabine absorption for the room and t60; throws ConfigError when it
// exceeds 1.
double sabine_absorption(const Vec3& room, double t60);
// Smallest t60 in `choices` reachable in the room, if any.
std::optional<double> min_feasible_t60(const Vec3& room);

// Schroeder-fit T60 (same -5..-25 dB fit as estimate_t60) predicted for
// the image-source decay of a shoebox with uniform absorption `alpha` and an
// RIR truncated at `rir_seconds`.
double image_source_t60(const Vec3& room, double alpha, double rir_seconds);
// Absorption at which image_source_t60 equals t60 (bisection).
double image_source_absorption(const Vec3& room, double t60, double rir_seconds);

// Allen-Berkley image-source RIR: nearest-sample delays, amplitude
// beta^reflections / (4 pi r), length min(1 s, 1.5 t60[, max_rir_seconds]).
// Feasibility follows Sabine's formula (ConfigError when its absorption
// exceeds 1); the uniform absorption itself is image_source_absorption, so
// the generated decay matches t60.
Rir image_method_rir(const Scenario& scenario);

// T60 estimated from the Schroeder decay curve by a line fit over -5..-25 dB,
// extrapolated to -60 dB.
double estimate_t60(const Rir& rir);

std::vector<double> apply_nonlinearity(std::span<const double> x,
                                       const Nonlinearity& model);

struct MixResult {
  std::vector<double> mic;
  double scale = 1.0;  // factor applied to the echo
};

// Scales `echo` so that 10 log10(P_near / P_scaled_echo) = ser_db.
MixResult mix_at_ser(std::span<const double> near, std::span<const double> echo,
                     double ser_db);

// Linear convolution truncated to x.size() samples (causal, aligned).
std::vector<double> convolve(std::span<const double> x, std::span<const double> h);

struct RenderedScenario {
  Scenario scenario;
  std::vector<double> far;
  std::vector<double> near;
  std::vector<double> echo;  // echo component as it appears in mic
  std::vector<double> mic;
  double echo_scale = 1.0;
  size_t rir_length = 0;
};

// echo = rir * nonlinearity(far), mixed with near at the scenario's SER.
// With an all-zero near-end the echo is left at unit scale (far-end
// single-talk).
RenderedScenario render_scenario(const Scenario& scenario,
                                 std::span<const double> far,
                                 std::span<const double> near);

// Same, with an explicit impulse response.
RenderedScenario render_with_rir(const Scenario& scenario,
                                 std::span<const double> rir,
                                 std::span<const double> far,
                                 std::span<const double> near);

// Amplitude-modulated, formant-filtered noise with pauses, peak 0.5.
std::vector<double> speech_like(size_t num_samples, std::uint64_t seed,
                                int sample_rate = 16000);

struct ScenarioSampler {
  std::optional<int> ser_db;          // fixed SER, else uniform integer [-10, 10]
  std::optional<double> t60;          // fixed T60, else uniform over feasible set
  double nonlinear_fraction = 0.9;
  std::optional<double> max_rir_seconds;
};

// Random scenario over the room grid. Rooms where the requested T60 is
// unreachable are redrawn.
Scenario sample_scenario(std::uint64_t seed, const ScenarioSampler& sampler = {});

inline constexpr std::array<double, 5> kMicSrcDistances{0.2, 0.3, 0.4, 0.5, 0.8};
inline constexpr std::array<double, 6> kT60Choices{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};

}  // namespace astws
