#include "astws/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "astws/fft.hpp"
#include "json.hpp"

namespace astws {
namespace {

bool on_half_grid(double v) {
  return std::abs(v * 2.0 - std::round(v * 2.0)) < 1e-9;
}

double power(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return x.empty() ? 0.0 : e / x.size();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

const char* kind_name(Nonlinearity::Kind k) {
  switch (k) {
    case Nonlinearity::Kind::kHardClip:
      return "hard_clip";
    case Nonlinearity::Kind::kSigmoidal:
      return "sigmoidal";
    case Nonlinearity::Kind::kNone:
      break;
  }
  return "none";
}

}  // namespace

double Scenario::mic_src_distance() const {
  double d2 = 0.0;
  for (int i = 0; i < 3; ++i) d2 += (mic_pos[i] - src_pos[i]) * (mic_pos[i] - src_pos[i]);
  return std::sqrt(d2);
}

void Scenario::validate() const {
  static constexpr std::array<const char*, 3> kDims{"room.l", "room.w", "room.h"};
  static constexpr std::array<double, 3> kLo{3.0, 3.0, 3.0};
  static constexpr std::array<double, 3> kHi{8.0, 7.0, 5.0};
  for (int i = 0; i < 3; ++i) {
    if (!(room[i] >= kLo[i] - 1e-9 && room[i] <= kHi[i] + 1e-9) ||
        !on_half_grid(room[i])) {
      throw ConfigError(std::string("scenario: ") + kDims[i] + " = " + fmt(room[i]) +
                        " outside [" + fmt(kLo[i]) + ", " + fmt(kHi[i]) +
                        "] in 0.5 m steps");
    }
  }
  for (int i = 0; i < 3; ++i) {
    if (!(mic_pos[i] > 0.0 && mic_pos[i] < room[i])) {
      throw ConfigError("scenario: mic_pos[" + std::to_string(i) +
                        "] is not strictly inside the room");
    }
    if (!(src_pos[i] > 0.0 && src_pos[i] < room[i])) {
      throw ConfigError("scenario: src_pos[" + std::to_string(i) +
                        "] is not strictly inside the room");
    }
  }
  const double d = mic_src_distance();
  if (std::none_of(kMicSrcDistances.begin(), kMicSrcDistances.end(),
                   [&](double c) { return std::abs(c - d) < 1e-6; })) {
    throw ConfigError("scenario: mic-src distance " + fmt(d) +
                      " m not in {0.2, 0.3, 0.4, 0.5, 0.8}");
  }
  if (std::none_of(kT60Choices.begin(), kT60Choices.end(),
                   [&](double c) { return std::abs(c - t60) < 1e-9; })) {
    throw ConfigError("scenario: t60 " + fmt(t60) + " s not in {0.1, ..., 0.6}");
  }
  if (ser_db < -10 || ser_db > 10) {
    throw ConfigError("scenario: ser_db " + std::to_string(ser_db) +
                      " outside [-10, 10]");
  }
  if (nonlinearity.kind != Nonlinearity::Kind::kNone && !(nonlinearity.param > 0.0)) {
    throw ConfigError("scenario: nonlinearity parameter must be > 0");
  }
  if (sample_rate <= 0) throw ConfigError("scenario: sample_rate must be positive");
  if (max_rir_seconds && !(*max_rir_seconds > 0.0)) {
    throw ConfigError("scenario: max_rir_seconds must be > 0");
  }
}

std::string Scenario::to_json() const {
  nlohmann::ordered_json j;
  j["room"] = room;
  j["mic_pos"] = mic_pos;
  j["src_pos"] = src_pos;
  j["t60"] = t60;
  j["ser_db"] = ser_db;
  j["nonlinearity"] = {{"kind", kind_name(nonlinearity.kind)},
                       {"param", nonlinearity.param}};
  j["seed"] = seed;
  j["sample_rate"] = sample_rate;
  if (max_rir_seconds) j["max_rir_seconds"] = *max_rir_seconds;
  return j.dump(2);
}

Scenario Scenario::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: invalid JSON: ") + e.what());
  }
  Scenario s;
  auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("scenario: field '") + key + "' has the wrong type");
    }
  };
  get("room", s.room);
  get("mic_pos", s.mic_pos);
  get("src_pos", s.src_pos);
  get("t60", s.t60);
  get("ser_db", s.ser_db);
  get("seed", s.seed);
  get("sample_rate", s.sample_rate);
  if (j.contains("max_rir_seconds")) {
    double v = 0.0;
    get("max_rir_seconds", v);
    s.max_rir_seconds = v;
  }
  if (j.contains("nonlinearity")) {
    const auto& nl = j.at("nonlinearity");
    const std::string kind = nl.value("kind", "none");
    if (kind == "none") {
      s.nonlinearity = Nonlinearity::none();
    } else if (kind == "hard_clip") {
      s.nonlinearity = Nonlinearity::hard_clip(nl.value("param", 0.8));
    } else if (kind == "sigmoidal") {
      s.nonlinearity = Nonlinearity::sigmoidal(nl.value("param", 4.0));
    } else {
      throw ConfigError("scenario: nonlinearity.kind '" + kind + "' is unknown");
    }
  }
  return s;
}

double sabine_absorption(const Vec3& room, double t60) {
  const double volume = room[0] * room[1] * room[2];
  const double surface =
      2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2]);
  const double alpha = 0.161 * volume / (surface * t60);
  if (alpha > 1.0) {
    throw ConfigError("scenario: t60 " + fmt(t60) +
                      " s unreachable for this room (Sabine absorption " +
                      fmt(alpha) + " > 1)");
  }
  return alpha;
}

std::optional<double> min_feasible_t60(const Vec3& room) {
  for (double t60 : kT60Choices) {
    try {
      sabine_absorption(room, t60);
      return t60;
    } catch (const ConfigError&) {
    }
  }
  return std::nullopt;
}

double image_source_t60(const Vec3& room, double alpha, double rir_seconds) {
  // Image-source energy decays along direction u at rate
  // -ln(1 - alpha) c sum_i |u_i| / L_i. Average the truncated Schroeder
  // integral over a Fibonacci sphere and fit it like estimate_t60 does.
  constexpr int kDirections = 2048;
  constexpr int kSteps = 400;
  const double absorb = -std::log(1.0 - alpha);
  std::vector<double> rates(kDirections);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < kDirections; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / kDirections;
    const double rho = std::sqrt(1.0 - z * z);
    const double ux = rho * std::cos(golden * i);
    const double uy = rho * std::sin(golden * i);
    rates[i] = absorb * kSpeedOfSound *
               (std::abs(ux) / room[0] + std::abs(uy) / room[1] + std::abs(z) / room[2]);
  }
  // Schroeder curve on the fit grid. exp(-k t) over the evenly spaced steps
  // is a running product per direction.
  std::vector<double> edc(kSteps, 0.0);
  const double dt = rir_seconds / kSteps;
  for (double k : rates) {
    const double tail = std::exp(-k * rir_seconds);
    const double ratio = std::exp(-k * dt);
    double decay = 1.0;
    for (int i = 0; i < kSteps; ++i) {
      edc[i] += (decay - tail) / k;
      decay *= ratio;
    }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int i = 0; i < kSteps; ++i) {
    const double t = dt * i;
    const double db = 10.0 * std::log10(std::max(edc[i] / edc[0], 1e-300));
    if (db <= -5.0 && db >= -25.0) {
      sx += t;
      sy += db;
      sxx += t * t;
      sxy += t * db;
      ++count;
    }
  }
  if (count < 2) return 0.0;
  return -60.0 / ((count * sxy - sx * sy) / (count * sxx - sx * sx));
}

double image_source_absorption(const Vec3& room, double t60, double rir_seconds) {
  double lo = 1e-6;
  double hi = 1.0 - 1e-9;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    // Decay time falls as absorption rises.
    if (image_source_t60(room, mid, rir_seconds) > t60) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Rir image_method_rir(const Scenario& scenario) {
  scenario.validate();
  sabine_absorption(scenario.room, scenario.t60);
  const int fs = scenario.sample_rate;

  double seconds = std::min(1.0, 1.5 * scenario.t60);
  if (scenario.max_rir_seconds) seconds = std::min(seconds, *scenario.max_rir_seconds);
  const size_t length = static_cast<size_t>(std::ceil(seconds * fs));
  const double alpha =
      image_source_absorption(scenario.room, scenario.t60, std::min(1.0, 1.5 * scenario.t60));
  const double beta = std::sqrt(1.0 - alpha);
  Rir rir{std::vector<double>(length, 0.0), fs};

  const double max_dist = kSpeedOfSound * static_cast<double>(length) / fs;
  std::array<int, 3> reach{};
  for (int i = 0; i < 3; ++i) {
    reach[i] = static_cast<int>(std::ceil(max_dist / (2.0 * scenario.room[i]))) + 1;
  }
  const Vec3& rx = scenario.mic_pos;
  const Vec3& sx = scenario.src_pos;
  const Vec3& len = scenario.room;

  // Fixed loop order keeps the floating-point accumulation reproducible.
  for (int nx = -reach[0]; nx <= reach[0]; ++nx) {
    for (int qx = 0; qx <= 1; ++qx) {
      const double dx = (1 - 2 * qx) * sx[0] + 2.0 * nx * len[0] - rx[0];
      const int rx_count = std::abs(2 * nx - qx);
      for (int ny = -reach[1]; ny <= reach[1]; ++ny) {
        for (int qy = 0; qy <= 1; ++qy) {
          const double dy = (1 - 2 * qy) * sx[1] + 2.0 * ny * len[1] - rx[1];
          const int ry_count = std::abs(2 * ny - qy);
          for (int nz = -reach[2]; nz <= reach[2]; ++nz) {
            for (int qz = 0; qz <= 1; ++qz) {
              const double dz = (1 - 2 * qz) * sx[2] + 2.0 * nz * len[2] - rx[2];
              const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
              if (dist >= max_dist) continue;
              const long delay = std::lround(dist / kSpeedOfSound * fs);
              if (delay < 0 || static_cast<size_t>(delay) >= length) continue;
              const int reflections = rx_count + ry_count + std::abs(2 * nz - qz);
              rir.taps[delay] += std::pow(beta, reflections) /
                                 (4.0 * std::numbers::pi * std::max(dist, 1e-3));
            }
          }
        }
      }
    }
  }

  // 100 Hz high-pass from the original image-method formulation. All image
  // amplitudes are positive, so without it the dense tail builds up a DC
  // component that stretches the decay. The first arrival passes unchanged.
  const double w = 2.0 * std::numbers::pi * 100.0 / fs;
  const double r1 = std::exp(-w);
  const double b1 = 2.0 * r1 * std::cos(w);
  const double b2 = -r1 * r1;
  const double a1 = -(1.0 + r1);
  double y0 = 0.0, y1 = 0.0, y2 = 0.0;
  for (double& tap : rir.taps) {
    y2 = y1;
    y1 = y0;
    y0 = b1 * y1 + b2 * y2 + tap;
    tap = y0 + a1 * y1 + r1 * y2;
  }
  return rir;
}

double estimate_t60(const Rir& rir) {
  const size_t n = rir.taps.size();
  require_input(n > 1, "estimate_t60: RIR too short");
  std::vector<double> edc(n);
  double acc = 0.0;
  for (size_t i = n; i-- > 0;) {
    acc += rir.taps[i] * rir.taps[i];
    edc[i] = acc;
  }
  require_input(acc > 0.0, "estimate_t60: silent RIR");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  size_t count = 0;
  for (size_t i = 0; i < n; ++i) {
    const double db = 10.0 * std::log10(std::max(edc[i] / acc, 1e-300));
    if (db <= -5.0 && db >= -25.0) {
      const double t = static_cast<double>(i) / rir.sample_rate;
      sx += t;
      sy += db;
      sxx += t * t;
      sxy += t * db;
      ++count;
    }
  }
  require_input(count >= 2, "estimate_t60: decay does not span -5..-25 dB");
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  return -60.0 / slope;
}

std::vector<double> apply_nonlinearity(std::span<const double> x,
                                       const Nonlinearity& model) {
  std::vector<double> out(x.begin(), x.end());
  switch (model.kind) {
    case Nonlinearity::Kind::kNone:
      break;
    case Nonlinearity::Kind::kHardClip: {
      require_config(model.param > 0.0, "hard_clip: threshold must be > 0");
      double peak = 0.0;
      for (double v : x) peak = std::max(peak, std::abs(v));
      const double level = model.param * peak;
      for (double& v : out) v = std::clamp(v, -level, level);
      break;
    }
    case Nonlinearity::Kind::kSigmoidal: {
      require_config(model.param > 0.0, "sigmoidal: drive must be > 0");
      // Odd algebraic sigmoid x / (1 + |g x|^4)^(1/4): slope 1 at the origin,
      // saturates at +-1/g.
      const double g = model.param;
      for (double& v : out) {
        const double u = g * v;
        const double u2 = u * u;
        v = v / std::sqrt(std::sqrt(1.0 + u2 * u2));
      }
      break;
    }
  }
  return out;
}

MixResult mix_at_ser(std::span<const double> near, std::span<const double> echo,
                     double ser_db) {
  require_input(near.size() == echo.size(), "mix_at_ser: length mismatch");
  const double p_echo = power(echo);
  const double p_near = power(near);
  require_input(p_echo > 0.0, "mix_at_ser: echo has zero energy");
  require_input(p_near > 0.0, "mix_at_ser: near-end has zero energy, SER undefined");
  MixResult r;
  r.scale = std::sqrt(p_near / (p_echo * std::pow(10.0, ser_db / 10.0)));
  r.mic.resize(near.size());
  for (size_t i = 0; i < near.size(); ++i) r.mic[i] = near[i] + r.scale * echo[i];
  return r;
}

std::vector<double> convolve(std::span<const double> x, std::span<const double> h) {
  std::vector<double> out(x.size(), 0.0);
  if (x.empty() || h.empty()) return out;
  const size_t needed = x.size() + h.size() - 1;
  size_t n = 1;
  while (n < needed) n <<= 1;
  const RealFft fft(static_cast<int>(n));
  std::vector<double> bx(n, 0.0), bh(n, 0.0);
  std::copy(x.begin(), x.end(), bx.begin());
  std::copy(h.begin(), h.end(), bh.begin());
  std::vector<Complex> fx(fft.num_bins()), fh(fft.num_bins());
  fft.forward(bx, fx);
  fft.forward(bh, fh);
  for (size_t k = 0; k < fx.size(); ++k) fx[k] *= fh[k];
  fft.inverse(fx, bx);
  for (size_t i = 0; i < x.size(); ++i) out[i] = bx[i] / static_cast<double>(n);
  return out;
}

RenderedScenario render_with_rir(const Scenario& scenario,
                                 std::span<const double> rir,
                                 std::span<const double> far,
                                 std::span<const double> near) {
  require_input(far.size() == near.size(), "render: far/near length mismatch");
  require_input(!far.empty(), "render: empty signals");
  RenderedScenario out;
  out.scenario = scenario;
  out.far.assign(far.begin(), far.end());
  out.near.assign(near.begin(), near.end());
  out.rir_length = rir.size();
  const std::vector<double> driven = apply_nonlinearity(far, scenario.nonlinearity);
  std::vector<double> echo = convolve(driven, rir);
  if (power(near) == 0.0) {
    out.echo_scale = 1.0;
    out.mic = echo;
  } else {
    MixResult mix = mix_at_ser(near, echo, scenario.ser_db);
    out.echo_scale = mix.scale;
    out.mic = std::move(mix.mic);
    for (double& v : echo) v *= mix.scale;
  }
  out.echo = std::move(echo);
  return out;
}

RenderedScenario render_scenario(const Scenario& scenario,
                                 std::span<const double> far,
                                 std::span<const double> near) {
  const Rir rir = image_method_rir(scenario);
  return render_with_rir(scenario, rir.taps, far, near);
}

Scenario sample_scenario(std::uint64_t seed, const ScenarioSampler& sampler) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto grid = [&](double lo, double hi) {
    const int steps = static_cast<int>(std::lround((hi - lo) * 2.0));
    std::uniform_int_distribution<int> pick(0, steps);
    return lo + 0.5 * pick(rng);
  };

  Scenario s;
  s.seed = seed;
  s.max_rir_seconds = sampler.max_rir_seconds;
  for (;;) {
    s.room = {grid(3.0, 8.0), grid(3.0, 7.0), grid(3.0, 5.0)};
    std::vector<double> feasible;
    for (double t : kT60Choices) {
      if (sampler.t60 && std::abs(*sampler.t60 - t) > 1e-9) continue;
      if (0.161 * s.room[0] * s.room[1] * s.room[2] /
              (2.0 * (s.room[0] * s.room[1] + s.room[0] * s.room[2] +
                      s.room[1] * s.room[2]) * t) <= 1.0) {
        feasible.push_back(t);
      }
    }
    if (feasible.empty()) continue;
    std::uniform_int_distribution<size_t> pick(0, feasible.size() - 1);
    s.t60 = feasible[pick(rng)];
    break;
  }

  std::uniform_int_distribution<size_t> pick_d(0, kMicSrcDistances.size() - 1);
  const double d = kMicSrcDistances[pick_d(rng)];
  constexpr double kMargin = 0.5;
  for (;;) {
    for (int i = 0; i < 3; ++i) {
      s.mic_pos[i] = kMargin + unit(rng) * (s.room[i] - 2.0 * kMargin);
    }
    const double z = 2.0 * unit(rng) - 1.0;
    const double phi = 2.0 * std::numbers::pi * unit(rng);
    const double rho = std::sqrt(1.0 - z * z);
    const Vec3 dir{rho * std::cos(phi), rho * std::sin(phi), z};
    bool inside = true;
    for (int i = 0; i < 3; ++i) {
      s.src_pos[i] = s.mic_pos[i] + d * dir[i];
      inside = inside && s.src_pos[i] > 0.1 && s.src_pos[i] < s.room[i] - 0.1;
    }
    if (inside) break;
  }

  if (sampler.ser_db) {
    s.ser_db = *sampler.ser_db;
  } else {
    std::uniform_int_distribution<int> ser(-10, 10);
    s.ser_db = ser(rng);
  }
  if (unit(rng) < sampler.nonlinear_fraction) {
    s.nonlinearity = unit(rng) < 0.5 ? Nonlinearity::hard_clip(0.8)
                                     : Nonlinearity::sigmoidal(4.0);
  }
  return s;
}

}  // namespace astws
