#include "astws/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace astws {
namespace {

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double clamp_db(double db) {
  if (std::isnan(db)) return -kMetricClampDb;
  return std::clamp(db, -kMetricClampDb, kMetricClampDb);
}

std::vector<double> remove_mean(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= mean;
  return out;
}

void check_pair(std::span<const double> a, std::span<const double> b,
                const char* what) {
  require_input(a.size() == b.size(), std::string(what) + ": length mismatch");
  require_input(!a.empty(), std::string(what) + ": empty signals");
}

void check_spectrograms(const Spectrogram& a, const Spectrogram& b) {
  require_input(a.frames() == b.frames() && a.bins() == b.bins(),
                "spectral loss: shape mismatch");
  require_input(a.frames() * a.bins() > 0, "spectral loss: empty spectrogram");
}

}  // namespace

double erle(std::span<const double> mic, std::span<const double> out) {
  check_pair(mic, out, "erle");
  const double p_mic = energy(mic);
  require_input(p_mic > 0.0, "erle: zero mic energy");
  const double p_out = std::max(energy(out), 1e-12 * p_mic);
  return std::clamp(10.0 * std::log10(p_mic / p_out), 0.0, kMetricClampDb);
}

std::optional<double> erle_far_end_single_talk(std::span<const double> mic,
                                               std::span<const double> out,
                                               std::span<const double> near,
                                               int frame_len,
                                               double silence_dbfs) {
  check_pair(mic, out, "erle");
  require_input(near.size() == mic.size(), "erle: near length mismatch");
  require_config(frame_len > 0, "erle: frame_len must be positive");
  std::vector<double> sel_mic, sel_out;
  const double threshold = std::pow(10.0, silence_dbfs / 10.0);
  for (size_t start = 0; start < mic.size(); start += frame_len) {
    const size_t n = std::min<size_t>(frame_len, mic.size() - start);
    const double level = energy(near.subspan(start, n)) / n;
    if (level < threshold) {
      sel_mic.insert(sel_mic.end(), mic.begin() + start, mic.begin() + start + n);
      sel_out.insert(sel_out.end(), out.begin() + start, out.begin() + start + n);
    }
  }
  if (sel_mic.empty() || energy(sel_mic) == 0.0) return std::nullopt;
  return erle(sel_mic, sel_out);
}

double sdr(std::span<const double> reference, std::span<const double> estimate) {
  check_pair(reference, estimate, "sdr");
  const double p_ref = energy(reference);
  require_input(p_ref > 0.0, "sdr: zero reference");
  double p_err = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double e = reference[i] - estimate[i];
    p_err += e * e;
  }
  return clamp_db(10.0 * std::log10(p_ref / p_err));
}

double sisnr(std::span<const double> reference, std::span<const double> estimate) {
  check_pair(reference, estimate, "sisnr");
  const std::vector<double> s = remove_mean(reference);
  const std::vector<double> e = remove_mean(estimate);
  const double ss = energy(s);
  require_input(ss > 0.0, "sisnr: zero reference");
  double dot = 0.0;
  for (size_t i = 0; i < s.size(); ++i) dot += s[i] * e[i];
  const double alpha = dot / ss;
  double p_target = 0.0, p_noise = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double target = alpha * s[i];
    p_target += target * target;
    p_noise += (e[i] - target) * (e[i] - target);
  }
  return clamp_db(10.0 * std::log10(p_target / p_noise));
}

double s_sisnr(std::span<const double> reference, std::span<const double> estimate) {
  check_pair(reference, estimate, "s_sisnr");
  const std::vector<double> s = remove_mean(reference);
  const std::vector<double> e = remove_mean(estimate);
  const double ns = energy(s);
  const double ne = energy(e);
  require_input(ns > 0.0 && ne > 0.0, "s_sisnr: zero-norm input");
  double dot = 0.0;
  for (size_t i = 0; i < s.size(); ++i) dot += s[i] * e[i];
  const double c =
      std::clamp(dot / std::sqrt(ns * ne), -kCosineClamp, kCosineClamp);
  return 10.0 * std::log10((1.0 + c) / (1.0 - c));
}

double mag_loss(const Spectrogram& s, const Spectrogram& s_hat, double p) {
  check_spectrograms(s, s_hat);
  double acc = 0.0;
  for (size_t i = 0; i < s.data().size(); ++i) {
    const double d = std::pow(std::abs(s.data()[i]), p) -
                     std::pow(std::abs(s_hat.data()[i]), p);
    acc += d * d;
  }
  return acc / static_cast<double>(s.data().size());
}

double ri_loss(const Spectrogram& s, const Spectrogram& s_hat, double p) {
  check_spectrograms(s, s_hat);
  auto compress = [p](Complex z) {
    const double mag = std::abs(z);
    return mag > 0.0 ? std::polar(std::pow(mag, p), std::arg(z)) : Complex(0.0);
  };
  double acc = 0.0;
  for (size_t i = 0; i < s.data().size(); ++i) {
    acc += std::norm(compress(s.data()[i]) - compress(s_hat.data()[i]));
  }
  return acc / static_cast<double>(s.data().size());
}

LossTerms total_loss(std::span<const double> reference,
                     std::span<const double> estimate, const StftConfig& config,
                     double p) {
  check_pair(reference, estimate, "total_loss");
  const Spectrogram s = stft(reference, config);
  const Spectrogram s_hat = stft(estimate, config);
  return {ri_loss(s, s_hat, p), mag_loss(s, s_hat, p), s_sisnr(reference, estimate)};
}

EvalReport evaluate_utterance(const std::string& id, std::optional<int> ser_db,
                              std::span<const double> near,
                              std::span<const double> mic,
                              std::span<const double> processed,
                              const StftConfig& config) {
  check_pair(mic, processed, "evaluate");
  require_input(near.size() == mic.size(), "evaluate: near length mismatch");
  EvalReport r;
  r.id = id;
  r.ser_db = ser_db;
  const bool single_talk = energy(near) == 0.0;
  r.condition = single_talk ? "ST_FE" : "DT";
  if (single_talk) {
    if (energy(mic) > 0.0) r.erle_db = erle(mic, processed);
    return r;
  }
  r.erle_db = erle_far_end_single_talk(mic, processed, near, config.window_len);
  r.sdr_db = sdr(near, processed);
  r.sisnr_db = sisnr(near, processed);
  const std::vector<double> centered = remove_mean(processed);
  if (energy(centered) > 0.0) {
    const LossTerms loss = total_loss(near, processed, config);
    r.s_sisnr = loss.s_sisnr;
    r.mag_loss = loss.mag;
    r.ri_loss = loss.ri;
    r.total_loss = loss.total();
  }
  return r;
}

}  // namespace astws
