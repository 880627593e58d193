#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "astws/common.hpp"
#include "astws/stft.hpp"

namespace astws {

inline constexpr double kMetricClampDb = 100.0;
inline constexpr double kCosineClamp = 1.0 - 1e-8;

// 10 log10(P_mic / P_out), P_out floored at 1e-12 P_mic, clamped to [0, 100].
double erle(std::span<const double> mic, std::span<const double> out);

// ERLE over the frames whose near-end level is below `silence_dbfs`
// (non-overlapping frames of `frame_len` samples). nullopt when no frame
// qualifies or the mic is silent on all of them.
std::optional<double> erle_far_end_single_talk(std::span<const double> mic,
                                               std::span<const double> out,
                                               std::span<const double> near,
                                               int frame_len = 320,
                                               double silence_dbfs = -60.0);

// 10 log10(|s|^2 / |s - s_hat|^2), clamped to [-100, 100].
double sdr(std::span<const double> reference, std::span<const double> estimate);

// Scale-invariant SNR of mean-removed signals, clamped to [-100, 100].
double sisnr(std::span<const double> reference, std::span<const double> estimate);

// 10 log10((1 + cos b) / (1 - cos b)), cos b clamped to +-(1 - 1e-8).
double s_sisnr(std::span<const double> reference, std::span<const double> estimate);

// Mean over T F of (|S|^p - |S_hat|^p)^2.
double mag_loss(const Spectrogram& s, const Spectrogram& s_hat, double p = 0.5);
// Mean over T F of | |S|^p e^{j angle S} - |S_hat|^p e^{j angle S_hat} |^2.
double ri_loss(const Spectrogram& s, const Spectrogram& s_hat, double p = 0.5);

struct LossTerms {
  double ri = 0.0;
  double mag = 0.0;
  double s_sisnr = 0.0;
  // Minimized objective: ri + mag - s_sisnr.
  double total() const { return ri + mag - s_sisnr; }
};

LossTerms total_loss(std::span<const double> reference,
                     std::span<const double> estimate,
                     const StftConfig& config = {}, double p = 0.5);

struct EvalReport {
  std::string id;
  std::string condition;  // "DT" or "ST_FE"
  std::optional<int> ser_db;
  std::optional<double> erle_db;
  std::optional<double> sdr_db;
  std::optional<double> sisnr_db;
  std::optional<double> s_sisnr;
  std::optional<double> mag_loss;
  std::optional<double> ri_loss;
  std::optional<double> total_loss;
};

// Scores `processed` against the near-end reference. Double-talk rows carry
// the SDR family and losses; far-end single-talk rows (silent near-end)
// carry ERLE only.
EvalReport evaluate_utterance(const std::string& id, std::optional<int> ser_db,
                              std::span<const double> near,
                              std::span<const double> mic,
                              std::span<const double> processed,
                              const StftConfig& config = {});

// One row per report; empty cells for undefined metrics.
std::string reports_to_csv(const std::vector<EvalReport>& reports);
// Mean and median of each metric per condition key ("DT_SER<n>", "ST_FE").
std::string reports_to_json(const std::vector<EvalReport>& reports);

}  // namespace astws
