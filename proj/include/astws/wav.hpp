#pragma once

#include <span>
#include <string>
#include <vector>

namespace astws {

enum class WavFormat { kPcm16, kFloat32 };

struct WavData {
  int sample_rate = 0;
  WavFormat format = WavFormat::kFloat32;
  std::vector<double> samples;
};

// Mono RIFF/WAVE. PCM16 samples are clamped to [-1, 1] and rounded.
void write_wav(const std::string& path, std::span<const double> samples,
               int sample_rate, WavFormat format = WavFormat::kFloat32);

// Reads mono 16-bit PCM or 32-bit float files. Throws InputError on
// anything else.
WavData read_wav(const std::string& path);

}  // namespace astws
