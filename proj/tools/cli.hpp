#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "astws/simulate.hpp"
#include "astws/wav.hpp"

namespace astws::cli {

// Exit codes of every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Each command reads an optional JSON config file; command-line flags
// override its values. Unknown JSON keys are rejected.

struct SimulateConfig {
  std::string out_dir;
  std::uint64_t seed = 1;
  int count = 1;
  std::optional<int> ser_db;       // fixed SER for sampled scenarios
  std::vector<int> ser_sweep;      // one bundle per value and scenario
  std::optional<double> t60;
  double nonlinear_fraction = 0.9;
  std::optional<double> max_rir_seconds;
  double duration_s = 5.0;
  bool single_talk = false;        // silent near-end (ST_FE)
  WavFormat format = WavFormat::kFloat32;
  std::vector<Scenario> scenarios;  // explicit scenarios replace sampling
  std::string far_wav;             // optional recorded far-end source
  std::string near_wav;            // optional recorded near-end source
  int jobs = 1;
};

struct ProcessConfig {
  std::string far;
  std::string mic;
  std::string out;
  std::string bundle;        // directory holding far.wav and mic.wav
  std::string manifest;      // manifest.json written by simulate
  std::string out_name;      // file name inside bundles; default by mode
  int taps = 20;
  int window_frames = 100;
  double epsilon = 1e-3;
  bool attention = false;
  std::string checkpoint;    // trained attention; default init otherwise
  std::string filter_norms;  // optional CSV of per-frame filter norms
  WavFormat format = WavFormat::kFloat32;
  int jobs = 1;
};

struct EvaluateConfig {
  std::string manifest;
  std::vector<std::string> bundles;
  std::string processed = "out_stws.wav";
  std::string csv;
  std::string json;
};

struct GradcheckConfig {
  std::uint64_t seed = 1;
  int seeds = 5;
  int taps = 2;
  int bins = 3;
  int frames = 4;
  double step = 1e-4;
  double tolerance = 1e-4;
  std::string checkpoint;  // check at these parameters instead of random
};

struct TrainConfig {
  std::string out;
  std::uint64_t seed = 9000;
  std::uint64_t init_seed = 17;
  int scenarios = 4;
  double duration_s = 2.0;
  int ser_db = 0;
  int bin_stride = 8;
  int steps = 40;
  double learning_rate = 20.0;
  int taps = 20;
  int window_frames = 100;
  int context_frames = 10;
  std::string loss_csv;
};

int cmd_simulate(const SimulateConfig& config, std::ostream& out);
int cmd_process(const ProcessConfig& config, std::ostream& out);
int cmd_evaluate(const EvaluateConfig& config, std::ostream& out);
int cmd_gradcheck(const GradcheckConfig& config, std::ostream& out);
int cmd_train(const TrainConfig& config, std::ostream& out);

// Parses `args` (without the program name), runs the subcommand and maps
// errors to exit codes: ConfigError/InputError and usage errors -> 2,
// anything else -> 1.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace astws::cli
