#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "astws/attention.hpp"
#include "gtest/gtest.h"
#include "test_util.h"

namespace astws {
namespace {

// Echo = one-tap delayed far end, mic = echo + bursty near end. The near
// end is active in a few blocks of frames, so reweighting over time helps.
TrainingSet toy_set(int bins, int frames, int taps, int window, std::uint64_t seed) {
  const Spectrogram far = test::random_spectrogram(frames, bins, seed);
  const Spectrogram near = test::random_spectrogram(frames, bins, seed + 1);
  StftConfig cfg;
  Spectrogram echo(frames, bins, cfg), mic(frames, bins, cfg);
  for (int t = 0; t < frames; ++t) {
    const bool talking = (t / 8) % 2 == 1;
    for (int f = 0; f < bins; ++f) {
      echo(t, f) = t >= 1 ? 0.7 * far(t - 1, f) : Complex(0.0);
      mic(t, f) = echo(t, f) + (talking ? 2.0 * near(t, f) : Complex(0.0));
    }
  }
  TrainingSet set{taps, window, {}};
  std::vector<int> all(bins);
  for (int f = 0; f < bins; ++f) all[f] = f;
  add_training_utterance(set, far, mic, echo, all);
  return set;
}

TEST(AttentionTrainTest, GradientCheckOverSeeds) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const GradCheckResult r = gradient_check(random_params(2, seed), AttentionOptions{}, seed);
    EXPECT_LE(r.max_rel_error, 1e-4)
        << "seed " << seed << " worst " << r.worst_tensor << "[" << r.worst_index << "]";
    EXPECT_EQ(r.per_tensor.size(), 13u);
  }
}

TEST(AttentionTrainTest, GradientCheckWithContextAndShortWindow) {
  AttentionOptions o;
  o.window_frames = 2;
  o.context_frames = 2;
  const GradCheckResult r = gradient_check(random_params(3, 7), o, 7, 2, 6);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_tensor;
}

TEST(AttentionTrainTest, TrainingReducesLoss) {
  AttentionOptions o;
  o.window_frames = 10;
  const TrainingSet set = toy_set(16, 50, 4, 10, 100);
  const TrainResult r = train_surrogate(AttentionParams::initialize(4), o, set, TrainConfig{});
  ASSERT_EQ(r.loss.size(), 201u);
  EXPECT_LT(r.smoothed_loss.back(), 0.7 * r.loss.front())
      << "initial " << r.loss.front() << " final " << r.smoothed_loss.back();
  EXPECT_DOUBLE_EQ(surrogate_loss(r.params, o, set), r.smoothed_loss.back());
  for (size_t i = 1; i < r.smoothed_loss.size(); ++i) {
    EXPECT_LE(r.smoothed_loss[i], r.smoothed_loss[i - 1]);
  }
}

TEST(AttentionTrainTest, ZeroLearningRateKeepsParameters) {
  AttentionOptions o;
  o.window_frames = 10;
  const TrainingSet set = toy_set(4, 30, 2, 10, 200);
  const AttentionParams init = AttentionParams::initialize(2);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.learning_rate = 0.0;
  const TrainResult r = train_surrogate(init, o, set, cfg);
  for (double l : r.loss) EXPECT_EQ(l, r.loss.front());
  std::vector<std::vector<double>> a, b;
  init.for_each([&](std::string_view, const std::vector<double>& t) { a.push_back(t); });
  r.params.for_each([&](std::string_view, const std::vector<double>& t) { b.push_back(t); });
  EXPECT_EQ(a, b);
}

TEST(AttentionTrainTest, TrainingIsDeterministic) {
  AttentionOptions o;
  o.window_frames = 10;
  const TrainingSet set = toy_set(8, 30, 2, 10, 300);
  TrainConfig cfg;
  cfg.steps = 10;
  const TrainResult a = train_surrogate(AttentionParams::initialize(2), o, set, cfg);
  const TrainResult b = train_surrogate(AttentionParams::initialize(2), o, set, cfg);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.params.w_q, b.params.w_q);
  EXPECT_EQ(a.params.v_gate, b.params.v_gate);
}

TEST(AttentionTrainTest, NonFiniteLossIsReported) {
  AttentionOptions o;
  o.window_frames = 10;
  TrainingSet set = toy_set(2, 20, 2, 10, 400);
  set.bins[1].v[5] = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.steps = 1;
  EXPECT_THROW(train_surrogate(AttentionParams::initialize(2), o, set, cfg), DataError);
}

TEST(AttentionTrainTest, LossRejectsMismatchedSet) {
  AttentionOptions o;
  o.window_frames = 10;
  const TrainingSet set = toy_set(2, 20, 2, 10, 500);
  EXPECT_THROW(surrogate_loss(AttentionParams::initialize(3), o, set), InputError);
  o.window_frames = 5;
  EXPECT_THROW(surrogate_loss(AttentionParams::initialize(2), o, set), InputError);
  EXPECT_THROW(surrogate_loss(AttentionParams::initialize(2), o, TrainingSet{2, 5, {}}),
               InputError);
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("astws_ckpt_" + std::string(::testing::UnitTest::GetInstance()
                                            ->current_test_info()
                                            ->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const char* name) const { return (dir_ / name).string(); }

  static std::string read(const std::string& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  static void write(const std::string& p, const std::string& text) {
    std::ofstream(p) << text;
  }

  std::filesystem::path dir_;
};

TEST_F(CheckpointTest, RoundTripIsExact) {
  Checkpoint ck;
  ck.params = random_params(3, 77);
  ck.params.w_k[2] = 1.0 / 3.0;
  ck.options.window_frames = 42;
  ck.options.context_frames = 7;
  ck.seed = 123456789012345ULL;
  save_checkpoint(path("a.json"), ck);
  const Checkpoint back = load_checkpoint(path("a.json"));
  EXPECT_EQ(back.seed, ck.seed);
  EXPECT_EQ(back.options.window_frames, 42);
  EXPECT_EQ(back.options.context_frames, 7);
  std::vector<std::vector<double>> a, b;
  ck.params.for_each([&](std::string_view, const std::vector<double>& t) { a.push_back(t); });
  back.params.for_each([&](std::string_view, const std::vector<double>& t) { b.push_back(t); });
  EXPECT_EQ(a, b);
}

TEST_F(CheckpointTest, CorruptedTensorIsNamed) {
  Checkpoint ck;
  ck.params = AttentionParams::initialize(2);
  save_checkpoint(path("a.json"), ck);
  std::string text = read(path("a.json"));
  const size_t at = text.find("\"b_k\"");
  ASSERT_NE(at, std::string::npos);
  const size_t data = text.find("\"data\"", at);
  const size_t open = text.find('[', data);
  const size_t first_end = text.find_first_of(",]", open + 1);
  text.replace(open + 1, first_end - open - 1, "null");
  write(path("b.json"), text);
  try {
    load_checkpoint(path("b.json"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("b_k"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, MissingAndMalformedFilesAreRejected) {
  EXPECT_THROW(load_checkpoint(path("absent.json")), ConfigError);
  write(path("bad.json"), "{not json");
  EXPECT_THROW(load_checkpoint(path("bad.json")), ConfigError);
  write(path("fmt.json"), R"({"format": "other", "version": 1})");
  EXPECT_THROW(load_checkpoint(path("fmt.json")), ConfigError);
}

TEST_F(CheckpointTest, WrongShapeIsNamed) {
  Checkpoint ck;
  ck.params = AttentionParams::initialize(2);
  save_checkpoint(path("a.json"), ck);
  std::string text = read(path("a.json"));
  const size_t at = text.find("\"taps\": 2");
  ASSERT_NE(at, std::string::npos);
  text.replace(at, 9, "\"taps\": 3");
  write(path("b.json"), text);
  try {
    load_checkpoint(path("b.json"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("q_gate"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace astws
