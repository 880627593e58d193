#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "astws/attention.hpp"
#include "astws/wav.hpp"
#include "gtest/gtest.h"
#include "json.hpp"
#include "test_util.h"

namespace astws::cli {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("astws_cli_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run_cli(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run(args, out_, err_);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  static void write(const std::string& p, const std::string& text) {
    std::ofstream(p) << text;
  }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

TEST_F(CliTest, SimulateAndProcessAreByteIdentical) {
  for (const char* run_dir : {"a", "b"}) {
    const std::string out = path(run_dir);
    ASSERT_EQ(run_cli({"simulate", "--out", out, "--seed", "7", "--count", "2", "--duration",
                       "1", "--max-rir", "0.1"}),
              kExitOk)
        << err_.str();
    ASSERT_EQ(run_cli({"process", "--manifest", out + "/manifest.json", "--m", "4"}), kExitOk)
        << err_.str();
  }
  const auto manifest = nlohmann::json::parse(slurp(path("a/manifest.json")));
  ASSERT_EQ(manifest["bundles"].size(), 2u);
  for (const auto& b : manifest["bundles"]) {
    const std::string dir = b["dir"].get<std::string>();
    for (const char* file : {"far.wav", "near.wav", "echo.wav", "mic.wav", "out_stws.wav",
                             "meta.json"}) {
      const std::string x = slurp(path("a/" + dir + "/" + file));
      ASSERT_FALSE(x.empty()) << dir << "/" << file;
      EXPECT_EQ(x, slurp(path("b/" + dir + "/" + file))) << dir << "/" << file;
    }
  }
}

TEST_F(CliTest, SerSweepWritesOneBundlePerValue) {
  ASSERT_EQ(run_cli({"simulate", "--out", path("s"), "--ser-sweep", "-10", "0", "10",
                     "--duration", "1", "--max-rir", "0.1"}),
            kExitOk)
      << err_.str();
  const auto manifest = nlohmann::json::parse(slurp(path("s/manifest.json")));
  ASSERT_EQ(manifest["bundles"].size(), 3u);
  std::vector<int> seen;
  for (const auto& b : manifest["bundles"]) {
    const auto meta =
        nlohmann::json::parse(slurp(path("s/" + b["dir"].get<std::string>() + "/meta.json")));
    const int ser = meta["scenario"]["ser_db"].get<int>();
    seen.push_back(ser);
    EXPECT_NEAR(meta["measured_ser_db"].get<double>(), ser, 0.01);
  }
  EXPECT_EQ(seen, (std::vector<int>{-10, 0, 10}));
}

TEST_F(CliTest, InvalidRoomIsAUsageErrorNamingTheField) {
  write(path("cfg.json"), R"({"out": ")" + path("o") + R"(", "scenarios": [
    {"room": [9.0, 4.0, 3.0], "mic_pos": [2.0, 2.0, 1.5], "src_pos": [2.5, 2.0, 1.5],
     "t60": 0.3}]})");
  EXPECT_EQ(run_cli({"simulate", "--config", path("cfg.json")}), kExitUsage);
  EXPECT_NE(err_.str().find("room.l"), std::string::npos) << err_.str();
  write(path("bad.json"), R"({"out": "x", "colour": 3})");
  EXPECT_EQ(run_cli({"simulate", "--config", path("bad.json")}), kExitUsage);
  EXPECT_NE(err_.str().find("colour"), std::string::npos) << err_.str();
  EXPECT_EQ(run_cli({"nonsense"}), kExitUsage);
}

TEST_F(CliTest, SilentFarEndPassesMicThrough) {
  const std::vector<double> far(16000, 0.0);
  const auto mic = test::white_noise(16000, 3, 0.1);
  write_wav(path("far.wav"), far, 16000);
  write_wav(path("mic.wav"), mic, 16000);
  ASSERT_EQ(run_cli({"process", "--far", path("far.wav"), "--mic", path("mic.wav"), "--out",
                     path("out.wav"), "--m", "4", "--filter-norms", path("norms.csv")}),
            kExitOk)
      << err_.str();
  const WavData in = read_wav(path("mic.wav"));
  const WavData out = read_wav(path("out.wav"));
  ASSERT_EQ(out.samples.size(), in.samples.size());
  for (size_t i = 0; i < in.samples.size(); ++i) {
    ASSERT_NEAR(out.samples[i], in.samples[i], 1e-6) << i;
  }
  const std::string norms = slurp(path("norms.csv"));
  EXPECT_EQ(norms.rfind("frame,filter_norm\n", 0), 0u);
  EXPECT_NE(norms.find("\n0,0\n"), std::string::npos);
}

TEST_F(CliTest, ProcessRejectsSampleRateMismatch) {
  write_wav(path("far.wav"), test::white_noise(800, 4), 8000);
  write_wav(path("mic.wav"), test::white_noise(1600, 5), 16000);
  EXPECT_EQ(run_cli({"process", "--far", path("far.wav"), "--mic", path("mic.wav"), "--out",
                     path("out.wav")}),
            kExitUsage);
}

TEST_F(CliTest, EvaluateEmptyListWritesHeaderOnly) {
  write(path("manifest.json"), R"({"bundles": []})");
  ASSERT_EQ(run_cli({"evaluate", "--manifest", path("manifest.json"), "--csv",
                     path("r.csv"), "--json", path("r.json")}),
            kExitOk)
      << err_.str();
  EXPECT_EQ(slurp(path("r.csv")),
            "id,condition,ser_db,erle_db,sdr_db,sisnr_db,s_sisnr,mag_loss,ri_loss,"
            "total_loss\n");
  EXPECT_EQ(nlohmann::json::parse(slurp(path("r.json")))["count"], 0);
}

TEST_F(CliTest, EvaluateMissingReferenceIsAUsageError) {
  ASSERT_EQ(run_cli({"simulate", "--out", path("s"), "--duration", "1", "--max-rir", "0.1"}),
            kExitOk);
  ASSERT_EQ(run_cli({"process", "--manifest", path("s/manifest.json"), "--m", "4"}), kExitOk);
  ASSERT_EQ(run_cli({"evaluate", "--manifest", path("s/manifest.json"), "--csv",
                     path("r.csv")}),
            kExitOk)
      << err_.str();
  const auto manifest = nlohmann::json::parse(slurp(path("s/manifest.json")));
  fs::remove(path("s/" + manifest["bundles"][0]["dir"].get<std::string>() + "/near.wav"));
  EXPECT_EQ(run_cli({"evaluate", "--manifest", path("s/manifest.json")}), kExitUsage);
  EXPECT_NE(err_.str().find("near.wav"), std::string::npos) << err_.str();
}

TEST_F(CliTest, GradcheckPassesAndIsReproducible) {
  ASSERT_EQ(run_cli({"gradcheck"}), kExitOk) << err_.str();
  const std::string first = out_.str();
  EXPECT_NE(first.find("PASS"), std::string::npos) << first;
  ASSERT_EQ(run_cli({"gradcheck"}), kExitOk);
  EXPECT_EQ(out_.str(), first);
}

TEST_F(CliTest, GradcheckReportsCorruptedCheckpoint) {
  Checkpoint ck;
  ck.params = AttentionParams::initialize(2);
  save_checkpoint(path("ck.json"), ck);
  std::string text = slurp(path("ck.json"));
  const size_t at = text.find("\"w_k\"");
  ASSERT_NE(at, std::string::npos);
  const size_t open = text.find('[', text.find("\"data\"", at));
  const size_t end = text.find_first_of(",]", open + 1);
  text.replace(open + 1, end - open - 1, "null");
  write(path("bad.json"), text);
  EXPECT_EQ(run_cli({"gradcheck", "--checkpoint", path("bad.json")}), kExitFailure);
  EXPECT_NE(out_.str().find("FAIL"), std::string::npos) << out_.str();
  EXPECT_NE(out_.str().find("w_k"), std::string::npos) << out_.str();
}

TEST_F(CliTest, TrainWritesALoadableCheckpoint) {
  ASSERT_EQ(run_cli({"train", "--out", path("ck.json"), "--scenarios", "1", "--duration", "1",
                     "--bin-stride", "64", "--steps", "3", "--m", "4", "--window-frames", "20",
                     "--loss-csv", path("loss.csv")}),
            kExitOk)
      << err_.str();
  const Checkpoint ck = load_checkpoint(path("ck.json"));
  EXPECT_EQ(ck.params.taps, 4);
  EXPECT_EQ(ck.options.window_frames, 20);
  EXPECT_EQ(ck.options.context_frames, 10);
  const std::string loss = slurp(path("loss.csv"));
  EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 5);  // header + 4 rows
  // A checkpoint whose m disagrees with the pipeline is refused.
  write_wav(path("far.wav"), test::white_noise(8000, 6), 16000);
  write_wav(path("mic.wav"), test::white_noise(8000, 7), 16000);
  EXPECT_EQ(run_cli({"process", "--far", path("far.wav"), "--mic", path("mic.wav"), "--out",
                     path("out.wav"), "--attention", "on", "--checkpoint", path("ck.json"),
                     "--m", "5"}),
            kExitUsage);
  EXPECT_EQ(run_cli({"process", "--far", path("far.wav"), "--mic", path("mic.wav"), "--out",
                     path("out.wav"), "--attention", "on", "--checkpoint", path("ck.json"),
                     "--m", "4"}),
            kExitOk)
      << err_.str();
}

}  // namespace
}  // namespace astws::cli
