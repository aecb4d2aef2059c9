#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "headmotion/checkpoint.hpp"
#include "headmotion/manifest.hpp"
#include "headmotion/simulate.hpp"
#include "headmotion/volume_io.hpp"
#include "test_util.hpp"

using namespace headmotion;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

nn::Checkpoint zero_head_model() {
  nn::Checkpoint c;
  c.info.net.block_channels = {2, 4};
  c.info.net.head_channels = 4;
  c.params = nn::init_params(c.info.net);
  for (auto& t : c.params) {
    if (t.name.rfind("out.", 0) == 0) std::fill(t.values.begin(), t.values.end(), 0.0);
  }
  return c;
}

}  // namespace

TEST(Score, IdentityLogPrintsZero) {
  testutil::TempDir dir;
  std::vector<rigid::PoseSample> s;
  for (int i = 0; i < 31; ++i) s.push_back({i / 30.0, rigid::RigidTransform::identity()});
  io::write_tracking_log(rigid::Trajectory(s), dir / "log.csv");
  const auto r = run({"score", "--log", (dir / "log.csv").string(), "--window", "0", "1"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "0.0\n");
  EXPECT_NE(r.err.find("# headmotion"), std::string::npos);
}

TEST(Score, DriftLogAndBands) {
  testutil::TempDir dir;
  sim::TrajectorySpec spec;
  spec.duration = 20.0;
  spec.drift_rate = {0.05, 0.0, 0.0};
  io::write_tracking_log(sim::synth_trajectory(spec), dir / "log.csv");
  const auto r = run({"score", "--log", (dir / "log.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(std::stod(r.out), 0.05, 1e-6);
  const auto b = run({"score", "--log", (dir / "log.csv").string(), "--bands"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(std::count(b.out.begin(), b.out.end(), ','), 3);
}

TEST(Score, MissingOrMalformedLog) {
  testutil::TempDir dir;
  EXPECT_EQ(run({"score", "--log", (dir / "nope.csv").string()}).code, 2);
  write_file(dir / "bad.csv", "time,r11\n0,1\n");
  EXPECT_EQ(run({"score", "--log", (dir / "bad.csv").string()}).code, 2);
  EXPECT_EQ(run({"score"}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
}

TEST(Simulate, RejectsZeroItems) {
  testutil::TempDir dir;
  const auto r = run({"simulate", "--n", "0", "--out", dir.path().string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(std::filesystem::exists(dir / "manifest.csv"));
}

TEST(Simulate, SameSeedSameManifest) {
  testutil::TempDir a, b;
  const std::vector<std::string> common{"--n", "4", "--dims", "16", "--seed", "3", "--duration", "8", "--segments", "8"};
  auto args_a = common, args_b = common;
  args_a.insert(args_a.begin(), {"simulate", "--out", a.path().string()});
  args_b.insert(args_b.begin(), {"simulate", "--out", b.path().string()});
  const auto ra = run(args_a), rb = run(args_b);
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(ra.out, (a / "manifest.csv").string() + "\n");
  EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
  const auto echo = slurp(a / "resolved_config.txt");
  EXPECT_NE(echo.find("seed = 3"), std::string::npos) << echo;
  EXPECT_NE(echo.find("voxel = 2"), std::string::npos) << echo;
  EXPECT_EQ(io::read_manifest(a / "manifest.csv").size(), 4u);
}

TEST(Config, FileSuppliesDefaultsAndCommandLineWins) {
  testutil::TempDir dir;
  write_file(dir / "sim.cfg", "# comment\nn = 3\ndims = 16\nduration = 6\nsegments = 4\nseed = 1\n");
  const auto r = run({"simulate", "--config", (dir / "sim.cfg").string(), "--seed", "2", "--out",
                      (dir / "ds").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_manifest(dir / "ds" / "manifest.csv").size(), 3u);
  const auto echo = slurp(dir / "ds" / "resolved_config.txt");
  EXPECT_NE(echo.find("seed = 2"), std::string::npos);
  // The echo can be replayed as a config file.
  const auto again = run({"simulate", "--config", (dir / "ds" / "resolved_config.txt").string(), "--out",
                          (dir / "ds2").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(slurp(dir / "ds" / "manifest.csv"), slurp(dir / "ds2" / "manifest.csv"));
}

TEST(Config, UnknownKeyIsRejected) {
  testutil::TempDir dir;
  write_file(dir / "bad.cfg", "n = 3\nfrobnicate = 1\n");
  const auto r = run({"simulate", "--config", (dir / "bad.cfg").string(), "--out", (dir / "ds").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("frobnicate"), std::string::npos);
}

TEST(Predict, ZeroHeadPredictsGridMidpoint) {
  testutil::TempDir dir;
  nn::write_checkpoint(zero_head_model(), dir / "m.ckpt");
  io::write_nifti(sim::make_phantom({16, 16, 16}, {2, 2, 2}, 1), dir / "v.nii.gz");
  const auto r = run({"predict", "--checkpoint", (dir / "m.ckpt").string(), "--volume", (dir / "v.nii.gz").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NEAR(std::stod(r.out), 1.56, 1e-12);
}

TEST(Predict, ManifestOrderSplitAndSidecar) {
  testutil::TempDir dir;
  sim::DatasetOptions o;
  o.n = 4;
  o.dims = {16, 16, 16};
  o.duration = 6.0;
  o.segments = 4;
  o.split_counts = std::array<std::size_t, 3>{2, 1, 1};
  const auto m = sim::build_dataset(o, dir / "ds");
  nn::write_checkpoint(zero_head_model(), dir / "m.ckpt");
  const auto out = dir / "pred.csv";
  const auto r = run({"predict", "--checkpoint", (dir / "m.ckpt").string(), "--manifest",
                      (dir / "ds" / "manifest.csv").string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(slurp(out));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "volume,prediction");
  for (const auto& e : m.entries()) {
    ASSERT_TRUE(std::getline(csv, line));
    const auto comma = line.find(',');
    EXPECT_EQ(line.substr(0, comma), e.volume);
    EXPECT_NEAR(std::stod(line.substr(comma + 1)), 1.56, 1e-12);
  }
  EXPECT_FALSE(std::getline(csv, line));
  EXPECT_NE(slurp(dir / "pred.csv.config.txt").find("checkpoint = "), std::string::npos);
  const auto t = run({"predict", "--checkpoint", (dir / "m.ckpt").string(), "--manifest",
                      (dir / "ds" / "manifest.csv").string(), "--split", "train"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(std::count(t.out.begin(), t.out.end(), '\n'), 3);
  EXPECT_EQ(run({"predict", "--checkpoint", (dir / "m.ckpt").string()}).code, 2);
}

TEST(Predict, CorruptCheckpointIsIntegrityError) {
  testutil::TempDir dir;
  nn::write_checkpoint(zero_head_model(), dir / "m.ckpt");
  std::string bytes = slurp(dir / "m.ckpt");
  bytes[bytes.size() / 2] ^= 0x10;
  write_file(dir / "m.ckpt", bytes);
  io::write_nifti(sim::make_phantom({16, 16, 16}, {2, 2, 2}, 1), dir / "v.nii");
  const auto r = run({"predict", "--checkpoint", (dir / "m.ckpt").string(), "--volume", (dir / "v.nii").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("checksum"), std::string::npos) << r.err;
}

TEST(Aes, UniformVolumeIsDomainError) {
  testutil::TempDir dir;
  Volume flat({16, 16, 4}, {1, 1, 1});
  for (auto& x : flat.data()) x = 9;
  io::write_nifti(flat, dir / "flat.nii.gz");
  EXPECT_EQ(run({"aes", "--volume", (dir / "flat.nii.gz").string()}).code, 3);
  Volume step = flat;
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 8; x < 16; ++x) step.at(x, y, z) = 109;
  io::write_nifti(step, dir / "step.nii");
  const auto r = run({"aes", "--volume", (dir / "step.nii").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "50.0\n");
}

class EvaluateTest : public ::testing::Test {
 protected:
  void SetUp() override {
    io::DatasetManifest m;
    for (int i = 0; i < 8; ++i) {
      io::ManifestEntry e;
      e.volume = "v" + std::to_string(i) + ".nii";
      e.motion_score = 0.1 * i + 0.03 * (i % 3);
      e.covariates["age"] = 40.0 + 5.0 * i;
      e.split = i < 5 ? io::Split::Train : io::Split::Test;
      m.add(e);
      scores.push_back(*e.motion_score);
    }
    io::write_manifest(m, dir / "manifest.csv");
  }

  std::string predictions(bool test_only, int drop = -1) {
    std::string csv = "volume,prediction\n";
    for (int i = 0; i < 8; ++i) {
      if (i == drop || (test_only && i < 5)) continue;
      csv += "v" + std::to_string(i) + ".nii," + std::to_string(scores[i]) + "\n";
    }
    return csv;
  }

  testutil::TempDir dir;
  std::vector<double> scores;
};

TEST_F(EvaluateTest, PerfectPredictions) {
  write_file(dir / "p.csv", predictions(false));
  const auto r = run({"evaluate", "--predictions", (dir / "p.csv").string(), "--manifest",
                      (dir / "manifest.csv").string(), "--covariate", "age", "--out", (dir / "rep.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("r2,1,8,\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("spearman_rho,1,8,"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("covariate_rho,1,8,"), std::string::npos) << r.out;
  EXPECT_EQ(slurp(dir / "rep.csv"), r.out);
  EXPECT_TRUE(std::filesystem::exists(dir / "rep.csv.config.txt"));
}

TEST_F(EvaluateTest, UnpredictedSplitIsSkipped) {
  write_file(dir / "p.csv", predictions(true));
  const auto r = run({"evaluate", "--predictions", (dir / "p.csv").string(), "--manifest",
                      (dir / "manifest.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("spearman_rho,1,3,"), std::string::npos) << r.out;
}

TEST_F(EvaluateTest, MissingAndUnknownRows) {
  write_file(dir / "p.csv", predictions(false, 2));
  auto r = run({"evaluate", "--predictions", (dir / "p.csv").string(), "--manifest", (dir / "manifest.csv").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("v2.nii"), std::string::npos) << r.err;
  write_file(dir / "q.csv", predictions(false) + "ghost.nii,0.3\n");
  r = run({"evaluate", "--predictions", (dir / "q.csv").string(), "--manifest", (dir / "manifest.csv").string()});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("ghost.nii"), std::string::npos) << r.err;
}

TEST_F(EvaluateTest, ThresholdLabels) {
  write_file(dir / "p.csv", predictions(false));
  std::string labels = "volume,class\n";
  for (int i = 0; i < 8; ++i) labels += "v" + std::to_string(i) + ".nii," + (scores[i] > 0.4 ? "1" : "0") + "\n";
  write_file(dir / "l.csv", labels);
  const auto r = run({"evaluate", "--predictions", (dir / "p.csv").string(), "--manifest",
                      (dir / "manifest.csv").string(), "--labels", (dir / "l.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("auc,1,8,"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("threshold_accuracy,1,8,"), std::string::npos) << r.out;
}

TEST(Binary, VersionAndExitCode) {
  const std::string tool = HEADMOTION_TOOL;
  FILE* p = popen((tool + " --version").c_str(), "r");
  ASSERT_NE(p, nullptr);
  char buf[128] = {};
  const auto n = fread(buf, 1, sizeof buf - 1, p);
  EXPECT_EQ(pclose(p), 0);
  EXPECT_EQ(std::string(buf, n), std::string(HEADMOTION_VERSION) + "\n");
  const int status = std::system((tool + " score --log /nonexistent/x.csv 2>/dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
}
