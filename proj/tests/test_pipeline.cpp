#include "ssi/io.hpp"
#include "ssi/pipeline.hpp"

#include <gtest/gtest.h>
#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <fstream>

namespace ssi::pipeline {
namespace {

// 192 px scene, 32x32 basis (6 scene px per low-res px), 2x2 array half a pixel apart.
// Bar periods stay well above the low-res Nyquist limit so registration is not biased by aliasing.
constexpr const char *kSmall = R"(
seed: 11
scene:
  side: 192
  groups:
    - {period: 24, orientation: vertical, bar_count: 3, rect: [16, 16, 72, 72]}
    - {period: 36, orientation: horizontal, bar_count: 2, rect: [100, 100, 80, 80]}
array: {rows: 2, cols: 2, pitch_mm: 6.3}
spi: {basis_side: 32}
registration: {presmooth_sigma: 1.0}
)";

class PipelineTest : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ssi_pipe_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  config::PipelineConfig small(const std::string &sub = "run") const {
    auto cfg = config::parse_config(kSmall);
    cfg.out_dir = dir_ / sub;
    return cfg;
  }

  fs::path dir_;
};

TEST_F(PipelineTest, StagesComposeOnSmallScene) {
  const auto cfg = small();
  const Scene scene = make_scene(cfg);
  ASSERT_TRUE(scene.target.has_value());
  EXPECT_EQ(downsample_factor(cfg, scene.image), 6);
  const auto stack = simulate(cfg, scene.image);
  ASSERT_EQ(stack.frames.size(), 4u);
  EXPECT_EQ(stack.frames[0].width(), 32);

  const auto est = register_stack(cfg, stack);
  ASSERT_EQ(est.size(), 4u);
  const auto &truth = *stack.true_shifts;
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_TRUE(est[k].converged) << k;
    EXPECT_NEAR(est[k].p.x(), truth[k].dx - truth[0].dx, 0.05) << k;
    EXPECT_NEAR(est[k].p.y(), truth[k].dy - truth[0].dy, 0.05) << k;
  }

  const auto syn = synthesize(cfg, stack, est);
  EXPECT_EQ(syn.grid.hr_width(), 64);
  EXPECT_EQ(syn.used_frames.size(), 4u);
  EXPECT_TRUE(syn.hr.converged);
  EXPECT_LT(syn.residual_norm, syn.initial_residual_norm);
}

TEST_F(PipelineTest, NonConvergedFramesAreLeftOut) {
  const auto cfg = small();
  const auto stack = simulate(cfg, make_scene(cfg).image);
  auto est = register_stack(cfg, stack);
  est[2].converged = false;
  const auto syn = synthesize(cfg, stack, est);
  EXPECT_EQ(syn.used_frames, (std::vector<int>{0, 1, 3}));
  for (auto &e : est)
    e.converged = false;
  EXPECT_THROW(synthesize(cfg, stack, est), std::runtime_error);
  est.pop_back();
  EXPECT_THROW(synthesize(cfg, stack, est), std::invalid_argument);
}

TEST_F(PipelineTest, StackRoundTrip) {
  const auto cfg = small();
  const auto stack = simulate(cfg, make_scene(cfg).image);
  write_stack(dir_ / "stack", stack, 6);
  const auto back = read_stack(dir_ / "stack");
  ASSERT_EQ(back.frames.size(), stack.frames.size());
  EXPECT_EQ(back.template_index, stack.template_index);
  ASSERT_TRUE(back.true_shifts.has_value());
  for (std::size_t k = 0; k < stack.frames.size(); ++k) {
    EXPECT_EQ(back.frames[k].pixels, stack.frames[k].pixels.cast<float>().cast<double>());
    EXPECT_EQ(back.frames[k].pixel_pitch, stack.frames[k].pixel_pitch);
    EXPECT_EQ((*back.true_shifts)[k], (*stack.true_shifts)[k]);
  }
  std::ofstream(dir_ / "stack" / "stack.yaml") << "frames: [missing.ssif]\n";
  EXPECT_THROW(read_stack(dir_ / "stack"), std::runtime_error);
  std::ofstream(dir_ / "stack" / "stack.yaml") << "frames: {a: 1}\n";
  EXPECT_THROW(read_stack(dir_ / "stack"), io::FormatError);
}

TEST_F(PipelineTest, LockIsExclusiveAndReleased) {
  {
    DirectoryLock lock(dir_);
    EXPECT_TRUE(fs::exists(dir_ / ".ssi.lock"));
    EXPECT_THROW(DirectoryLock second(dir_), std::runtime_error);
    auto cfg = small();
    cfg.out_dir = dir_;
    try {
      run_pipeline(cfg);
      FAIL() << "expected StageError";
    } catch (const StageError &e) {
      EXPECT_EQ(e.stage(), "output");
    }
  }
  EXPECT_FALSE(fs::exists(dir_ / ".ssi.lock"));
  EXPECT_NO_THROW(DirectoryLock again(dir_));
}

TEST_F(PipelineTest, RunWritesReportAndArtifacts) {
  const auto report = run_pipeline(small());
  EXPECT_EQ(report.seed, 11u);
  EXPECT_EQ(report.factor, 6);
  EXPECT_LT(report.max_shift_error, 0.05);
  ASSERT_TRUE(report.psnr_hr.has_value());
  EXPECT_GT(*report.psnr_hr, *report.psnr_nearest);
  ASSERT_EQ(report.contrasts.size(), 2u);
  EXPECT_DOUBLE_EQ(report.contrasts[0].period_lr, 4.0);
  EXPECT_DOUBLE_EQ(report.contrasts[1].period_lr, 6.0);
  for (const auto &c : report.contrasts)
    EXPECT_GE(c.lr_max, c.lr_min);

  const fs::path run = dir_ / "run";
  EXPECT_FALSE(fs::exists(run / ".ssi.lock"));
  for (const auto &[file, digest] : report.artifacts)
    EXPECT_EQ(io::file_digest(run / file), digest) << file;

  const YAML::Node doc = YAML::LoadFile(report.report_path.string());
  for (const char *key : {"seed", "config", "stack", "shifts", "max_shift_error", "superres", "metrics", "artifacts"})
    EXPECT_TRUE(doc[key]) << key;
  EXPECT_EQ(doc["shifts"].size(), 4u);
  EXPECT_EQ(doc["superres"]["hr_width"].as<int>(), 64);
  EXPECT_EQ(doc["metrics"]["contrast"].size(), 2u);
  // The echoed config parses back.
  EXPECT_NO_THROW(config::parse_config(YAML::Dump(doc["config"])));
}

TEST_F(PipelineTest, RunsAreDeterministicAndSeedMatters) {
  auto noisy = [&](const std::string &sub, std::uint64_t seed) {
    auto cfg = small(sub);
    cfg.seed = seed;
    cfg.spi.noise.model = config::NoiseConfig::Model::gaussian;
    cfg.spi.noise.snr_db = 30.0;
    return run_pipeline(cfg).artifacts;
  };
  const auto a = noisy("a", 5);
  const auto b = noisy("b", 5);
  const auto c = noisy("c", 6);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST_F(PipelineTest, SingleDetectorReproducesItsFrame) {
  auto cfg = small();
  cfg.array = {1, 1, 6.3, 1};
  cfg.superres.options.lambda_reg = 0.0;
  cfg.superres.options.truncation_radius = 0.5; // P is the identity once neighbours are cut off
  const auto report = run_pipeline(cfg);
  const Image lr = io::read_ssif(cfg.out_dir / "stack" / "frame_000.ssif");
  const Image hr = io::read_ssif(cfg.out_dir / "hr.ssif");
  ASSERT_EQ(hr.width(), lr.width());
  EXPECT_LT((hr.pixels - lr.pixels).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(report.synthesis.nonzeros, lr.pixels.size());
}

TEST_F(PipelineTest, FailureKeepsEarlierArtifacts) {
  auto cfg = small();
  cfg.superres.l1 = 3;
  cfg.superres.l2 = 3;
  EXPECT_THROW(run_pipeline(cfg), StageError);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "scene.ssif"));
  EXPECT_TRUE(fs::exists(cfg.out_dir / "stack" / "stack.yaml"));
  EXPECT_TRUE(fs::exists(cfg.out_dir / "shifts.csv"));
  EXPECT_FALSE(fs::exists(cfg.out_dir / "hr.ssif"));
  EXPECT_FALSE(fs::exists(cfg.out_dir / ".ssi.lock"));
}

TEST_F(PipelineTest, FailuresAreTaggedWithStage) {
  auto cfg = small();
  cfg.spi.options.basis_side = 128; // 192 is not divisible by 128
  try {
    run_pipeline(cfg);
    FAIL() << "expected StageError";
  } catch (const StageError &e) {
    EXPECT_EQ(e.stage(), "simulate");
  }

  cfg = small();
  cfg.superres.l1 = 3; // two columns of phases cannot support a factor of 3
  cfg.superres.l2 = 3;
  try {
    run_pipeline(cfg);
    FAIL() << "expected StageError";
  } catch (const StageError &e) {
    EXPECT_EQ(e.stage(), "superres");
  }

  cfg = small();
  cfg.superres.options.sigma = -1.0;
  try {
    run_pipeline(cfg);
    FAIL() << "expected StageError";
  } catch (const StageError &e) {
    EXPECT_EQ(e.stage(), "config");
  }
}

} // namespace
} // namespace ssi::pipeline
