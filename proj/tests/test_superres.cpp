#include "ssi/superres.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <random>
#include <sstream>

namespace ssi::superres {
namespace {

using RowIt = Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator;

const std::vector<ShiftVector> kHalfShifts{{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.5}, {0.5, 0.5}};

Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return Eigen::VectorXd::NullaryExpr(n, [&] { return unit(rng); });
}

Eigen::VectorXd dense_solve(const SparseWeightMatrix &P, const Eigen::VectorXd &obs, double lambda) {
  const Eigen::MatrixXd Pn(P.normalized());
  const Eigen::MatrixXd A = Pn.transpose() * Pn + lambda * Eigen::MatrixXd::Identity(Pn.cols(), Pn.cols());
  return A.ldlt().solve(Pn.transpose() * obs);
}

Eigen::VectorXd flatten(const Image &img) {
  return Eigen::Map<const Eigen::VectorXd>(img.pixels.data(), img.pixels.size());
}

TEST(Grid, MappingConventions) {
  const auto identity = map_lr_to_grid({{0.0, 0.0}}, GridSpec{3, 2, 1, 1});
  ASSERT_EQ(identity[0].size(), 6u);
  EXPECT_EQ(identity[0][4], Eigen::Vector2d(1.0, 1.0));

  const auto centroid = map_lr_to_grid({{0.0, 0.0}}, GridSpec{2, 2, 2, 2});
  EXPECT_EQ(centroid[0][0], Eigen::Vector2d(0.5, 0.5));

  // A frame registered at p sees template coordinate u - p, so its samples move by -p l.
  const auto sixth = map_lr_to_grid({{0.0, 0.0}, {1.0 / 6.0, 0.0}}, GridSpec{4, 4, 6, 6});
  for (std::size_t i = 0; i < sixth[0].size(); ++i) {
    EXPECT_NEAR(sixth[0][i].x() - sixth[1][i].x(), 1.0, 1e-12);
    EXPECT_EQ(sixth[0][i].y(), sixth[1][i].y());
  }
  EXPECT_THROW(map_lr_to_grid({{NAN, 0.0}}, GridSpec{2, 2, 1, 1}), std::invalid_argument);
}

TEST(Grid, FactorsLimitedByPhases) {
  const std::vector<ShiftVector> two{{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.5}, {0.5, 0.5}};
  EXPECT_NO_THROW(check_factors_against_shifts(GridSpec{4, 4, 2, 2}, two));
  EXPECT_THROW(check_factors_against_shifts(GridSpec{4, 4, 3, 2}, two), std::invalid_argument);
  // Phases wrap: 1.5 and 0.5 are the same phase.
  EXPECT_THROW(check_factors_against_shifts(GridSpec{4, 4, 2, 1}, {{0.5, 0.0}, {1.5, 0.0}}),
               std::invalid_argument);
  EXPECT_EQ(count_distinct({0.0, 0.01, 0.5, 0.51, 0.9}, 0.02), 3);
  EXPECT_EQ(count_distinct({}, 0.02), 0);
}

TEST(Weights, PeakAndUnitDistance) {
  SolveOptions opts;
  opts.sigma = 0.5;
  const auto P = build_weight_matrix({{0.0, 0.0}}, GridSpec{5, 5, 1, 1}, opts);
  // Pixel (2, 2) has itself at d = 0 and its four neighbours at d = 1.
  const Eigen::Index row = 12;
  EXPECT_EQ(P.weights.coeff(row, 12), 1.0);
  EXPECT_NEAR(P.weights.coeff(row, 13), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(P.weights.coeff(row, 7), 0.1353352832366127, 1e-15);
}

TEST(Weights, MatchDirectEvaluation) {
  const GridSpec grid{4, 4, 2, 2};
  SolveOptions opts;
  const auto P = build_weight_matrix(kHalfShifts, grid, opts);
  const double var = grid.l1 * grid.l2 * opts.sigma * opts.sigma;
  const double radius = opts.radius(grid);
  Eigen::Index present = 0;
  for (std::size_t k = 0; k < kHalfShifts.size(); ++k)
    for (int v = 0; v < 4; ++v)
      for (int u = 0; u < 4; ++u) {
        const double cx = (u - kHalfShifts[k].dx) * 2 + 0.5;
        const double cy = (v - kHalfShifts[k].dy) * 2 + 0.5;
        const Eigen::Index row = static_cast<Eigen::Index>(k) * 16 + v * 4 + u;
        for (int j = 0; j < 8; ++j)
          for (int i = 0; i < 8; ++i) {
            const double d2 = (i - cx) * (i - cx) + (j - cy) * (j - cy);
            const double stored = P.weights.coeff(row, j * 8 + i);
            if (d2 <= radius * radius) {
              ++present;
              EXPECT_NEAR(stored, std::exp(-d2 / (2.0 * var)), 1e-12);
            } else {
              EXPECT_EQ(stored, 0.0);
            }
          }
      }
  EXPECT_EQ(P.weights.nonZeros(), present);
}

TEST(Weights, RowInvariants) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> comp(-0.5, 0.5);
  std::vector<ShiftVector> shifts;
  for (int i = 0; i < 9; ++i)
    shifts.push_back({comp(rng), comp(rng)});
  for (double sigma : {0.2, 0.5, 1.0}) {
    SolveOptions opts;
    opts.sigma = sigma;
    const GridSpec grid{6, 5, 3, 3};
    const auto P = build_weight_matrix(shifts, grid, opts);
    const auto coords = map_lr_to_grid(shifts, grid);
    const double bound = M_PI * (P.truncation_radius + 1.0) * (P.truncation_radius + 1.0);
    const Eigen::VectorXd row_sums = P.normalized() * Eigen::VectorXd::Ones(P.cols());
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      const auto &c = coords[static_cast<std::size_t>(r / 30)][static_cast<std::size_t>(r % 30)];
      std::vector<std::pair<double, double>> by_distance;
      int count = 0;
      for (RowIt it(P.weights, r); it; ++it, ++count) {
        EXPECT_GT(it.value(), 0.0);
        EXPECT_LE(it.value(), 1.0);
        const double x = static_cast<double>(it.col() % grid.hr_width());
        const double y = static_cast<double>(it.col() / grid.hr_width());
        const double d = std::hypot(x - c.x(), y - c.y());
        EXPECT_LE(d, P.truncation_radius);
        by_distance.emplace_back(d, it.value());
      }
      EXPECT_GE(count, 1);
      EXPECT_LE(count, bound);
      EXPECT_NEAR(row_sums[r], 1.0, 1e-12);
      std::sort(by_distance.begin(), by_distance.end());
      for (std::size_t i = 1; i < by_distance.size(); ++i)
        if (by_distance[i].first > by_distance[i - 1].first + 1e-12)
          EXPECT_LT(by_distance[i].second, by_distance[i - 1].second);
    }
  }
}

TEST(Weights, CoincidentSamplesShareRows) {
  // Frame 1 registered one pixel over: its pixel u + 1 lands where frame 0's pixel u does.
  const GridSpec grid{5, 5, 2, 2};
  const auto P = build_weight_matrix({{0.0, 0.0}, {1.0, 0.0}}, grid);
  for (int v = 0; v < 5; ++v)
    for (int u = 0; u < 4; ++u) {
      const Eigen::VectorXd a = Eigen::VectorXd(P.weights.row(v * 5 + u).transpose());
      const Eigen::VectorXd b = Eigen::VectorXd(P.weights.row(25 + v * 5 + u + 1).transpose());
      EXPECT_EQ(a, b);
      EXPECT_EQ(P.row_scale[v * 5 + u], P.row_scale[25 + v * 5 + u + 1]);
    }
}

TEST(Weights, EmptyRowIsAnError) {
  SolveOptions opts;
  opts.truncation_radius = 0.2;
  EXPECT_THROW(build_weight_matrix({{0.5, 0.5}}, GridSpec{3, 3, 1, 1}, opts), std::logic_error);
  EXPECT_THROW(build_weight_matrix({}, GridSpec{3, 3, 1, 1}), std::invalid_argument);
}

TEST(Weights, CsvExportIsNormalized) {
  const auto P = build_weight_matrix({{0.0, 0.0}}, GridSpec{2, 2, 1, 1});
  std::ostringstream os;
  P.write_csv(os);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "row,col,weight");
  std::vector<double> sums(4, 0.0);
  while (std::getline(in, line)) {
    int r = 0, c = 0;
    double w = 0.0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%d,%d,%lf", &r, &c, &w), 3);
    sums[static_cast<std::size_t>(r)] += w;
  }
  for (double s : sums)
    EXPECT_NEAR(s, 1.0, 1e-15);
}

TEST(System, ObservationOrder) {
  optics::LowResStack stack;
  Image f(2, 2);
  f.pixels << 1, 2, 3, 4;
  stack.frames = {f};
  const auto one = assemble_system(stack, {{0.0, 0.0}}, GridSpec{2, 2, 1, 1});
  EXPECT_EQ(one.observations, Eigen::Vector4d(1, 2, 3, 4));

  stack.frames = {f, f};
  const auto two = assemble_system(stack, {{0.0, 0.0}, {0.0, 0.0}}, GridSpec{2, 2, 1, 1});
  ASSERT_EQ(two.observations.size(), 8);
  EXPECT_EQ(two.observations.head(4), two.observations.tail(4));
  EXPECT_EQ(two.weights.rows(), 8);

  EXPECT_THROW(assemble_system(stack, {{0.0, 0.0}}, GridSpec{2, 2, 1, 1}), std::invalid_argument);
  EXPECT_THROW(assemble_system(stack, {{0.0, 0.0}, {0.0, 0.0}}, GridSpec{3, 2, 1, 1}), std::invalid_argument);
}

TEST(Solve, IdentitySystemReturnsFrame) {
  // With the support cut below one pixel P is exactly the identity.
  SolveOptions opts;
  opts.lambda_reg = 0.0;
  opts.truncation_radius = 0.5;
  const GridSpec grid{6, 6, 1, 1};
  const Eigen::VectorXd frame = random_vector(36, 1);
  const auto P = build_weight_matrix({{0.0, 0.0}}, grid, opts);
  const auto h = solve_high_res(frame, P, grid, opts);
  EXPECT_TRUE(h.converged);
  EXPECT_LE((flatten(h.image) - frame).norm(), 1e-8 * frame.norm());
}

TEST(Solve, MatchesDenseSolve) {
  const GridSpec grid{4, 4, 2, 2};
  for (std::optional<double> lambda : {std::optional<double>{}, std::optional<double>{1e-3}, std::optional<double>{0.1}}) {
    SolveOptions opts;
    opts.lambda_reg = lambda;
    opts.cg_tolerance = 1e-13;
    const auto P = build_weight_matrix(kHalfShifts, grid, opts);
    const Eigen::VectorXd obs = random_vector(P.rows(), 2);
    const auto h = solve_high_res(obs, P, grid, opts);
    const Eigen::VectorXd dense = dense_solve(P, obs, h.lambda);
    EXPECT_LE((flatten(h.image) - dense).norm(), 1e-8 * dense.norm()) << h.lambda;
  }
}

TEST(Solve, UnregularizedSolveSatisfiesNormalEquations) {
  // Without regularization this instance has cond(P^T P) near 1e9, so solutions can only be
  // compared through the normal-equation residual.
  const GridSpec grid{4, 4, 2, 2};
  SolveOptions opts;
  opts.lambda_reg = 0.0;
  opts.cg_tolerance = 1e-13;
  const auto P = build_weight_matrix(kHalfShifts, grid, opts);
  const Eigen::VectorXd obs = random_vector(P.rows(), 2);
  const auto h = solve_high_res(obs, P, grid, opts);
  EXPECT_TRUE(h.converged);
  const Eigen::VectorXd b = P.apply_transpose(obs);
  const Eigen::VectorXd x = flatten(h.image);
  EXPECT_LE((P.apply_transpose(P.apply(x)) - b).norm(), 1e-12 * b.norm());
}

TEST(Solve, MatchesDenseSolveOnRandomInstances) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> comp(-0.5, 0.5);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<ShiftVector> shifts;
    for (int i = 0; i < 6; ++i)
      shifts.push_back({comp(rng), comp(rng)});
    const GridSpec grid{8, 8, 3, 2};
    SolveOptions opts;
    opts.cg_tolerance = 1e-13;
    const auto P = build_weight_matrix(shifts, grid, opts);
    const Eigen::VectorXd obs = random_vector(P.rows(), 10 + trial);
    const auto h = solve_high_res(obs, P, grid, opts);
    const Eigen::VectorXd dense = dense_solve(P, obs, h.lambda);
    EXPECT_LE((flatten(h.image) - dense).norm(), 1e-8 * dense.norm());
    EXPECT_EQ(h.lambda, default_lambda(P));

    // The solve does not fit the data worse than the nearest-neighbour template.
    Image templ(8, 8);
    templ.pixels = Eigen::Map<const Raster<double>>(obs.data(), 8, 8);
    const Eigen::VectorXd h0 = flatten(upsample_nearest(templ, 3, 2));
    EXPECT_LE((P.apply(flatten(h.image)) - obs).norm(), (P.apply(h0) - obs).norm());
  }
}

TEST(Solve, InitialGuessDoesNotChangeTheAnswer) {
  const GridSpec grid{4, 4, 2, 2};
  SolveOptions opts;
  opts.cg_tolerance = 1e-13;
  const auto P = build_weight_matrix(kHalfShifts, grid, opts);
  const Eigen::VectorXd obs = random_vector(P.rows(), 5);
  const Eigen::VectorXd guess = random_vector(P.cols(), 6);
  const auto a = solve_high_res(obs, P, grid, opts);
  const auto b = solve_high_res(obs, P, grid, opts, &guess);
  EXPECT_LE((flatten(a.image) - flatten(b.image)).norm(), 1e-9 * flatten(a.image).norm());
  const Eigen::VectorXd wrong = Eigen::VectorXd::Zero(3);
  EXPECT_THROW(solve_high_res(obs, P, grid, opts, &wrong), std::invalid_argument);
}

TEST(Solve, NonConvergenceIsReported) {
  const GridSpec grid{8, 8, 2, 2};
  SolveOptions opts;
  opts.cg_max_iterations = 1;
  opts.lambda_reg = 0.0;
  const auto P = build_weight_matrix(kHalfShifts, grid, opts);
  const auto h = solve_high_res(random_vector(P.rows(), 7), P, grid, opts);
  EXPECT_FALSE(h.converged);
  EXPECT_EQ(h.iterations, 1);
  EXPECT_GT(h.relative_residual, opts.cg_tolerance);
}

TEST(Solve, ZeroObservationsGiveZeroImage) {
  const GridSpec grid{4, 4, 2, 2};
  const auto P = build_weight_matrix(kHalfShifts, grid);
  const auto h = solve_high_res(Eigen::VectorXd::Zero(P.rows()), P, grid);
  EXPECT_TRUE(h.converged);
  EXPECT_EQ(h.image.pixels.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Solve, RejectsInvalidOptions) {
  SolveOptions opts;
  opts.sigma = 1.5;
  EXPECT_THROW(opts.validate(), std::invalid_argument);
  opts.sigma = 0.5;
  opts.lambda_reg = -1.0;
  EXPECT_THROW(opts.validate(), std::invalid_argument);
}

TEST(Upsample, ReplicatesBlocks) {
  Image lr(2, 2, 6.0);
  lr.pixels << 1, 2, 3, 4;
  const Image up = upsample_nearest(lr, 3, 2);
  ASSERT_EQ(up.width(), 6);
  ASSERT_EQ(up.height(), 4);
  EXPECT_EQ(up.pixel_pitch, 2.0);
  EXPECT_EQ(up.pixels(0, 2), 1.0);
  EXPECT_EQ(up.pixels(1, 3), 2.0);
  EXPECT_EQ(up.pixels(2, 0), 3.0);
  EXPECT_EQ(up.pixels(3, 5), 4.0);
}

} // namespace
} // namespace ssi::superres
