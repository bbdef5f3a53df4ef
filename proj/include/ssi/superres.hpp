#pragma once

#include "ssi/image.hpp"
#include "ssi/optics.hpp"

#include <Eigen/SparseCore>

#include <optional>
#include <ostream>
#include <vector>

namespace ssi::superres {

/// Low-res dims (n1 columns, n2 rows) and integer magnification factors. The high-res
/// grid is (l1 * n1) x (l2 * n2).
struct GridSpec {
  int n1 = 0;
  int n2 = 0;
  int l1 = 1;
  int l2 = 1;

  void validate() const;
  int hr_width() const { return l1 * n1; }
  int hr_height() const { return l2 * n2; }
};

/// Number of distinct values among `values` when values closer than `tolerance` are merged.
int count_distinct(std::vector<double> values, double tolerance);

/// Rejects magnification factors exceeding the number of distinct shift phases per axis.
void check_factors_against_shifts(const GridSpec &grid, const std::vector<ShiftVector> &shifts,
                                  double tolerance = 0.02);

struct SolveOptions {
  std::optional<double> lambda_reg; // default: 0.1 * mean row sum of P^T P
  double cg_tolerance = 1e-8;
  int cg_max_iterations = 2000;
  double sigma = 0.5;
  std::optional<double> truncation_radius; // default: 3 sigma sqrt(l1 l2)

  void validate() const;
  double radius(const GridSpec &grid) const;
};

/// Gaussian weights of every low-res sample against nearby high-res grid points.
/// `weights` holds the raw exp(-d^2 / (2 l1 l2 sigma^2)) values; the operator actually
/// used in the system is diag(row_scale) * weights, whose rows sum to one.
struct SparseWeightMatrix {
  Eigen::SparseMatrix<double, Eigen::RowMajor> weights;
  Eigen::VectorXd row_scale;
  double sigma = 0.5;
  double truncation_radius = 0.0;

  Eigen::Index rows() const { return weights.rows(); }
  Eigen::Index cols() const { return weights.cols(); }

  /// P x with row normalization applied.
  Eigen::VectorXd apply(const Eigen::VectorXd &x) const;
  /// P^T y with row normalization applied.
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd &y) const;
  Eigen::SparseMatrix<double, Eigen::RowMajor> normalized() const;

  /// CSV triplets (row, col, weight) of the normalized operator.
  void write_csv(std::ostream &os) const;
};

/// Position of every low-res pixel of every frame on the continuous high-res grid.
/// `shifts` are registration estimates p (frame pixel u sees template coordinate u - p):
/// pixel (u, v) of frame k lands at ((u - p1) l1 + (l1 - 1)/2, (v - p2) l2 + (l2 - 1)/2).
std::vector<std::vector<Eigen::Vector2d>> map_lr_to_grid(const std::vector<ShiftVector> &shifts,
                                                         const GridSpec &grid);

SparseWeightMatrix build_weight_matrix(const std::vector<ShiftVector> &shifts, const GridSpec &grid,
                                       const SolveOptions &opts = {});

struct LinearSystem {
  Eigen::VectorXd observations; // frame-major, row-major within a frame
  SparseWeightMatrix weights;
};

LinearSystem assemble_system(const optics::LowResStack &stack, const std::vector<ShiftVector> &shifts,
                             const GridSpec &grid, const SolveOptions &opts = {});

struct HighResImage {
  Image image;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  double lambda = 0.0;
};

/// Default Tikhonov weight: 0.1 times the mean row sum of P^T P.
double default_lambda(const SparseWeightMatrix &P);

/// argmin ||P h - L||^2 + lambda ||h||^2 by conjugate gradients on the normal equations.
/// `initial` (optional) seeds the iteration.
HighResImage solve_high_res(const Eigen::VectorXd &observations, const SparseWeightMatrix &P,
                            const GridSpec &grid, const SolveOptions &opts = {},
                            const Eigen::VectorXd *initial = nullptr);

/// Each low-res pixel replicated into an l1 x l2 block.
Image upsample_nearest(const Image &lr, int l1, int l2);

} // namespace ssi::superres
