#include "ssi/superres.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <stdexcept>
#include <string>

namespace ssi::superres {

void GridSpec::validate() const {
  if (n1 < 1 || n2 < 1 || l1 < 1 || l2 < 1)
    throw std::invalid_argument("grid: dimensions and magnification factors must be positive");
}

int count_distinct(std::vector<double> values, double tolerance) {
  if (values.empty())
    return 0;
  std::sort(values.begin(), values.end());
  int count = 1;
  double anchor = values.front();
  for (double v : values) {
    if (v - anchor > tolerance) {
      ++count;
      anchor = v;
    }
  }
  return count;
}

void check_factors_against_shifts(const GridSpec &grid, const std::vector<ShiftVector> &shifts,
                                  double tolerance) {
  std::vector<double> xs, ys;
  for (const auto &s : shifts) {
    // Only the sub-pixel phase matters for sampling density.
    xs.push_back(s.dx - std::floor(s.dx));
    ys.push_back(s.dy - std::floor(s.dy));
  }
  const int nx = count_distinct(xs, tolerance);
  const int ny = count_distinct(ys, tolerance);
  if (grid.l1 > nx || grid.l2 > ny)
    throw std::invalid_argument("grid: magnification (" + std::to_string(grid.l1) + ", " +
                                std::to_string(grid.l2) + ") exceeds available shift phases (" +
                                std::to_string(nx) + ", " + std::to_string(ny) + ")");
}

void SolveOptions::validate() const {
  if (lambda_reg && !(*lambda_reg >= 0.0))
    throw std::invalid_argument("solve: lambda_reg must be >= 0");
  if (!(cg_tolerance > 0.0))
    throw std::invalid_argument("solve: cg_tolerance must be > 0");
  if (cg_max_iterations < 1)
    throw std::invalid_argument("solve: cg_max_iterations must be >= 1");
  if (!(sigma > 0.0 && sigma <= 1.0))
    throw std::invalid_argument("solve: sigma must lie in (0, 1]");
  if (truncation_radius && !(*truncation_radius > 0.0))
    throw std::invalid_argument("solve: truncation_radius must be > 0");
}

double SolveOptions::radius(const GridSpec &grid) const {
  return truncation_radius ? *truncation_radius
                           : 3.0 * sigma * std::sqrt(static_cast<double>(grid.l1) * grid.l2);
}

Eigen::VectorXd SparseWeightMatrix::apply(const Eigen::VectorXd &x) const {
  return row_scale.cwiseProduct(weights * x);
}

Eigen::VectorXd SparseWeightMatrix::apply_transpose(const Eigen::VectorXd &y) const {
  return weights.transpose() * row_scale.cwiseProduct(y);
}

Eigen::SparseMatrix<double, Eigen::RowMajor> SparseWeightMatrix::normalized() const {
  return row_scale.asDiagonal() * weights;
}

void SparseWeightMatrix::write_csv(std::ostream &os) const {
  os << "row,col,weight\n" << std::setprecision(17);
  for (Eigen::Index r = 0; r < weights.outerSize(); ++r)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(weights, r); it; ++it)
      os << it.row() << ',' << it.col() << ',' << it.value() * row_scale[r] << '\n';
}

std::vector<std::vector<Eigen::Vector2d>> map_lr_to_grid(const std::vector<ShiftVector> &shifts,
                                                         const GridSpec &grid) {
  grid.validate();
  std::vector<std::vector<Eigen::Vector2d>> coords;
  coords.reserve(shifts.size());
  const double cx = 0.5 * (grid.l1 - 1);
  const double cy = 0.5 * (grid.l2 - 1);
  for (const auto &s : shifts) {
    if (!std::isfinite(s.dx) || !std::isfinite(s.dy))
      throw std::invalid_argument("map_lr_to_grid: non-finite shift");
    std::vector<Eigen::Vector2d> frame;
    frame.reserve(static_cast<std::size_t>(grid.n1) * grid.n2);
    for (int v = 0; v < grid.n2; ++v)
      for (int u = 0; u < grid.n1; ++u)
        frame.emplace_back((u - s.dx) * grid.l1 + cx, (v - s.dy) * grid.l2 + cy);
    coords.push_back(std::move(frame));
  }
  return coords;
}

SparseWeightMatrix build_weight_matrix(const std::vector<ShiftVector> &shifts, const GridSpec &grid,
                                       const SolveOptions &opts) {
  if (shifts.empty())
    throw std::invalid_argument("build_weight_matrix: need at least one frame");
  grid.validate();
  opts.validate();
  const auto coords = map_lr_to_grid(shifts, grid);
  const double radius = opts.radius(grid);
  const double r2 = radius * radius;
  const double inv_two_var = 1.0 / (2.0 * grid.l1 * grid.l2 * opts.sigma * opts.sigma);
  const int W = grid.hr_width();
  const int H = grid.hr_height();
  const Eigen::Index rows = static_cast<Eigen::Index>(shifts.size()) * grid.n1 * grid.n2;
  const Eigen::Index cols = Eigen::Index(W) * H;

  SparseWeightMatrix P;
  P.sigma = opts.sigma;
  P.truncation_radius = radius;
  P.weights.resize(rows, cols);
  const double per_row = M_PI * (radius + 1.0) * (radius + 1.0);
  P.weights.reserve(static_cast<Eigen::Index>(per_row * static_cast<double>(rows)));
  P.row_scale.resize(rows);

  Eigen::Index row = 0;
  for (const auto &frame : coords) {
    for (const auto &c : frame) {
      P.weights.startVec(row);
      const int y_lo = std::max(0, static_cast<int>(std::ceil(c.y() - radius)));
      const int y_hi = std::min(H - 1, static_cast<int>(std::floor(c.y() + radius)));
      const int x_lo = std::max(0, static_cast<int>(std::ceil(c.x() - radius)));
      const int x_hi = std::min(W - 1, static_cast<int>(std::floor(c.x() + radius)));
      double sum = 0.0;
      for (int y = y_lo; y <= y_hi; ++y) {
        const double dy = y - c.y();
        for (int x = x_lo; x <= x_hi; ++x) {
          const double dx = x - c.x();
          const double d2 = dx * dx + dy * dy;
          if (d2 > r2)
            continue;
          const double w = std::exp(-d2 * inv_two_var);
          P.weights.insertBack(row, Eigen::Index(y) * W + x) = w;
          sum += w;
        }
      }
      if (!(sum > 0.0))
        throw std::logic_error("build_weight_matrix: low-res sample " + std::to_string(row) +
                               " has no high-res neighbours within the truncation radius");
      P.row_scale[row] = 1.0 / sum;
      ++row;
    }
  }
  P.weights.finalize();
  return P;
}

LinearSystem assemble_system(const optics::LowResStack &stack, const std::vector<ShiftVector> &shifts,
                             const GridSpec &grid, const SolveOptions &opts) {
  stack.validate();
  grid.validate();
  if (shifts.size() != stack.frames.size())
    throw std::invalid_argument("assemble_system: " + std::to_string(shifts.size()) + " shifts for " +
                                std::to_string(stack.frames.size()) + " frames");
  const auto &first = stack.frames.front();
  if (first.width() != grid.n1 || first.height() != grid.n2)
    throw std::invalid_argument("assemble_system: frame dimensions do not match the grid");

  const Eigen::Index per_frame = Eigen::Index(grid.n1) * grid.n2;
  LinearSystem sys;
  sys.observations.resize(per_frame * static_cast<Eigen::Index>(stack.frames.size()));
  for (std::size_t k = 0; k < stack.frames.size(); ++k)
    sys.observations.segment(static_cast<Eigen::Index>(k) * per_frame, per_frame) =
        Eigen::Map<const Eigen::VectorXd>(stack.frames[k].pixels.data(), per_frame);
  sys.weights = build_weight_matrix(shifts, grid, opts);
  return sys;
}

double default_lambda(const SparseWeightMatrix &P) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(P.cols());
  return 0.1 * P.apply_transpose(P.apply(ones)).mean();
}

HighResImage solve_high_res(const Eigen::VectorXd &observations, const SparseWeightMatrix &P,
                            const GridSpec &grid, const SolveOptions &opts,
                            const Eigen::VectorXd *initial) {
  opts.validate();
  grid.validate();
  if (observations.size() != P.rows())
    throw std::invalid_argument("solve_high_res: observation count does not match P");
  if (P.cols() != Eigen::Index(grid.hr_width()) * grid.hr_height())
    throw std::invalid_argument("solve_high_res: P columns do not match the high-res grid");

  const double lambda = opts.lambda_reg ? *opts.lambda_reg : default_lambda(P);
  const auto normal = [&](const Eigen::VectorXd &v) -> Eigen::VectorXd {
    return P.apply_transpose(P.apply(v)) + lambda * v;
  };

  const Eigen::VectorXd b = P.apply_transpose(observations);
  Eigen::VectorXd x = initial ? *initial : Eigen::VectorXd::Zero(P.cols());
  if (x.size() != P.cols())
    throw std::invalid_argument("solve_high_res: initial guess has the wrong size");

  const double b_norm = b.norm();
  HighResImage out;
  out.lambda = lambda;
  Eigen::VectorXd r = b - normal(x);
  if (b_norm == 0.0) {
    x.setZero();
    out.converged = true;
  } else {
    const double threshold = opts.cg_tolerance * b_norm;
    Eigen::VectorXd d = r;
    double rr = r.squaredNorm();
    int it = 0;
    while (it < opts.cg_max_iterations) {
      if (std::sqrt(rr) <= threshold) {
        // Confirm against the true residual; restart from it if the recursion drifted.
        r = b - normal(x);
        rr = r.squaredNorm();
        if (std::sqrt(rr) <= threshold)
          break;
        d = r;
      }
      const Eigen::VectorXd q = normal(d);
      const double alpha = rr / d.dot(q);
      x += alpha * d;
      r -= alpha * q;
      const double rr_new = r.squaredNorm();
      d = r + (rr_new / rr) * d;
      rr = rr_new;
      ++it;
    }
    out.iterations = it;
    out.relative_residual = (b - normal(x)).norm() / b_norm;
    out.converged = out.relative_residual <= opts.cg_tolerance;
  }
  if (b_norm == 0.0)
    out.relative_residual = 0.0;

  out.image = Image(grid.hr_width(), grid.hr_height());
  out.image.pixels = Eigen::Map<const Raster<double>>(x.data(), grid.hr_height(), grid.hr_width());
  return out;
}

Image upsample_nearest(const Image &lr, int l1, int l2) {
  if (l1 < 1 || l2 < 1)
    throw std::invalid_argument("upsample_nearest: factors must be >= 1");
  Image out(lr.width() * l1, lr.height() * l2, lr.pixel_pitch / l1);
  for (Eigen::Index y = 0; y < out.height(); ++y)
    for (Eigen::Index x = 0; x < out.width(); ++x)
      out.pixels(y, x) = lr.pixels(y / l2, x / l1);
  return out;
}

} // namespace ssi::superres
